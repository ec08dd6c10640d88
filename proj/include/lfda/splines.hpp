#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lfda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Clamped B-spline basis on a closed interval.
///
/// The full knot vector repeats each boundary `degree + 1` times, so the
/// basis dimension is `interior_knots.size() + degree + 1`. Interior knots
/// may repeat.
struct BasisConfig {
  int degree = 3;
  std::vector<double> interior_knots;
  double lo = 0.0;
  double hi = 1.0;

  std::size_t dimension() const { return interior_knots.size() + static_cast<std::size_t>(degree) + 1; }
  std::vector<double> knot_vector() const;

  /// Throws ArgumentError when the configuration is unusable.
  void validate() const;

  /// `dimension` functions of the given degree with equally spaced interior knots.
  static BasisConfig uniform(int degree, std::size_t dimension, double lo = 0.0, double hi = 1.0);
};

/// Rows are evaluation points, columns basis functions. Every row is a
/// partition of unity with at most degree + 1 nonzeros.
Matrix build_basis(const BasisConfig& config, std::span<const double> points);

/// Tensor-product evaluation row for one (s, t) pair.
///
/// Coefficient matrices are vectorized column-major, so entry m + p1 * l of
/// the result equals b1[m] * b2[l]; equivalently the result is kron(b2, b1).
/// Reshaped to p1 x p2 it is the outer product b1 * b2^T.
Vector tensor_row(const Vector& b1_row, const Vector& b2_row);

/// Design matrix whose row j + n_s * k is tensor_row(B1.row(j), B2.row(k)).
Matrix tensor_design(const Matrix& B1, const Matrix& B2);

/// f(s_j, t_k) = B1(s_j)^T theta B2(t_k), returned as an n_s x n_t matrix.
Matrix eval_surface(const Matrix& theta, const Matrix& B1, const Matrix& B2);

}  // namespace lfda
