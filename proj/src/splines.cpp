#include "lfda/splines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <unsupported/Eigen/KroneckerProduct>

#include "lfda/errors.hpp"

namespace lfda {

std::vector<double> BasisConfig::knot_vector() const {
  std::vector<double> knots;
  knots.reserve(interior_knots.size() + 2 * (degree + 1));
  knots.insert(knots.end(), degree + 1, lo);
  knots.insert(knots.end(), interior_knots.begin(), interior_knots.end());
  knots.insert(knots.end(), degree + 1, hi);
  return knots;
}

void BasisConfig::validate() const {
  if (degree < 0) throw ArgumentError("spline degree must be >= 0");
  if (!(lo < hi)) throw ArgumentError("spline domain requires lo < hi");
  if (interior_knots.empty()) throw ArgumentError("spline basis needs at least one interior knot");
  for (std::size_t i = 0; i < interior_knots.size(); ++i) {
    const double k = interior_knots[i];
    if (!(k > lo && k < hi))
      throw ArgumentError("interior knot " + std::to_string(k) + " outside (lo, hi)");
    if (i > 0 && k < interior_knots[i - 1]) throw ArgumentError("interior knots must be nondecreasing");
  }
  // A knot repeated more than degree + 1 times would split the basis.
  std::size_t run = 1;
  for (std::size_t i = 1; i < interior_knots.size(); ++i) {
    run = interior_knots[i] == interior_knots[i - 1] ? run + 1 : 1;
    if (run > static_cast<std::size_t>(degree) + 1)
      throw ArgumentError("interior knot multiplicity exceeds degree + 1");
  }
}

BasisConfig BasisConfig::uniform(int degree, std::size_t dimension, double lo, double hi) {
  if (degree < 0 || dimension < static_cast<std::size_t>(degree) + 2)
    throw ArgumentError("uniform basis needs dimension >= degree + 2");
  BasisConfig cfg;
  cfg.degree = degree;
  cfg.lo = lo;
  cfg.hi = hi;
  const std::size_t n_interior = dimension - degree - 1;
  for (std::size_t i = 1; i <= n_interior; ++i)
    cfg.interior_knots.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_interior + 1));
  return cfg;
}

Matrix build_basis(const BasisConfig& config, std::span<const double> points) {
  config.validate();
  if (points.empty()) throw ArgumentError("build_basis needs at least one evaluation point");

  const int deg = config.degree;
  const std::vector<double> knots = config.knot_vector();
  const std::size_t p = config.dimension();
  Matrix basis = Matrix::Zero(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(p));

  std::vector<double> left(deg + 1), right(deg + 1), values(deg + 1);
  for (std::size_t r = 0; r < points.size(); ++r) {
    const double x = points[r];
    if (!(x >= config.lo && x <= config.hi))
      throw DomainError("evaluation point " + std::to_string(x) + " outside spline domain");

    // Knot span: knots[span] <= x < knots[span + 1]; the right endpoint
    // belongs to the last nonempty interval.
    std::size_t span;
    if (x >= config.hi) {
      span = p - 1;
    } else {
      span = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), x) - knots.begin()) - 1;
      span = std::clamp<std::size_t>(span, deg, p - 1);
    }

    // Cox-de Boor triangle for the deg + 1 nonzero functions.
    values[0] = 1.0;
    for (int j = 1; j <= deg; ++j) {
      left[j] = x - knots[span + 1 - j];
      right[j] = knots[span + j] - x;
      double saved = 0.0;
      for (int k = 0; k < j; ++k) {
        const double denom = right[k + 1] + left[j - k];
        const double temp = denom > 0.0 ? values[k] / denom : 0.0;
        values[k] = saved + right[k + 1] * temp;
        saved = left[j - k] * temp;
      }
      values[j] = saved;
    }
    for (int j = 0; j <= deg; ++j)
      basis(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(span - deg + j)) = values[j];
  }
  return basis;
}

Vector tensor_row(const Vector& b1_row, const Vector& b2_row) {
  Vector out(b1_row.size() * b2_row.size());
  for (Eigen::Index l = 0; l < b2_row.size(); ++l)
    out.segment(l * b1_row.size(), b1_row.size()) = b2_row[l] * b1_row;
  return out;
}

Matrix tensor_design(const Matrix& B1, const Matrix& B2) {
  return Eigen::kroneckerProduct(B2, B1).eval();
}

Matrix eval_surface(const Matrix& theta, const Matrix& B1, const Matrix& B2) {
  if (theta.rows() != B1.cols() || theta.cols() != B2.cols())
    throw ArgumentError("eval_surface: theta is " + std::to_string(theta.rows()) + "x" +
                        std::to_string(theta.cols()) + " but bases have " + std::to_string(B1.cols()) +
                        " and " + std::to_string(B2.cols()) + " columns");
  return B1 * theta * B2.transpose();
}

}  // namespace lfda
