#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "lfda/model.hpp"
#include "lfda/sampler.hpp"
#include "lfda/splines.hpp"

namespace lfda {

/// Covariance kernel K{(s,t),(s',t')} on a grid. Row/column index of the
/// pair (s_j, t_k) is j + |s| * k.
struct KernelGrid {
  std::vector<double> s_points;
  std::vector<double> t_points;
  Matrix gram;
};

enum class Axis { S, T };

struct MarginalCovariance {
  Axis axis = Axis::S;
  std::vector<double> points;
  Matrix matrix;
};

/// Leading eigenpairs of a marginal covariance under uniform quadrature.
///
/// Eigenfunctions have unit discrete L2 norm with the grid-spacing weight:
/// weight * sum_j u(x_j)^2 = 1.
struct EigenSummary {
  Vector eigenvalues;      // nonincreasing, clamped at 0
  Matrix eigenfunctions;   // grid x rank
  Vector fve;              // eigenvalue share of the total spectral mass
  double weight = 1.0;     // quadrature weight per grid point
  std::size_t n_clamped = 0;
  double clamped_mass = 0.0;  // sum of |negative eigenvalues| set to 0
};

struct FunctionBand {
  std::vector<double> points;
  Vector center;
  Vector lower;
  Vector upper;
  double level = 0.95;
  double critical_value = 0.0;
};

enum class Quadrature { Uniform, Trapezoid };

/// gram = D Omega D^T with D = kron(B2(t*), B1(s*)).
KernelGrid covariance_kernel(const Matrix& omega, const Matrix& B1_s, const Matrix& B2_t, std::vector<double> s_points,
                             std::vector<double> t_points);
/// Builds the bases from their configurations; out-of-domain points throw DomainError.
KernelGrid covariance_kernel(const ModelState& draw, const BasisConfig& s_basis, const BasisConfig& t_basis,
                             const std::vector<double>& s_points, const std::vector<double>& t_points);

/// mu(x, s, t) = B1(s)^T Lambda M Gamma^T B2(t) where vec(M) = beta^T x.
Matrix mean_surface(const ModelState& draw, const Vector& x, const Matrix& B1_s, const Matrix& B2_t);

/// Averages the kernel over the other axis. Uniform weights reproduce
/// (1/w) sum_l K{(s, t_l), (s', t_l)}; trapezoid weights are normalized to sum 1.
MarginalCovariance marginalize(const KernelGrid& kernel, Axis axis, Quadrature rule = Quadrature::Uniform);

/// Quadrature weight per point: the mean grid spacing (1 for a single point).
double grid_weight(const std::vector<double>& points);

/// Top-`rank` spectral decomposition. Throws ArgumentError on asymmetric input.
EigenSummary eigen_decompose(const MarginalCovariance& marg, std::size_t rank);

/// Running-mean sign alignment. Returns the aligned sequence; `flips`
/// (optional) receives one flag per draw.
std::vector<Vector> align_signs(const std::vector<Vector>& draws, std::vector<bool>* flips = nullptr);

/// Simultaneous band from draws (rows) via the max standardized deviation.
FunctionBand simultaneous_band(const Matrix& draws, double alpha, std::vector<double> points = {});

struct SummaryOptions {
  std::vector<double> s_points;  // empty: dataset grid stored with the draws
  std::vector<double> t_points;
  std::optional<Vector> x;       // covariates for the mean surface; default e_1
  double alpha = 0.05;
  std::size_t rank = 3;
};

struct AxisSummary {
  MarginalCovariance mean_marginal;
  Vector eigenvalues_mean;  // posterior mean of per-draw eigenvalues
  Matrix eigenvalue_draws;  // draws x rank
  std::vector<FunctionBand> eigenfunctions;  // aligned, one per component
  std::vector<std::size_t> crossings;        // draws closer to a neighbouring component's mean
};

struct PosteriorSummary {
  std::vector<double> s_points;
  std::vector<double> t_points;
  FunctionBand mean;       // flattened grid, index j + |s| * k
  KernelGrid kernel_mean;  // posterior mean of K
  AxisSummary s_axis;
  AxisSummary t_axis;
  std::size_t n_draws = 0;
};

/// Per-draw kernel, marginals, eigenanalysis and ordered sign alignment.
PosteriorSummary summarize(const PosteriorDraws& draws, const SummaryOptions& options);

}  // namespace lfda
