#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfda/random.hpp"
#include "lfda/splines.hpp"

namespace lfda {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// One subject's surface on the shared (s, t) grid.
struct SubjectRecord {
  std::string id;
  Matrix y;   // n_s x n_t, entries under a false mask are ignored
  Mask mask;  // true = observed
  Vector x;   // covariates, length d

  std::size_t n_observed() const { return static_cast<std::size_t>(mask.count()); }
  bool complete() const { return mask.all(); }
};

struct FunctionalDataset {
  std::vector<SubjectRecord> subjects;
  std::vector<double> s_grid;
  std::vector<double> t_grid;
  std::size_t d = 0;

  std::size_t n_subjects() const { return subjects.size(); }
  std::size_t n_observed() const;

  /// Throws ArgumentError on unsorted grids, shape disagreement or
  /// non-finite covariates.
  void validate() const;

  /// 64-bit content digest of grids, observed values, masks and covariates.
  std::uint64_t content_hash() const;
};

/// Fixed prior constants and truncation ranks.
///
/// Precision priors use shape/rate gamma parameters; phi's prior acts on
/// the residual precision 1 / phi^2.
struct Hyperparameters {
  std::size_t q1 = 6;
  std::size_t q2 = 6;
  double nu1 = 5.0;
  double nu2 = 5.0;
  double r1 = 1.0;
  double r2 = 2.0;
  double a_sigma = 0.5;
  double b_sigma = 0.5;
  double a_h = 1.0;
  double b_h = 1.0;
  double a_phi = 1e-4;
  double b_phi = 1e-4;

  void validate(std::size_t p1, std::size_t p2) const;
};

/// One complete set of latent variables and parameters.
///
/// Lambda (p1 x q1) loads the s-basis and Gamma (p2 x q2) the t-basis;
/// vec() is column-major throughout, so vec(Lambda eta Gamma^T) =
/// kron(Gamma, Lambda) vec(eta). Sigma and H are stored as variances.
struct ModelState {
  std::vector<Matrix> theta;  // p1 x p2 per subject
  Matrix lambda;              // p1 x q1
  Matrix gamma;               // p2 x q2
  std::vector<Matrix> eta;    // q1 x q2 per subject
  Vector sigma;               // p1*p2 variances of vec(zeta)
  Vector h;                   // q1*q2 variances of vec(eta)
  double phi2 = 1.0;          // residual variance
  Matrix beta;                // d x q1*q2
  Matrix omega;               // d x q1*q2 prior variances of beta
  Matrix rho1;                // p1 x q1 local precisions
  Matrix rho2;                // p2 x q2 local precisions
  Vector delta1;              // q1
  Vector delta2;              // q2
  Vector tau1;                // cumulative products of delta1
  Vector tau2;
  double a11 = 1.0;
  double a12 = 2.0;
  double a21 = 1.0;
  double a22 = 2.0;

  std::size_t p1() const { return static_cast<std::size_t>(lambda.rows()); }
  std::size_t p2() const { return static_cast<std::size_t>(gamma.rows()); }
  std::size_t q1() const { return static_cast<std::size_t>(lambda.cols()); }
  std::size_t q2() const { return static_cast<std::size_t>(gamma.cols()); }
  std::size_t d() const { return static_cast<std::size_t>(beta.rows()); }
  std::size_t n_subjects() const { return theta.size(); }

  void refresh_tau();

  /// Prior mean of vec(eta_i), i.e. beta^T x.
  Vector eta_mean(const Vector& x) const { return beta.transpose() * x; }
};

/// Cumulative product tau_k = prod_{v <= k} delta_v.
Vector cumulative_product(const Vector& delta);

/// kron(Gamma, Lambda), the loading matrix of vec(eta) in vec(Theta).
Matrix kron_loadings(const ModelState& state);

/// Omega = kron(Gamma, Lambda) H kron(Gamma, Lambda)^T + Sigma.
Matrix omega(const ModelState& state);

/// Normal log density of all observed cells given Theta and phi^2.
/// Throws StateError when phi^2 <= 0.
double log_likelihood(const ModelState& state, const FunctionalDataset& data, const Matrix& B1,
                      const Matrix& B2);

/// Log prior density. `in_support` is false (and `value` -inf) when a
/// truncated delta falls outside (1, inf) or a variance is non-positive.
struct LogPrior {
  double value = 0.0;
  bool in_support = true;
};

LogPrior log_prior(const ModelState& state, const Hyperparameters& hyper, const FunctionalDataset& data);

/// Draws every parameter from its prior and initializes Theta_i by a ridge
/// projection of the observed cells onto the tensor basis. phi^2 starts at
/// the ridge residual mean square when any cell is observed.
ModelState init_state(const Hyperparameters& hyper, const FunctionalDataset& data, const Matrix& B1,
                      const Matrix& B2, Rng& rng);

/// Replaces the prior draws of Lambda, Gamma, eta, beta, Sigma and H by
/// data-informed values given the current Theta_i: loadings are the leading
/// eigenvectors of sum Theta Theta^T and sum Theta^T Theta, eta_i their
/// projections, beta the least-squares fit of eta on x, and Sigma, H the
/// conditional posterior means of the variances. Shrinkage parameters keep
/// their prior draws. No-op without subjects.
void warm_start(ModelState& state, const Hyperparameters& hyper, const FunctionalDataset& data);

/// Returns an empty string when the state satisfies every invariant,
/// otherwise a description of the first violation.
std::string check_invariants(const ModelState& state);

/// Minimum eigenvalue of a symmetric matrix relative to its largest
/// absolute eigenvalue (0 for the zero matrix).
double relative_min_eigenvalue(const Matrix& m);

}  // namespace lfda
