#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lfda/model.hpp"
#include "lfda/posterior.hpp"
#include "lfda/random.hpp"
#include "lfda/sampler.hpp"
#include "lfda/splines.hpp"

namespace lfda {

/// Restricts the generating process to a tensor spline space with (q1, q2)
/// marginal ranks: the leading marginal eigenvectors of the analytical gram
/// are projected onto the bases and the gram is compressed onto their span.
struct GeneratingProjection {
  BasisConfig s_basis;
  BasisConfig t_basis;
  std::size_t q1 = 4;
  std::size_t q2 = 4;
};

struct ScenarioSpec {
  int case_id = 1;
  std::size_t n_subjects = 30;
  std::size_t n_s = 10;  // longitudinal points on [0, 1]
  std::size_t n_t = 20;  // functional points on [0, 1]
  double noise_var = 0.025;
  double matern_sigma2 = 1.0;
  double matern_rho = 0.5;
  double alpha = 1.0;
  std::size_t k_terms = 50;
  std::optional<GeneratingProjection> projection;

  void validate() const;
  std::vector<double> s_grid() const;
  std::vector<double> t_grid() const;
};

/// Marginal kernels of cases 1 and 2 (case 3 is not separable).
double true_kernel_s(const ScenarioSpec& spec, double s, double s2);
double true_kernel_t(const ScenarioSpec& spec, double t, double t2);
double true_kernel(const ScenarioSpec& spec, double s, double t, double s2, double t2);
double true_mean(const ScenarioSpec& spec, double s, double t);

/// Bases used for fitting the 10 x 20 designs: cubic, s knots i/5, t knots i/6 with 5/6 doubled.
BasisConfig default_s_basis();
BasisConfig default_t_basis();

struct GroundTruth {
  std::vector<double> s_points;
  std::vector<double> t_points;
  Matrix mean;  // n_s x n_t
  Matrix gram;  // index j + n_s k
  MarginalCovariance k_s;
  MarginalCovariance k_t;
  Matrix psi;  // n_s x n_components, smoothed leading eigenfunctions of K_S
  Matrix phi;  // n_t x n_components, same for K_T
};

struct TruthOptions {
  BasisConfig s_basis = default_s_basis();
  BasisConfig t_basis = default_t_basis();
  std::size_t n_components = 2;
};

/// Grid gram of the analytical kernel (or its projected version) and mean.
GroundTruth ground_truth(const ScenarioSpec& spec, const TruthOptions& options = {});

struct SimulatedData {
  FunctionalDataset data;  // intercept covariate x = (1)
  GroundTruth truth;
};

SimulatedData generate(const ScenarioSpec& spec, Rng& rng, const TruthOptions& options = {});

/// Symmetric square root factor L with L L^T = gram: Cholesky when it is
/// accurate, otherwise eigenvalues clamped at zero.
Matrix gram_factor(const Matrix& gram);

/// sum (estimate - truth)^2 / sum truth^2 over all entries.
double relative_error(const Matrix& estimate, const Matrix& truth);

struct EmpiricalEstimates {
  Matrix mean;  // n_s x n_t
  Matrix gram;  // sample covariance of vec(Y_i), denominator n - 1
};
EmpiricalEstimates empirical_estimates(const FunctionalDataset& data);

/// Flips `estimate` if its negation is closer to `reference`.
Vector align_to(const Vector& estimate, const Vector& reference);

struct ExperimentConfig {
  ScenarioSpec scenario;
  BasisConfig s_basis = default_s_basis();
  BasisConfig t_basis = default_t_basis();
  Hyperparameters hyper;
  ChainConfig chain;
  bool fit_bayes = true;
  std::size_t n_components = 2;
};

struct ReportRow {
  int case_id = 0;
  std::size_t n = 0;
  std::string quantity;   // mu, K, K_S, K_T, psi1, psi2, phi1, phi2
  std::string estimator;  // bayes, empirical
  double median = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
  std::size_t n_values = 0;
};

struct ReplicationFailure {
  std::size_t replication = 0;
  std::string error;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::vector<ReplicationFailure> failures;
  /// values[quantity/estimator] per successful replication, in replication order.
  std::vector<std::pair<std::string, std::vector<double>>> values;
};

/// Linear-interpolation sample quantile (type 7).
double quantile(std::vector<double> values, double prob);

ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t n_replications, std::uint64_t seed);

/// Information-criteria comparison over candidate basis dimensions.
struct SelectionConfig {
  ScenarioSpec scenario;
  std::vector<std::size_t> candidates{5, 10, 15};  // p1 = p2, uniform cubic knots
  std::size_t q1 = 4;
  std::size_t q2 = 4;
  Hyperparameters hyper;
  ChainConfig chain;
};

/// Case 2 on a 20 x 20 grid generated inside the (10, 10) cubic spline
/// space with (4, 4) marginal ranks.
SelectionConfig default_selection_config();

struct SelectionRow {
  std::size_t candidate = 0;
  std::string criterion;  // DIC, BIC1, BIC2
  double mean = 0.0;
  double se = 0.0;
  double median = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
  std::size_t n_values = 0;
};

struct SelectionReport {
  std::vector<SelectionRow> rows;
  std::vector<ReplicationFailure> failures;
  /// values[candidate index][criterion index] per successful replication.
  std::vector<std::array<std::vector<double>, 3>> values;
};

SelectionReport run_selection_experiment(const SelectionConfig& config, std::size_t n_replications,
                                         std::uint64_t seed);

}  // namespace lfda
