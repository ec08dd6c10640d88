#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lfda/distributions.hpp"
#include "lfda/model.hpp"
#include "lfda/random.hpp"
#include "lfda/splines.hpp"

namespace lfda {

struct ChainConfig {
  std::size_t n_iterations = 10000;
  std::size_t burn_in = 2500;
  std::size_t thin = 1;
  std::size_t n_chains = 1;
  std::uint64_t seed = 1;
  double mh_step_sd = 0.3;
  /// Tune MH step sizes toward 0.44 acceptance during burn-in only.
  bool adapt = true;
  /// Keep Omega for every stored draw (memory grows with (p1 p2)^2).
  bool cache_omega = true;
  /// Replace prior draws of loadings, scores and variances by data-informed
  /// values before the first sweep (see warm_start).
  bool warm_start = true;

  void validate() const;
  std::size_t draws_per_chain() const { return (n_iterations - burn_in + thin - 1) / thin; }
};

/// Order of the Metropolis-Hastings updated hyperparameters.
enum class ShrinkageParam : std::size_t { a11 = 0, a12 = 1, a21 = 2, a22 = 3 };
inline constexpr std::array<const char*, 4> kShrinkageParamNames{"a11", "a12", "a21", "a22"};

struct SamplerDiagnostics {
  TruncatedGammaStats truncated_gamma;
  std::size_t jitter_retries = 0;
};

/// Data-side quantities for the Theta and phi^2 conditionals. Only
/// mask-dependent grams are cached, so responses may change between sweeps.
class LikelihoodTerms {
 public:
  LikelihoodTerms(const FunctionalDataset& data, const Matrix& B1, const Matrix& B2);

  const FunctionalDataset& data() const { return *data_; }
  const Matrix& B1() const { return *B1_; }
  const Matrix& B2() const { return *B2_; }

  /// D_i^T D_i for subject i's observed design rows.
  const Matrix& design_gram(std::size_t i) const;
  /// vec(B1^T (Y_i masked) B2) = D_i^T y_i.
  Vector cross_product(std::size_t i) const;
  /// Residual sum of squares over observed cells.
  double residual_ss(const ModelState& state) const;
  std::size_t n_observed() const { return n_observed_; }

 private:
  const FunctionalDataset* data_;
  const Matrix* B1_;
  const Matrix* B2_;
  Matrix full_gram_;
  std::vector<Matrix> partial_grams_;  // empty for complete subjects
  std::size_t n_observed_ = 0;
};

/// Gaussian full conditional in information form.
struct GaussianConditional {
  Vector mean;
  Matrix precision;
  Matrix covariance() const;
};

/// Gamma full conditional (shape, rate) truncated to (lower, inf).
struct GammaConditional {
  double shape = 1.0;
  double rate = 1.0;
  double lower = kNoLowerBound;
  double mean() const;
  double variance() const;
};

// Full conditionals. Each is a pure function of the current state; the
// update_* functions draw from exactly these distributions.
GaussianConditional theta_conditional(const ModelState& s, const LikelihoodTerms& terms, std::size_t i);
GaussianConditional eta_conditional(const ModelState& s, const Vector& x, std::size_t i);
GaussianConditional lambda_row_conditional(const ModelState& s, std::size_t m);
GaussianConditional gamma_row_conditional(const ModelState& s, std::size_t l);
GammaConditional rho1_conditional(const ModelState& s, const Hyperparameters& hp, std::size_t m, std::size_t k);
GammaConditional rho2_conditional(const ModelState& s, const Hyperparameters& hp, std::size_t l, std::size_t j);
GammaConditional delta1_conditional(const ModelState& s, std::size_t v);
GammaConditional delta2_conditional(const ModelState& s, std::size_t v);
/// Conditionals of the precisions 1/sigma_j, 1/h_c, 1/phi^2 and 1/omega_rc.
GammaConditional sigma_precision_conditional(const ModelState& s, const Hyperparameters& hp, std::size_t j);
GammaConditional h_precision_conditional(const ModelState& s, const Hyperparameters& hp,
                                         const FunctionalDataset& data, std::size_t c);
GammaConditional phi_precision_conditional(const ModelState& s, const Hyperparameters& hp,
                                           const LikelihoodTerms& terms);
GaussianConditional beta_column_conditional(const ModelState& s, const FunctionalDataset& data, std::size_t c);
GammaConditional omega_precision_conditional(const ModelState& s, std::size_t r, std::size_t c);

/// Unnormalized log conditional density of one shrinkage hyperparameter.
double log_shrinkage_target(const ModelState& s, const Hyperparameters& hp, ShrinkageParam which, double value);

/// Draws Theta_i then vec(eta_i) for every subject.
void update_latent(ModelState& s, const LikelihoodTerms& terms, Rng& rng, SamplerDiagnostics* diag = nullptr);
void update_latent(ModelState& s, const FunctionalDataset& data, const Matrix& B1, const Matrix& B2, Rng& rng);

/// Rows of Lambda and Gamma, then rho1, rho2, then delta1, delta2.
void update_loadings(ModelState& s, const Hyperparameters& hp, Rng& rng, SamplerDiagnostics* diag = nullptr);

/// sigma, phi^2, h, beta, omega.
void update_scales(ModelState& s, const Hyperparameters& hp, const LikelihoodTerms& terms, Rng& rng);
void update_scales(ModelState& s, const Hyperparameters& hp, const FunctionalDataset& data, const Matrix& B1,
                   const Matrix& B2, Rng& rng);

/// Log-scale Gaussian random-walk MH for a11, a12, a21, a22.
std::array<bool, 4> mh_update_a(ModelState& s, const Hyperparameters& hp, const std::array<double, 4>& step_sd,
                                Rng& rng);

/// One full sweep: latent, loadings, scales, MH.
std::array<bool, 4> gibbs_sweep(ModelState& s, const Hyperparameters& hp, const LikelihoodTerms& terms,
                                const std::array<double, 4>& step_sd, Rng& rng, SamplerDiagnostics* diag = nullptr);

struct Draw {
  std::uint32_t chain = 0;
  std::uint64_t iteration = 0;
  double log_likelihood = 0.0;
  ModelState state;
  Matrix omega;  // empty unless ChainConfig::cache_omega
};

struct ChainDiagnostics {
  std::uint32_t chain = 0;
  bool failed = false;
  std::string error;
  std::size_t iterations_completed = 0;
  std::array<double, 4> acceptance_rate{};  // post burn-in
  std::array<double, 4> step_sd{};          // after adaptation
  std::vector<double> loglik_trace;         // every iteration
  std::size_t truncated_gamma_fallbacks = 0;
  std::size_t jitter_retries = 0;
};

struct PosteriorDraws {
  BasisConfig s_basis;
  BasisConfig t_basis;
  Hyperparameters hyper;
  ChainConfig config;
  std::uint64_t dataset_hash = 0;
  std::vector<double> s_grid;  // data grids the chains were fitted on
  std::vector<double> t_grid;
  std::vector<Draw> draws;
  std::vector<ChainDiagnostics> chains;

  bool any_failed() const;
  /// Omega of draw i, from the cache when present.
  Matrix omega_of(std::size_t i) const;
};

/// Runs config.n_chains independent chains, chain c on stream (seed, c).
/// A chain that throws is recorded as failed; the others are unaffected.
PosteriorDraws run_chain(const FunctionalDataset& data, const Hyperparameters& hyper, const BasisConfig& s_basis,
                         const BasisConfig& t_basis, const ChainConfig& config);

}  // namespace lfda
