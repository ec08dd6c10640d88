#include "lfda/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <utility>

#include <unsupported/Eigen/KroneckerProduct>

#include "lfda/errors.hpp"

namespace lfda {

namespace {

using Llt = Eigen::LLT<Matrix>;

Llt factor_precision(const Matrix& precision, SamplerDiagnostics* diag) {
  Llt llt(precision);
  if (llt.info() == Eigen::Success) return llt;
  // One retry with relative diagonal jitter.
  Matrix jittered = precision;
  jittered.diagonal() += 1e-10 * precision.diagonal().cwiseAbs();
  if (diag) ++diag->jitter_retries;
  llt.compute(jittered);
  if (llt.info() != Eigen::Success) throw ChainError("conditional precision is not positive definite");
  return llt;
}

// mean + U^{-1} z with precision = U^T U has covariance precision^{-1}.
Vector draw_from_factor(const Llt& llt, const Vector& mean, Rng& rng) {
  Vector z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + llt.matrixU().solve(z);
}

Vector draw_gaussian(const GaussianConditional& c, Rng& rng, SamplerDiagnostics* diag) {
  return draw_from_factor(factor_precision(c.precision, diag), c.mean, rng);
}

GaussianConditional information_form(Matrix precision, const Vector& rhs) {
  Llt llt(precision);
  if (llt.info() != Eigen::Success) {
    Matrix jittered = precision;
    jittered.diagonal() += 1e-10 * precision.diagonal().cwiseAbs();
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) throw ChainError("conditional precision is not positive definite");
  }
  Vector mean = llt.solve(rhs);
  return {std::move(mean), std::move(precision)};
}

double draw_gamma(const GammaConditional& c, Rng& rng, SamplerDiagnostics* diag) {
  return sample_truncated_gamma(c.shape, c.rate, c.lower, rng, diag ? &diag->truncated_gamma : nullptr);
}

double clamp_precision(double v) {
  return std::clamp(v, std::numeric_limits<double>::min(), std::numeric_limits<double>::max());
}

Eigen::Map<const Vector> as_vec(const Matrix& m) { return {m.data(), m.size()}; }

double gamma_logpdf_unit_rate(double x, double shape) { return (shape - 1.0) * std::log(x) - x - std::lgamma(shape); }

}  // namespace

void ChainConfig::validate() const {
  if (n_iterations == 0) throw ArgumentError("n_iterations must be positive");
  if (burn_in >= n_iterations) throw ArgumentError("burn_in must be smaller than n_iterations");
  if (thin == 0) throw ArgumentError("thin must be positive");
  if (n_chains == 0) throw ArgumentError("n_chains must be positive");
  if (!(mh_step_sd > 0.0)) throw ArgumentError("mh_step_sd must be positive");
}

LikelihoodTerms::LikelihoodTerms(const FunctionalDataset& data, const Matrix& B1, const Matrix& B2)
    : data_(&data), B1_(&B1), B2_(&B2) {
  if (B1.rows() != static_cast<Eigen::Index>(data.s_grid.size()) ||
      B2.rows() != static_cast<Eigen::Index>(data.t_grid.size()))
    throw ArgumentError("basis matrices must be evaluated on the dataset grids");
  const Matrix G1 = B1.transpose() * B1;
  const Matrix G2 = B2.transpose() * B2;
  full_gram_ = Eigen::kroneckerProduct(G2, G1).eval();
  partial_grams_.resize(data.subjects.size());
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& subj = data.subjects[i];
    n_observed_ += subj.n_observed();
    if (subj.complete()) continue;
    Matrix g = Matrix::Zero(full_gram_.rows(), full_gram_.cols());
    for (Eigen::Index k = 0; k < subj.mask.cols(); ++k)
      for (Eigen::Index j = 0; j < subj.mask.rows(); ++j)
        if (subj.mask(j, k)) {
          const Vector row = tensor_row(B1.row(j).transpose(), B2.row(k).transpose());
          g.noalias() += row * row.transpose();
        }
    partial_grams_[i] = std::move(g);
  }
}

const Matrix& LikelihoodTerms::design_gram(std::size_t i) const {
  return data_->subjects[i].complete() ? full_gram_ : partial_grams_[i];
}

Vector LikelihoodTerms::cross_product(std::size_t i) const {
  const auto& subj = data_->subjects[i];
  const Matrix y = subj.mask.select(subj.y, Matrix::Zero(subj.y.rows(), subj.y.cols()));
  const Matrix c = B1_->transpose() * y * (*B2_);
  return as_vec(c);
}

double LikelihoodTerms::residual_ss(const ModelState& s) const {
  double rss = 0.0;
  for (std::size_t i = 0; i < data_->subjects.size(); ++i) {
    const auto& subj = data_->subjects[i];
    const Matrix r = subj.y - eval_surface(s.theta[i], *B1_, *B2_);
    rss += subj.mask.select(r, Matrix::Zero(r.rows(), r.cols())).squaredNorm();
  }
  return rss;
}

Matrix GaussianConditional::covariance() const {
  return precision.llt().solve(Matrix::Identity(precision.rows(), precision.cols()));
}

double GammaConditional::mean() const {
  if (!(lower > 0.0)) return shape / rate;
  // E[X | X > L] = (shape / rate) Q(shape + 1, rate L) / Q(shape, rate L)
  return shape / rate * std::exp(log_upper_gamma_tail(shape + 1.0, rate * lower) - log_upper_gamma_tail(shape, rate * lower));
}

double GammaConditional::variance() const {
  if (!(lower > 0.0)) return shape / (rate * rate);
  const double z = rate * lower;
  const double l0 = log_upper_gamma_tail(shape, z);
  const double m1 = shape / rate * std::exp(log_upper_gamma_tail(shape + 1.0, z) - l0);
  const double m2 = shape * (shape + 1.0) / (rate * rate) * std::exp(log_upper_gamma_tail(shape + 2.0, z) - l0);
  return m2 - m1 * m1;
}

// ---------------------------------------------------------------------------
// Full conditionals

GaussianConditional theta_conditional(const ModelState& s, const LikelihoodTerms& terms, std::size_t i) {
  Matrix precision = terms.design_gram(i) / s.phi2;
  precision.diagonal() += s.sigma.cwiseInverse();
  const Matrix prior_mean = s.lambda * s.eta[i] * s.gamma.transpose();
  const Vector rhs = as_vec(prior_mean).cwiseQuotient(s.sigma) + terms.cross_product(i) / s.phi2;
  return information_form(std::move(precision), rhs);
}

GaussianConditional eta_conditional(const ModelState& s, const Vector& x, std::size_t i) {
  const Matrix A = kron_loadings(s);
  const Vector w = s.sigma.cwiseInverse();
  Matrix precision = A.transpose() * w.asDiagonal() * A;
  precision.diagonal() += s.h.cwiseInverse();
  const Vector rhs = s.eta_mean(x).cwiseQuotient(s.h) + A.transpose() * as_vec(s.theta[i]).cwiseProduct(w);
  return information_form(std::move(precision), rhs);
}

GaussianConditional lambda_row_conditional(const ModelState& s, std::size_t m) {
  const auto p1 = static_cast<Eigen::Index>(s.p1());
  const auto p2 = static_cast<Eigen::Index>(s.p2());
  const auto q1 = static_cast<Eigen::Index>(s.q1());
  const auto row = static_cast<Eigen::Index>(m);
  Vector w(p2);
  for (Eigen::Index l = 0; l < p2; ++l) w[l] = 1.0 / s.sigma[row + p1 * l];
  Matrix precision = Matrix::Zero(q1, q1);
  Vector rhs = Vector::Zero(q1);
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    const Matrix C = s.eta[i] * s.gamma.transpose();  // q1 x p2
    precision.noalias() += C * w.asDiagonal() * C.transpose();
    rhs.noalias() += C * s.theta[i].row(row).transpose().cwiseProduct(w);
  }
  precision.diagonal() += s.rho1.row(row).transpose().cwiseProduct(s.tau1);
  return information_form(std::move(precision), rhs);
}

GaussianConditional gamma_row_conditional(const ModelState& s, std::size_t l) {
  const auto p1 = static_cast<Eigen::Index>(s.p1());
  const auto q2 = static_cast<Eigen::Index>(s.q2());
  const auto col = static_cast<Eigen::Index>(l);
  const Vector w = s.sigma.segment(p1 * col, p1).cwiseInverse();
  Matrix precision = Matrix::Zero(q2, q2);
  Vector rhs = Vector::Zero(q2);
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    const Matrix D = s.lambda * s.eta[i];  // p1 x q2
    precision.noalias() += D.transpose() * w.asDiagonal() * D;
    rhs.noalias() += D.transpose() * s.theta[i].col(col).cwiseProduct(w);
  }
  precision.diagonal() += s.rho2.row(col).transpose().cwiseProduct(s.tau2);
  return information_form(std::move(precision), rhs);
}

GammaConditional rho1_conditional(const ModelState& s, const Hyperparameters& hp, std::size_t m, std::size_t k) {
  const double lam = s.lambda(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  return {0.5 * (hp.nu1 + 1.0), 0.5 * (hp.nu1 + s.tau1[static_cast<Eigen::Index>(k)] * lam * lam)};
}

GammaConditional rho2_conditional(const ModelState& s, const Hyperparameters& hp, std::size_t l, std::size_t j) {
  const double g = s.gamma(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j));
  return {0.5 * (hp.nu2 + 1.0), 0.5 * (hp.nu2 + s.tau2[static_cast<Eigen::Index>(j)] * g * g)};
}

namespace {

// Shared form of the delta conditionals for one loading matrix.
GammaConditional delta_conditional(const Matrix& loadings, const Matrix& rho, const Vector& delta, double a_first,
                                   double a_rest, std::size_t v) {
  const auto p = static_cast<double>(loadings.rows());
  const auto q = loadings.cols();
  const auto idx = static_cast<Eigen::Index>(v);
  // tau_k with delta_v removed, for k >= v.
  double partial = 1.0;
  for (Eigen::Index u = 0; u < idx; ++u) partial *= delta[u];
  double rate = 1.0;
  for (Eigen::Index k = idx; k < q; ++k) {
    if (k > idx) partial *= delta[k];
    const double weighted = (rho.col(k).array() * loadings.col(k).array().square()).sum();
    rate += 0.5 * partial * weighted;
  }
  GammaConditional c;
  c.shape = (v == 0 ? a_first : a_rest) + 0.5 * p * static_cast<double>(q - idx);
  c.rate = rate;
  c.lower = v == 0 ? kNoLowerBound : 1.0;
  return c;
}

}  // namespace

GammaConditional delta1_conditional(const ModelState& s, std::size_t v) {
  return delta_conditional(s.lambda, s.rho1, s.delta1, s.a11, s.a12, v);
}

GammaConditional delta2_conditional(const ModelState& s, std::size_t v) {
  return delta_conditional(s.gamma, s.rho2, s.delta2, s.a21, s.a22, v);
}

GammaConditional sigma_precision_conditional(const ModelState& s, const Hyperparameters& hp, std::size_t j) {
  const auto idx = static_cast<Eigen::Index>(j);
  double ss = 0.0;
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    // Only entry j of vec(Theta_i - Lambda eta_i Gamma^T) is needed.
    const Eigen::Index m = idx % s.lambda.rows();
    const Eigen::Index l = idx / s.lambda.rows();
    const double z = s.theta[i](m, l) - s.lambda.row(m) * s.eta[i] * s.gamma.row(l).transpose();
    ss += z * z;
  }
  return {hp.a_sigma + 0.5 * static_cast<double>(s.theta.size()), hp.b_sigma + 0.5 * ss};
}

GammaConditional h_precision_conditional(const ModelState& s, const Hyperparameters& hp,
                                         const FunctionalDataset& data, std::size_t c) {
  const auto idx = static_cast<Eigen::Index>(c);
  double ss = 0.0;
  for (std::size_t i = 0; i < s.eta.size(); ++i) {
    const double mean = s.d() > 0 ? s.beta.col(idx).dot(data.subjects[i].x) : 0.0;
    const double r = s.eta[i].data()[idx] - mean;
    ss += r * r;
  }
  return {hp.a_h + 0.5 * static_cast<double>(s.eta.size()), hp.b_h + 0.5 * ss};
}

GammaConditional phi_precision_conditional(const ModelState& s, const Hyperparameters& hp,
                                           const LikelihoodTerms& terms) {
  return {hp.a_phi + 0.5 * static_cast<double>(terms.n_observed()), hp.b_phi + 0.5 * terms.residual_ss(s)};
}

GaussianConditional beta_column_conditional(const ModelState& s, const FunctionalDataset& data, std::size_t c) {
  const auto d = static_cast<Eigen::Index>(s.d());
  const auto col = static_cast<Eigen::Index>(c);
  const double inv_h = 1.0 / s.h[col];
  Matrix precision = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t i = 0; i < s.eta.size(); ++i) {
    const Vector& x = data.subjects[i].x;
    precision.noalias() += inv_h * x * x.transpose();
    rhs.noalias() += inv_h * s.eta[i].data()[col] * x;
  }
  precision.diagonal() += s.omega.col(col).cwiseInverse();
  return information_form(std::move(precision), rhs);
}

GammaConditional omega_precision_conditional(const ModelState& s, std::size_t r, std::size_t c) {
  const double b = s.beta(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return {1.0, 0.5 * (1.0 + b * b)};
}

double log_shrinkage_target(const ModelState& s, const Hyperparameters& hp, ShrinkageParam which, double a) {
  if (!(a > 0.0)) return -std::numeric_limits<double>::infinity();
  switch (which) {
    case ShrinkageParam::a11:
      return gamma_logpdf_unit_rate(a, hp.r1) + gamma_logpdf_unit_rate(s.delta1[0], a);
    case ShrinkageParam::a21:
      return gamma_logpdf_unit_rate(a, hp.r1) + gamma_logpdf_unit_rate(s.delta2[0], a);
    case ShrinkageParam::a12:
    case ShrinkageParam::a22: {
      const Vector& delta = which == ShrinkageParam::a12 ? s.delta1 : s.delta2;
      double lp = gamma_logpdf_unit_rate(a, hp.r2);
      if (delta.size() > 1) {
        const double log_tail = log_upper_gamma_tail(a, 1.0);
        for (Eigen::Index v = 1; v < delta.size(); ++v) lp += gamma_logpdf_unit_rate(delta[v], a) - log_tail;
      }
      return lp;
    }
  }
  return -std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Updates

void update_latent(ModelState& s, const LikelihoodTerms& terms, Rng& rng, SamplerDiagnostics* diag) {
  const auto& data = terms.data();
  const auto p1 = static_cast<Eigen::Index>(s.p1());
  const auto p2 = static_cast<Eigen::Index>(s.p2());
  const auto q1 = static_cast<Eigen::Index>(s.q1());
  const auto q2 = static_cast<Eigen::Index>(s.q2());
  const Vector sigma_inv = s.sigma.cwiseInverse();

  // Complete subjects share one conditional precision.
  std::optional<Llt> shared;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const bool complete = data.subjects[i].complete();
    Llt local;
    if (!complete || !shared) {
      Matrix precision = terms.design_gram(i) / s.phi2;
      precision.diagonal() += sigma_inv;
      local = factor_precision(precision, diag);
      if (complete) shared = local;
    }
    const Llt& llt = complete ? *shared : local;
    const Matrix prior_mean = s.lambda * s.eta[i] * s.gamma.transpose();
    const Vector rhs = as_vec(prior_mean).cwiseProduct(sigma_inv) + terms.cross_product(i) / s.phi2;
    const Vector draw = draw_from_factor(llt, llt.solve(rhs), rng);
    s.theta[i] = Eigen::Map<const Matrix>(draw.data(), p1, p2);
  }

  if (s.eta.empty()) return;
  const Matrix A = kron_loadings(s);
  Matrix precision = A.transpose() * sigma_inv.asDiagonal() * A;
  precision.diagonal() += s.h.cwiseInverse();
  const Llt llt = factor_precision(precision, diag);
  for (std::size_t i = 0; i < s.eta.size(); ++i) {
    const Vector rhs = s.eta_mean(data.subjects[i].x).cwiseQuotient(s.h) +
                       A.transpose() * as_vec(s.theta[i]).cwiseProduct(sigma_inv);
    const Vector draw = draw_from_factor(llt, llt.solve(rhs), rng);
    s.eta[i] = Eigen::Map<const Matrix>(draw.data(), q1, q2);
  }
}

void update_latent(ModelState& s, const FunctionalDataset& data, const Matrix& B1, const Matrix& B2, Rng& rng) {
  const LikelihoodTerms terms(data, B1, B2);
  update_latent(s, terms, rng);
}

void update_loadings(ModelState& s, const Hyperparameters& hp, Rng& rng, SamplerDiagnostics* diag) {
  for (std::size_t m = 0; m < s.p1(); ++m)
    s.lambda.row(static_cast<Eigen::Index>(m)) = draw_gaussian(lambda_row_conditional(s, m), rng, diag).transpose();
  for (std::size_t l = 0; l < s.p2(); ++l)
    s.gamma.row(static_cast<Eigen::Index>(l)) = draw_gaussian(gamma_row_conditional(s, l), rng, diag).transpose();

  for (std::size_t k = 0; k < s.q1(); ++k)
    for (std::size_t m = 0; m < s.p1(); ++m)
      s.rho1(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) =
          clamp_precision(draw_gamma(rho1_conditional(s, hp, m, k), rng, diag));
  for (std::size_t j = 0; j < s.q2(); ++j)
    for (std::size_t l = 0; l < s.p2(); ++l)
      s.rho2(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) =
          clamp_precision(draw_gamma(rho2_conditional(s, hp, l, j), rng, diag));

  for (std::size_t v = 0; v < s.q1(); ++v) {
    s.delta1[static_cast<Eigen::Index>(v)] = clamp_precision(draw_gamma(delta1_conditional(s, v), rng, diag));
    s.tau1 = cumulative_product(s.delta1);
  }
  for (std::size_t v = 0; v < s.q2(); ++v) {
    s.delta2[static_cast<Eigen::Index>(v)] = clamp_precision(draw_gamma(delta2_conditional(s, v), rng, diag));
    s.tau2 = cumulative_product(s.delta2);
  }
}

void update_scales(ModelState& s, const Hyperparameters& hp, const LikelihoodTerms& terms, Rng& rng) {
  const auto& data = terms.data();
  if (!s.theta.empty()) {
    const auto p1 = static_cast<Eigen::Index>(s.p1());
    const auto p2 = static_cast<Eigen::Index>(s.p2());
    Vector ss = Vector::Zero(p1 * p2);
    for (std::size_t i = 0; i < s.theta.size(); ++i) {
      const Matrix zeta = s.theta[i] - s.lambda * s.eta[i] * s.gamma.transpose();
      ss += as_vec(zeta).cwiseAbs2();
    }
    const double shape = hp.a_sigma + 0.5 * static_cast<double>(s.theta.size());
    for (Eigen::Index j = 0; j < ss.size(); ++j) s.sigma[j] = 1.0 / clamp_precision(rng.gamma(shape, hp.b_sigma + 0.5 * ss[j]));
  } else {
    for (Eigen::Index j = 0; j < s.sigma.size(); ++j) s.sigma[j] = 1.0 / clamp_precision(rng.gamma(hp.a_sigma, hp.b_sigma));
  }

  s.phi2 = 1.0 / clamp_precision(draw_gamma(phi_precision_conditional(s, hp, terms), rng, nullptr));

  for (std::size_t c = 0; c < static_cast<std::size_t>(s.h.size()); ++c)
    s.h[static_cast<Eigen::Index>(c)] = 1.0 / clamp_precision(draw_gamma(h_precision_conditional(s, hp, data, c), rng, nullptr));

  for (std::size_t c = 0; c < static_cast<std::size_t>(s.beta.cols()) && s.d() > 0; ++c)
    s.beta.col(static_cast<Eigen::Index>(c)) = draw_gaussian(beta_column_conditional(s, data, c), rng, nullptr);

  for (std::size_t c = 0; c < static_cast<std::size_t>(s.beta.cols()); ++c)
    for (std::size_t r = 0; r < s.d(); ++r)
      s.omega(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          1.0 / clamp_precision(draw_gamma(omega_precision_conditional(s, r, c), rng, nullptr));
}

void update_scales(ModelState& s, const Hyperparameters& hp, const FunctionalDataset& data, const Matrix& B1,
                   const Matrix& B2, Rng& rng) {
  const LikelihoodTerms terms(data, B1, B2);
  update_scales(s, hp, terms, rng);
}

std::array<bool, 4> mh_update_a(ModelState& s, const Hyperparameters& hp, const std::array<double, 4>& step_sd,
                                Rng& rng) {
  std::array<bool, 4> accepted{};
  double* values[4] = {&s.a11, &s.a12, &s.a21, &s.a22};
  for (std::size_t p = 0; p < 4; ++p) {
    const auto which = static_cast<ShrinkageParam>(p);
    const double current = *values[p];
    const double proposal = current * std::exp(step_sd[p] * rng.normal());
    // Random walk on log(a): the Jacobian adds log(proposal / current).
    const double log_ratio = log_shrinkage_target(s, hp, which, proposal) - log_shrinkage_target(s, hp, which, current) +
                             std::log(proposal) - std::log(current);
    if (std::log(rng.uniform()) <= log_ratio) {
      *values[p] = proposal;
      accepted[p] = true;
    }
  }
  return accepted;
}

std::array<bool, 4> gibbs_sweep(ModelState& s, const Hyperparameters& hp, const LikelihoodTerms& terms,
                                const std::array<double, 4>& step_sd, Rng& rng, SamplerDiagnostics* diag) {
  update_latent(s, terms, rng, diag);
  update_loadings(s, hp, rng, diag);
  update_scales(s, hp, terms, rng);
  return mh_update_a(s, hp, step_sd, rng);
}

// ---------------------------------------------------------------------------
// Chains

bool PosteriorDraws::any_failed() const {
  return std::any_of(chains.begin(), chains.end(), [](const ChainDiagnostics& c) { return c.failed; });
}

Matrix PosteriorDraws::omega_of(std::size_t i) const {
  const Draw& d = draws.at(i);
  return d.omega.size() ? d.omega : omega(d.state);
}

namespace {

struct ChainResult {
  std::vector<Draw> draws;
  ChainDiagnostics diag;
};

ChainResult run_one_chain(const FunctionalDataset& data, const Hyperparameters& hp, const Matrix& B1, const Matrix& B2,
                          const ChainConfig& cfg, std::uint32_t chain) {
  ChainResult out;
  out.diag.chain = chain;
  out.diag.loglik_trace.reserve(cfg.n_iterations);
  SamplerDiagnostics sd;
  std::array<double, 4> step;
  step.fill(cfg.mh_step_sd);
  std::array<std::size_t, 4> accepted_post{}, accepted_batch{};
  constexpr std::size_t kBatch = 50;

  try {
    Rng rng(cfg.seed, chain);
    const LikelihoodTerms terms(data, B1, B2);
    ModelState state = init_state(hp, data, B1, B2, rng);
    if (cfg.warm_start) warm_start(state, hp, data);
    for (std::size_t it = 0; it < cfg.n_iterations; ++it) {
      const auto acc = gibbs_sweep(state, hp, terms, step, rng, &sd);
      const double ll = log_likelihood(state, data, B1, B2);
      if (!std::isfinite(ll)) throw ChainError("non-finite log-likelihood at iteration " + std::to_string(it));
      out.diag.loglik_trace.push_back(ll);
      out.diag.iterations_completed = it + 1;

      if (it < cfg.burn_in) {
        for (std::size_t p = 0; p < 4; ++p) accepted_batch[p] += acc[p];
        if (cfg.adapt && (it + 1) % kBatch == 0) {
          const double batch_index = static_cast<double>((it + 1) / kBatch);
          const double delta = std::min(0.1, 1.0 / std::sqrt(batch_index));
          for (std::size_t p = 0; p < 4; ++p) {
            const double rate = static_cast<double>(accepted_batch[p]) / kBatch;
            step[p] *= std::exp(rate > 0.44 ? delta : -delta);
            accepted_batch[p] = 0;
          }
        }
        continue;
      }
      for (std::size_t p = 0; p < 4; ++p) accepted_post[p] += acc[p];
      if ((it - cfg.burn_in) % cfg.thin != 0) continue;

      const std::string violation = check_invariants(state);
      if (!violation.empty()) throw ChainError("invariant violated at iteration " + std::to_string(it) + ": " + violation);
      Draw d;
      d.chain = chain;
      d.iteration = it;
      d.log_likelihood = ll;
      d.state = state;
      if (cfg.cache_omega) d.omega = omega(state);
      out.draws.push_back(std::move(d));
    }
  } catch (const std::exception& e) {
    out.diag.failed = true;
    out.diag.error = e.what();
  }

  const double post = static_cast<double>(cfg.n_iterations - cfg.burn_in);
  const double done_post = out.diag.iterations_completed > cfg.burn_in
                               ? static_cast<double>(out.diag.iterations_completed - cfg.burn_in)
                               : 0.0;
  for (std::size_t p = 0; p < 4; ++p) {
    out.diag.acceptance_rate[p] = done_post > 0 ? static_cast<double>(accepted_post[p]) / std::min(post, done_post) : 0.0;
    out.diag.step_sd[p] = step[p];
  }
  out.diag.truncated_gamma_fallbacks = sd.truncated_gamma.fallbacks;
  out.diag.jitter_retries = sd.jitter_retries;
  return out;
}

}  // namespace

PosteriorDraws run_chain(const FunctionalDataset& data, const Hyperparameters& hyper, const BasisConfig& s_basis,
                         const BasisConfig& t_basis, const ChainConfig& config) {
  config.validate();
  data.validate();
  const Matrix B1 = build_basis(s_basis, data.s_grid);
  const Matrix B2 = build_basis(t_basis, data.t_grid);
  hyper.validate(s_basis.dimension(), t_basis.dimension());

  PosteriorDraws out;
  out.s_basis = s_basis;
  out.t_basis = t_basis;
  out.hyper = hyper;
  out.config = config;
  out.dataset_hash = data.content_hash();
  out.s_grid = data.s_grid;
  out.t_grid = data.t_grid;

  std::vector<ChainResult> results(config.n_chains);
  if (config.n_chains == 1) {
    results[0] = run_one_chain(data, hyper, B1, B2, config, 0);
  } else {
    std::vector<std::future<ChainResult>> futures;
    for (std::size_t c = 0; c < config.n_chains; ++c)
      futures.push_back(std::async(std::launch::async, run_one_chain, std::cref(data), std::cref(hyper), std::cref(B1),
                                   std::cref(B2), std::cref(config), static_cast<std::uint32_t>(c)));
    for (std::size_t c = 0; c < config.n_chains; ++c) results[c] = futures[c].get();
  }
  for (auto& r : results) {
    for (auto& d : r.draws) out.draws.push_back(std::move(d));
    out.chains.push_back(std::move(r.diag));
  }
  return out;
}

}  // namespace lfda
