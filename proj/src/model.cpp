#include "lfda/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include "lfda/distributions.hpp"
#include "lfda/errors.hpp"

namespace lfda {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gamma_logpdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double normal_logpdf(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + r * r / variance);
}

// Gamma draws with a tiny shape can underflow to zero.
double positive_gamma(Rng& rng, double shape, double rate) {
  return std::max(rng.gamma(shape, rate), std::numeric_limits<double>::min());
}

double draw_delta_prior(Rng& rng, double shape, bool truncated) {
  if (!truncated) return positive_gamma(rng, shape, 1.0);
  return sample_truncated_gamma(shape, 1.0, 1.0, rng);
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

void hash_double(std::uint64_t& h, double v) { hash_bytes(h, &v, sizeof v); }

}  // namespace

std::size_t FunctionalDataset::n_observed() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.n_observed();
  return n;
}

void FunctionalDataset::validate() const {
  auto strictly_increasing = [](const std::vector<double>& g) {
    for (std::size_t i = 1; i < g.size(); ++i)
      if (!(g[i] > g[i - 1])) return false;
    return true;
  };
  if (s_grid.empty() || t_grid.empty()) throw ArgumentError("dataset grids must be nonempty");
  if (!strictly_increasing(s_grid) || !strictly_increasing(t_grid))
    throw ArgumentError("dataset grids must be strictly increasing");
  const auto ns = static_cast<Eigen::Index>(s_grid.size());
  const auto nt = static_cast<Eigen::Index>(t_grid.size());
  for (const auto& s : subjects) {
    if (s.y.rows() != ns || s.y.cols() != nt) throw ArgumentError("subject " + s.id + ": y shape disagrees with grids");
    if (s.mask.rows() != ns || s.mask.cols() != nt) throw ArgumentError("subject " + s.id + ": mask shape disagrees with y");
    if (static_cast<std::size_t>(s.x.size()) != d) throw ArgumentError("subject " + s.id + ": covariate length != d");
    if (!s.x.allFinite()) throw ArgumentError("subject " + s.id + ": non-finite covariate");
    for (Eigen::Index k = 0; k < nt; ++k)
      for (Eigen::Index j = 0; j < ns; ++j)
        if (s.mask(j, k) && !std::isfinite(s.y(j, k)))
          throw ArgumentError("subject " + s.id + ": non-finite observed value");
  }
}

std::uint64_t FunctionalDataset::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::uint64_t dims[4] = {s_grid.size(), t_grid.size(), d, subjects.size()};
  hash_bytes(h, dims, sizeof dims);
  for (double v : s_grid) hash_double(h, v);
  for (double v : t_grid) hash_double(h, v);
  for (const auto& s : subjects) {
    for (Eigen::Index k = 0; k < s.y.cols(); ++k)
      for (Eigen::Index j = 0; j < s.y.rows(); ++j) {
        const unsigned char m = s.mask(j, k) ? 1 : 0;
        hash_bytes(h, &m, 1);
        if (m) hash_double(h, s.y(j, k));
      }
    for (Eigen::Index c = 0; c < s.x.size(); ++c) hash_double(h, s.x[c]);
  }
  return h;
}

void Hyperparameters::validate(std::size_t p1, std::size_t p2) const {
  if (q1 == 0 || q2 == 0) throw ArgumentError("latent ranks q1, q2 must be positive");
  if (q1 > p1 || q2 > p2) throw ArgumentError("latent rank exceeds basis dimension");
  for (double v : {nu1, nu2, r1, r2, a_sigma, b_sigma, a_h, b_h, a_phi, b_phi})
    if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError("hyperparameters must be positive and finite");
}

Vector cumulative_product(const Vector& delta) {
  Vector tau(delta.size());
  double acc = 1.0;
  for (Eigen::Index k = 0; k < delta.size(); ++k) tau[k] = (acc *= delta[k]);
  return tau;
}

void ModelState::refresh_tau() {
  tau1 = cumulative_product(delta1);
  tau2 = cumulative_product(delta2);
}

Matrix kron_loadings(const ModelState& state) { return Eigen::kroneckerProduct(state.gamma, state.lambda).eval(); }

Matrix omega(const ModelState& state) {
  const Matrix A = kron_loadings(state);
  Matrix out = A * state.h.asDiagonal() * A.transpose();
  out.diagonal() += state.sigma;
  // Exact symmetry regardless of rounding in the product.
  return (0.5 * (out + out.transpose())).eval();
}

double log_likelihood(const ModelState& state, const FunctionalDataset& data, const Matrix& B1, const Matrix& B2) {
  if (!(state.phi2 > 0.0) || !std::isfinite(state.phi2)) throw StateError("residual variance phi^2 must be positive");
  if (state.theta.size() != data.subjects.size()) throw ArgumentError("state and dataset disagree on subject count");
  const double log_norm = -0.5 * (kLog2Pi + std::log(state.phi2));
  double total = 0.0;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& subj = data.subjects[i];
    const Matrix fitted = eval_surface(state.theta[i], B1, B2);
    if (fitted.rows() != subj.y.rows() || fitted.cols() != subj.y.cols())
      throw ArgumentError("basis rows disagree with data grid");
    for (Eigen::Index k = 0; k < subj.y.cols(); ++k)
      for (Eigen::Index j = 0; j < subj.y.rows(); ++j) {
        if (!subj.mask(j, k)) continue;
        const double r = subj.y(j, k) - fitted(j, k);
        total += log_norm - 0.5 * r * r / state.phi2;
      }
  }
  return total;
}

LogPrior log_prior(const ModelState& s, const Hyperparameters& hp, const FunctionalDataset& data) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const auto q1 = static_cast<Eigen::Index>(s.q1());
  const auto q2 = static_cast<Eigen::Index>(s.q2());

  for (Eigen::Index v = 1; v < q1; ++v)
    if (!(s.delta1[v] > 1.0)) return {kNegInf, false};
  for (Eigen::Index v = 1; v < q2; ++v)
    if (!(s.delta2[v] > 1.0)) return {kNegInf, false};
  if (!(s.delta1[0] > 0.0) || !(s.delta2[0] > 0.0) || !(s.phi2 > 0.0) || (s.sigma.array() <= 0.0).any() ||
      (s.h.array() <= 0.0).any() || (s.omega.array() <= 0.0).any() || (s.rho1.array() <= 0.0).any() ||
      (s.rho2.array() <= 0.0).any() || !(s.a11 > 0.0 && s.a12 > 0.0 && s.a21 > 0.0 && s.a22 > 0.0))
    return {kNegInf, false};

  double lp = 0.0;
  lp += gamma_logpdf(s.a11, hp.r1, 1.0) + gamma_logpdf(s.a21, hp.r1, 1.0);
  lp += gamma_logpdf(s.a12, hp.r2, 1.0) + gamma_logpdf(s.a22, hp.r2, 1.0);

  // delta_1 untruncated, the rest truncated to (1, inf) with tail-mass normalizer.
  auto delta_terms = [&](const Vector& delta, double a_first, double a_rest) {
    double acc = gamma_logpdf(delta[0], a_first, 1.0);
    if (delta.size() > 1) {
      const double log_tail = log_upper_gamma_tail(a_rest, 1.0);
      for (Eigen::Index v = 1; v < delta.size(); ++v) acc += gamma_logpdf(delta[v], a_rest, 1.0) - log_tail;
    }
    return acc;
  };
  lp += delta_terms(s.delta1, s.a11, s.a12);
  lp += delta_terms(s.delta2, s.a21, s.a22);

  for (Eigen::Index k = 0; k < q1; ++k)
    for (Eigen::Index m = 0; m < s.lambda.rows(); ++m) {
      lp += gamma_logpdf(s.rho1(m, k), 0.5 * hp.nu1, 0.5 * hp.nu1);
      lp += normal_logpdf(s.lambda(m, k), 0.0, 1.0 / (s.rho1(m, k) * s.tau1[k]));
    }
  for (Eigen::Index j = 0; j < q2; ++j)
    for (Eigen::Index l = 0; l < s.gamma.rows(); ++l) {
      lp += gamma_logpdf(s.rho2(l, j), 0.5 * hp.nu2, 0.5 * hp.nu2);
      lp += normal_logpdf(s.gamma(l, j), 0.0, 1.0 / (s.rho2(l, j) * s.tau2[j]));
    }

  for (Eigen::Index j = 0; j < s.sigma.size(); ++j) lp += gamma_logpdf(1.0 / s.sigma[j], hp.a_sigma, hp.b_sigma);
  for (Eigen::Index j = 0; j < s.h.size(); ++j) lp += gamma_logpdf(1.0 / s.h[j], hp.a_h, hp.b_h);
  lp += gamma_logpdf(1.0 / s.phi2, hp.a_phi, hp.b_phi);

  for (Eigen::Index c = 0; c < s.beta.cols(); ++c)
    for (Eigen::Index r = 0; r < s.beta.rows(); ++r) {
      lp += gamma_logpdf(1.0 / s.omega(r, c), 0.5, 0.5);
      lp += normal_logpdf(s.beta(r, c), 0.0, s.omega(r, c));
    }

  if (s.theta.size() != data.subjects.size()) throw ArgumentError("state and dataset disagree on subject count");
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    const Vector mean = s.eta_mean(data.subjects[i].x);
    const Eigen::Map<const Vector> eta(s.eta[i].data(), s.eta[i].size());
    for (Eigen::Index c = 0; c < eta.size(); ++c) lp += normal_logpdf(eta[c], mean[c], s.h[c]);
    const Matrix zeta = s.theta[i] - s.lambda * s.eta[i] * s.gamma.transpose();
    const Eigen::Map<const Vector> z(zeta.data(), zeta.size());
    for (Eigen::Index c = 0; c < z.size(); ++c) lp += normal_logpdf(z[c], 0.0, s.sigma[c]);
  }
  return {lp, true};
}

ModelState init_state(const Hyperparameters& hp, const FunctionalDataset& data, const Matrix& B1, const Matrix& B2,
                      Rng& rng) {
  const auto p1 = static_cast<Eigen::Index>(B1.cols());
  const auto p2 = static_cast<Eigen::Index>(B2.cols());
  hp.validate(static_cast<std::size_t>(p1), static_cast<std::size_t>(p2));
  const auto q1 = static_cast<Eigen::Index>(hp.q1);
  const auto q2 = static_cast<Eigen::Index>(hp.q2);
  const auto d = static_cast<Eigen::Index>(data.d);
  const auto n = data.subjects.size();
  if (n > 0) {
    data.validate();
    if (B1.rows() != static_cast<Eigen::Index>(data.s_grid.size()) ||
        B2.rows() != static_cast<Eigen::Index>(data.t_grid.size()))
      throw ArgumentError("basis matrices must be evaluated on the dataset grids");
  }

  ModelState s;
  s.a11 = positive_gamma(rng, hp.r1, 1.0);
  s.a12 = positive_gamma(rng, hp.r2, 1.0);
  s.a21 = positive_gamma(rng, hp.r1, 1.0);
  s.a22 = positive_gamma(rng, hp.r2, 1.0);
  s.delta1.resize(q1);
  s.delta2.resize(q2);
  for (Eigen::Index v = 0; v < q1; ++v) s.delta1[v] = draw_delta_prior(rng, v == 0 ? s.a11 : s.a12, v > 0);
  for (Eigen::Index v = 0; v < q2; ++v) s.delta2[v] = draw_delta_prior(rng, v == 0 ? s.a21 : s.a22, v > 0);
  s.refresh_tau();

  s.rho1.resize(p1, q1);
  s.lambda.resize(p1, q1);
  for (Eigen::Index k = 0; k < q1; ++k)
    for (Eigen::Index m = 0; m < p1; ++m) {
      s.rho1(m, k) = positive_gamma(rng, 0.5 * hp.nu1, 0.5 * hp.nu1);
      s.lambda(m, k) = rng.normal() / std::sqrt(s.rho1(m, k) * s.tau1[k]);
    }
  s.rho2.resize(p2, q2);
  s.gamma.resize(p2, q2);
  for (Eigen::Index j = 0; j < q2; ++j)
    for (Eigen::Index l = 0; l < p2; ++l) {
      s.rho2(l, j) = positive_gamma(rng, 0.5 * hp.nu2, 0.5 * hp.nu2);
      s.gamma(l, j) = rng.normal() / std::sqrt(s.rho2(l, j) * s.tau2[j]);
    }

  s.sigma.resize(p1 * p2);
  for (Eigen::Index j = 0; j < s.sigma.size(); ++j) s.sigma[j] = 1.0 / positive_gamma(rng, hp.a_sigma, hp.b_sigma);
  s.h.resize(q1 * q2);
  for (Eigen::Index j = 0; j < s.h.size(); ++j) s.h[j] = 1.0 / positive_gamma(rng, hp.a_h, hp.b_h);
  s.phi2 = 1.0 / positive_gamma(rng, hp.a_phi, hp.b_phi);

  s.omega.resize(d, q1 * q2);
  s.beta.resize(d, q1 * q2);
  for (Eigen::Index c = 0; c < q1 * q2; ++c)
    for (Eigen::Index r = 0; r < d; ++r) {
      s.omega(r, c) = 1.0 / positive_gamma(rng, 0.5, 0.5);
      s.beta(r, c) = rng.normal() * std::sqrt(s.omega(r, c));
    }

  s.eta.reserve(n);
  for (const auto& subj : data.subjects) {
    const Vector mean = s.eta_mean(subj.x);
    Matrix e(q1, q2);
    for (Eigen::Index c = 0; c < e.size(); ++c) e.data()[c] = mean[c] + std::sqrt(s.h[c]) * rng.normal();
    s.eta.push_back(std::move(e));
  }

  // Ridge projection of each subject's observed cells onto the tensor design.
  if (n > 0) {
    const Matrix G1 = B1.transpose() * B1;
    const Matrix G2 = B2.transpose() * B2;
    const Matrix full_gram = Eigen::kroneckerProduct(G2, G1).eval();
    double rss = 0.0;
    std::size_t n_obs = 0;
    s.theta.reserve(n);
    for (const auto& subj : data.subjects) {
      Matrix gram;
      Matrix y_masked = subj.y;
      for (Eigen::Index k = 0; k < y_masked.cols(); ++k)
        for (Eigen::Index j = 0; j < y_masked.rows(); ++j)
          if (!subj.mask(j, k)) y_masked(j, k) = 0.0;
      if (subj.complete()) {
        gram = full_gram;
      } else {
        gram = Matrix::Zero(p1 * p2, p1 * p2);
        for (Eigen::Index k = 0; k < subj.y.cols(); ++k)
          for (Eigen::Index j = 0; j < subj.y.rows(); ++j)
            if (subj.mask(j, k)) {
              const Vector row = tensor_row(B1.row(j).transpose(), B2.row(k).transpose());
              gram.noalias() += row * row.transpose();
            }
      }
      const Matrix rhs_m = B1.transpose() * y_masked * B2;
      const Eigen::Map<const Vector> rhs(rhs_m.data(), rhs_m.size());
      const double ridge = 1e-6 * std::max(gram.trace() / static_cast<double>(p1 * p2), 1e-12);
      gram.diagonal().array() += ridge;
      const Vector coef = gram.ldlt().solve(rhs);
      Matrix th = Eigen::Map<const Matrix>(coef.data(), p1, p2);
      const Matrix fitted = eval_surface(th, B1, B2);
      for (Eigen::Index k = 0; k < subj.y.cols(); ++k)
        for (Eigen::Index j = 0; j < subj.y.rows(); ++j)
          if (subj.mask(j, k)) {
            const double r = subj.y(j, k) - fitted(j, k);
            rss += r * r;
            ++n_obs;
          }
      s.theta.push_back(std::move(th));
    }
    if (n_obs > 0) {
      double scale = 0.0;
      for (const auto& subj : data.subjects)
        for (Eigen::Index k = 0; k < subj.y.cols(); ++k)
          for (Eigen::Index j = 0; j < subj.y.rows(); ++j)
            if (subj.mask(j, k)) scale += subj.y(j, k) * subj.y(j, k);
      scale /= static_cast<double>(n_obs);
      s.phi2 = std::max(rss / static_cast<double>(n_obs), 1e-8 * std::max(scale, 1.0));
    }
  }
  return s;
}

double relative_min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return ev.minCoeff() / scale;
}

void warm_start(ModelState& s, const Hyperparameters& hp, const FunctionalDataset& data) {
  const std::size_t n = s.theta.size();
  if (n == 0) return;
  const Eigen::Index p1 = s.lambda.rows(), p2 = s.gamma.rows();
  const Eigen::Index q1 = s.lambda.cols(), q2 = s.gamma.cols();
  Matrix M1 = Matrix::Zero(p1, p1), M2 = Matrix::Zero(p2, p2);
  for (const Matrix& th : s.theta) {
    M1.noalias() += th * th.transpose();
    M2.noalias() += th.transpose() * th;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> e1(M1), e2(M2);
  s.lambda = e1.eigenvectors().rowwise().reverse().leftCols(q1);
  s.gamma = e2.eigenvectors().rowwise().reverse().leftCols(q2);

  const Eigen::Index r = q1 * q2;
  const auto d = static_cast<Eigen::Index>(data.d);
  Matrix E(static_cast<Eigen::Index>(n), r);
  Matrix X(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    s.eta[i] = s.lambda.transpose() * s.theta[i] * s.gamma;
    E.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(s.eta[i].data(), r).transpose();
    if (d > 0) X.row(static_cast<Eigen::Index>(i)) = data.subjects[i].x.transpose();
  }
  if (d > 0) {
    Matrix xtx = X.transpose() * X;
    xtx.diagonal().array() += 1e-8 * std::max(xtx.diagonal().maxCoeff(), 1.0);
    s.beta = xtx.ldlt().solve(X.transpose() * E);
  }
  const Matrix resid = d > 0 ? Matrix(E - X * s.beta) : E;
  for (Eigen::Index c = 0; c < r; ++c)
    s.h[c] = (hp.b_h + 0.5 * resid.col(c).squaredNorm()) / (hp.a_h + 0.5 * static_cast<double>(n));

  Vector ss = Vector::Zero(p1 * p2);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix z = s.theta[i] - s.lambda * s.eta[i] * s.gamma.transpose();
    ss += Eigen::Map<const Vector>(z.data(), z.size()).cwiseAbs2();
  }
  s.sigma = ((0.5 * ss).array() + hp.b_sigma) / (hp.a_sigma + 0.5 * static_cast<double>(n));
}

std::string check_invariants(const ModelState& s) {
  for (Eigen::Index v = 1; v < s.delta1.size(); ++v)
    if (!(s.delta1[v] > 1.0)) return "delta1[" + std::to_string(v) + "] <= 1";
  for (Eigen::Index v = 1; v < s.delta2.size(); ++v)
    if (!(s.delta2[v] > 1.0)) return "delta2[" + std::to_string(v) + "] <= 1";
  if (s.delta1.size() && !(s.delta1[0] > 0.0)) return "delta1[0] <= 0";
  if (s.delta2.size() && !(s.delta2[0] > 0.0)) return "delta2[0] <= 0";
  const Vector t1 = cumulative_product(s.delta1), t2 = cumulative_product(s.delta2);
  for (Eigen::Index k = 1; k < t1.size(); ++k)
    if (!(t1[k] > t1[k - 1])) return "tau1 not strictly increasing";
  for (Eigen::Index k = 1; k < t2.size(); ++k)
    if (!(t2[k] > t2[k - 1])) return "tau2 not strictly increasing";
  if (!(s.phi2 > 0.0) || !std::isfinite(s.phi2)) return "phi2 not positive";
  if (!((s.sigma.array() > 0.0).all() && s.sigma.allFinite())) return "sigma not positive";
  if (!((s.h.array() > 0.0).all() && s.h.allFinite())) return "h not positive";
  if (!(s.omega.array() > 0.0).all()) return "omega not positive";
  if (!(s.rho1.array() > 0.0).all() || !(s.rho2.array() > 0.0).all()) return "local precisions not positive";
  if (!(s.a11 > 0.0 && s.a12 > 0.0 && s.a21 > 0.0 && s.a22 > 0.0)) return "shrinkage hyperparameters not positive";
  return {};
}

}  // namespace lfda
