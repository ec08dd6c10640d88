#include "doctest.h"

#include <cmath>
#include <numbers>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "fixtures.hpp"
#include "lfda/errors.hpp"
#include "lfda/model.hpp"

using namespace lfda;
using fixtures::random_dataset;
using fixtures::random_state;

namespace {

double ln_gamma_pdf(double x, double shape, double rate) {
  return std::log(boost::math::pdf(boost::math::gamma_distribution<>(shape, 1.0 / rate), x));
}

double ln_normal_pdf(double x, double mean, double variance) {
  return std::log(boost::math::pdf(boost::math::normal_distribution<>(mean, std::sqrt(variance)), x));
}

// Per-factor oracle of the joint prior, written element by element.
double prior_oracle(const ModelState& s, const Hyperparameters& hp, const FunctionalDataset& data) {
  double lp = ln_gamma_pdf(s.a11, hp.r1, 1) + ln_gamma_pdf(s.a21, hp.r1, 1) + ln_gamma_pdf(s.a12, hp.r2, 1) +
              ln_gamma_pdf(s.a22, hp.r2, 1);
  lp += ln_gamma_pdf(s.delta1[0], s.a11, 1) + ln_gamma_pdf(s.delta2[0], s.a21, 1);
  for (Eigen::Index v = 1; v < s.delta1.size(); ++v)
    lp += ln_gamma_pdf(s.delta1[v], s.a12, 1) - std::log(boost::math::gamma_q(s.a12, 1.0));
  for (Eigen::Index v = 1; v < s.delta2.size(); ++v)
    lp += ln_gamma_pdf(s.delta2[v], s.a22, 1) - std::log(boost::math::gamma_q(s.a22, 1.0));
  double tau = 1.0;
  for (Eigen::Index k = 0; k < s.lambda.cols(); ++k) {
    tau *= s.delta1[k];
    for (Eigen::Index m = 0; m < s.lambda.rows(); ++m)
      lp += ln_gamma_pdf(s.rho1(m, k), hp.nu1 / 2, hp.nu1 / 2) + ln_normal_pdf(s.lambda(m, k), 0, 1 / (s.rho1(m, k) * tau));
  }
  tau = 1.0;
  for (Eigen::Index j = 0; j < s.gamma.cols(); ++j) {
    tau *= s.delta2[j];
    for (Eigen::Index l = 0; l < s.gamma.rows(); ++l)
      lp += ln_gamma_pdf(s.rho2(l, j), hp.nu2 / 2, hp.nu2 / 2) + ln_normal_pdf(s.gamma(l, j), 0, 1 / (s.rho2(l, j) * tau));
  }
  for (Eigen::Index j = 0; j < s.sigma.size(); ++j) lp += ln_gamma_pdf(1 / s.sigma[j], hp.a_sigma, hp.b_sigma);
  for (Eigen::Index j = 0; j < s.h.size(); ++j) lp += ln_gamma_pdf(1 / s.h[j], hp.a_h, hp.b_h);
  lp += ln_gamma_pdf(1 / s.phi2, hp.a_phi, hp.b_phi);
  for (Eigen::Index i = 0; i < s.beta.size(); ++i)
    lp += ln_gamma_pdf(1 / s.omega.data()[i], 0.5, 0.5) + ln_normal_pdf(s.beta.data()[i], 0, s.omega.data()[i]);
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    const Vector mean = s.beta.transpose() * data.subjects[i].x;
    const auto q1 = s.eta[i].rows();
    for (Eigen::Index b = 0; b < s.eta[i].cols(); ++b)
      for (Eigen::Index a = 0; a < q1; ++a) lp += ln_normal_pdf(s.eta[i](a, b), mean[a + q1 * b], s.h[a + q1 * b]);
    const auto p1 = s.theta[i].rows();
    for (Eigen::Index l = 0; l < s.theta[i].cols(); ++l)
      for (Eigen::Index m = 0; m < p1; ++m) {
        double fit = 0.0;
        for (Eigen::Index a = 0; a < s.lambda.cols(); ++a)
          for (Eigen::Index b = 0; b < s.gamma.cols(); ++b) fit += s.lambda(m, a) * s.eta[i](a, b) * s.gamma(l, b);
        lp += ln_normal_pdf(s.theta[i](m, l), fit, s.sigma[m + p1 * l]);
      }
  }
  return lp;
}

// Scalar summation oracle of the conditional likelihood.
double likelihood_oracle(const ModelState& s, const FunctionalDataset& data, const Matrix& B1, const Matrix& B2) {
  double ll = 0.0;
  for (std::size_t i = 0; i < data.subjects.size(); ++i) {
    const auto& r = data.subjects[i];
    for (Eigen::Index k = 0; k < r.y.cols(); ++k)
      for (Eigen::Index j = 0; j < r.y.rows(); ++j) {
        if (!r.mask(j, k)) continue;
        double mu = 0.0;
        for (Eigen::Index m = 0; m < B1.cols(); ++m)
          for (Eigen::Index l = 0; l < B2.cols(); ++l) mu += B1(j, m) * s.theta[i](m, l) * B2(k, l);
        ll += ln_normal_pdf(r.y(j, k), mu, s.phi2);
      }
  }
  return ll;
}

struct Tiny {
  FunctionalDataset data;
  Matrix B1, B2;
  ModelState state;
};

Tiny tiny(std::uint64_t seed) {
  Rng rng(seed);
  Tiny t;
  t.data = random_dataset(3, 4, 5, 2, rng);
  t.B1 = build_basis(BasisConfig::uniform(1, 3), t.data.s_grid);
  t.B2 = build_basis(BasisConfig::uniform(2, 4), t.data.t_grid);
  t.state = random_state(3, 4, 2, 2, 2, 3, rng);
  return t;
}

Hyperparameters small_hyper() {
  Hyperparameters hp;
  hp.q1 = 2;
  hp.q2 = 2;
  return hp;
}

}  // namespace

TEST_CASE("omega with zero loadings is the diagonal of Sigma") {
  Rng rng(1);
  ModelState s = random_state(3, 2, 2, 1, 1, 0, rng);
  s.lambda.setZero();
  s.gamma.setZero();
  const Matrix om = omega(s);
  CHECK((om - Matrix(s.sigma.asDiagonal())).norm() == 0.0);
}

TEST_CASE("omega with unit loadings and zero Sigma has one nonzero entry") {
  Rng rng(2);
  ModelState s = random_state(3, 3, 1, 1, 1, 0, rng);
  s.lambda.setZero();
  s.gamma.setZero();
  s.lambda(0, 0) = 1;
  s.gamma(0, 0) = 1;
  s.h[0] = 0.7;
  s.sigma.setZero();
  const Matrix om = omega(s);
  CHECK(om(0, 0) == doctest::Approx(0.7));
  CHECK(om.cwiseAbs().sum() == doctest::Approx(0.7));
}

TEST_CASE("omega matches the Monte Carlo covariance of vec(Lambda eta Gamma^T + zeta)") {
  Rng rng(3);
  ModelState s = random_state(3, 3, 2, 2, 1, 0, rng);
  const Matrix om = omega(s);
  constexpr int N = 1000000;
  const Eigen::Index P = 9;
  Matrix sum = Matrix::Zero(P, P), sum_sq = Matrix::Zero(P, P);
  Rng sim(4);
  Matrix eta(2, 2);
  for (int it = 0; it < N; ++it) {
    for (Eigen::Index c = 0; c < 4; ++c) eta.data()[c] = std::sqrt(s.h[c]) * sim.normal();
    Matrix th = s.lambda * eta * s.gamma.transpose();
    for (Eigen::Index c = 0; c < P; ++c) th.data()[c] += std::sqrt(s.sigma[c]) * sim.normal();
    const Eigen::Map<const Vector> v(th.data(), P);
    const Matrix outer = v * v.transpose();
    sum += outer;
    sum_sq += outer.cwiseProduct(outer);
  }
  const Matrix mean = sum / N;
  const Matrix se = ((sum_sq / N - mean.cwiseProduct(mean)) / N).cwiseSqrt();
  for (Eigen::Index a = 0; a < P; ++a)
    for (Eigen::Index b = 0; b < P; ++b) CHECK(std::abs(mean(a, b) - om(a, b)) < 3 * se(a, b));
}

TEST_CASE("omega is symmetric positive semidefinite") {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    Rng rng(seed);
    const Matrix om = omega(random_state(4, 3, 2, 3, 1, 0, rng));
    CHECK((om - om.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(relative_min_eigenvalue(om) >= -1e-8);
  }
}

TEST_CASE("log likelihood of an exact fit at one cell") {
  Rng rng(5);
  FunctionalDataset data = random_dataset(1, 3, 3, 1, rng);
  const Matrix B1 = build_basis(BasisConfig::uniform(1, 3), data.s_grid);
  const Matrix B2 = build_basis(BasisConfig::uniform(1, 3), data.t_grid);
  ModelState s = random_state(3, 3, 1, 1, 1, 1, rng);
  s.phi2 = 0.3;
  data.subjects[0].mask.setConstant(false);
  data.subjects[0].mask(1, 2) = true;
  data.subjects[0].y = eval_surface(s.theta[0], B1, B2);
  CHECK(log_likelihood(s, data, B1, B2) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 0.3)).epsilon(1e-14));
}

TEST_CASE("log likelihood of fully masked data is zero") {
  Tiny t = tiny(6);
  for (auto& r : t.data.subjects) r.mask.setConstant(false);
  CHECK(log_likelihood(t.state, t.data, t.B1, t.B2) == 0.0);
}

TEST_CASE("log likelihood matches scalar summation") {
  for (std::uint64_t seed = 7; seed < 12; ++seed) {
    Tiny t = tiny(seed);
    t.data.subjects[1].mask(2, 3) = false;
    const double got = log_likelihood(t.state, t.data, t.B1, t.B2);
    CHECK(std::abs(got - likelihood_oracle(t.state, t.data, t.B1, t.B2)) <= 1e-10 * std::max(1.0, std::abs(got)));
  }
}

TEST_CASE("masking one cell removes exactly that cell's log density") {
  Tiny t = tiny(12);
  const double full = log_likelihood(t.state, t.data, t.B1, t.B2);
  const Matrix fit = eval_surface(t.state.theta[2], t.B1, t.B2);
  const double cell = ln_normal_pdf(t.data.subjects[2].y(1, 4), fit(1, 4), t.state.phi2);
  t.data.subjects[2].mask(1, 4) = false;
  CHECK(std::abs(full - cell - log_likelihood(t.state, t.data, t.B1, t.B2)) <= 1e-12 * std::max(1.0, std::abs(full)));
}

TEST_CASE("nonpositive residual variance is a state error") {
  Tiny t = tiny(13);
  t.state.phi2 = 0.0;
  CHECK_THROWS_AS(log_likelihood(t.state, t.data, t.B1, t.B2), StateError);
}

TEST_CASE("log prior flags a truncated delta below one") {
  Tiny t = tiny(14);
  t.state.delta1[1] = 0.5;
  t.state.refresh_tau();
  const LogPrior lp = log_prior(t.state, small_hyper(), t.data);
  CHECK_FALSE(lp.in_support);
  CHECK(std::isinf(lp.value));
  CHECK(lp.value < 0);
}

TEST_CASE("log prior in phi alone is the gamma log density of the precision") {
  Tiny t = tiny(15);
  const Hyperparameters hp = small_hyper();
  ModelState a = t.state, b = t.state;
  a.phi2 = 0.2;
  b.phi2 = 3.0;
  const double diff = log_prior(a, hp, t.data).value - log_prior(b, hp, t.data).value;
  const double expect = ln_gamma_pdf(1 / 0.2, hp.a_phi, hp.b_phi) - ln_gamma_pdf(1 / 3.0, hp.a_phi, hp.b_phi);
  CHECK(diff == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("log prior matches the per-factor oracle") {
  for (std::uint64_t seed = 16; seed < 21; ++seed) {
    Tiny t = tiny(seed);
    const Hyperparameters hp = small_hyper();
    const LogPrior lp = log_prior(t.state, hp, t.data);
    REQUIRE(lp.in_support);
    const double oracle = prior_oracle(t.state, hp, t.data);
    CHECK(std::abs(lp.value - oracle) <= 1e-10 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("init_state respects the invariants and is deterministic") {
  Tiny t = tiny(21);
  const Hyperparameters hp = small_hyper();
  Rng r1(99), r2(99);
  const ModelState a = init_state(hp, t.data, t.B1, t.B2, r1);
  const ModelState b = init_state(hp, t.data, t.B1, t.B2, r2);
  CHECK(check_invariants(a).empty());
  for (Eigen::Index k = 1; k < a.tau1.size(); ++k) CHECK(a.tau1[k] > a.tau1[k - 1]);
  CHECK(a.theta.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.theta[i] == b.theta[i]);
  CHECK(a.lambda == b.lambda);
  CHECK(a.gamma == b.gamma);
  CHECK(a.sigma == b.sigma);
  CHECK(a.phi2 == b.phi2);
  CHECK(a.delta1 == b.delta1);
}

TEST_CASE("init_state without subjects returns parameters only") {
  FunctionalDataset empty;
  empty.d = 1;
  const Matrix B1 = Matrix::Zero(0, 4), B2 = Matrix::Zero(0, 3);
  Hyperparameters hp = small_hyper();
  Rng rng(22);
  const ModelState s = init_state(hp, empty, B1, B2, rng);
  CHECK(s.theta.empty());
  CHECK(s.eta.empty());
  CHECK(s.p1() == 4);
  CHECK(s.p2() == 3);
  CHECK(check_invariants(s).empty());
}

TEST_CASE("init_state rejects a rank above the basis dimension") {
  Tiny t = tiny(23);
  Hyperparameters hp = small_hyper();
  hp.q1 = 4;
  Rng rng(1);
  CHECK_THROWS_AS(init_state(hp, t.data, t.B1, t.B2, rng), ArgumentError);
}

TEST_CASE("prior tau sequences are strictly increasing and increase in mean") {
  FunctionalDataset empty;
  empty.d = 1;
  const Matrix B1 = Matrix::Zero(0, 6), B2 = Matrix::Zero(0, 6);
  Hyperparameters hp;  // q1 = q2 = 6
  Rng rng(24);
  std::size_t violations = 0;
  // Truncation makes every tau increase; the median of log tau is a stable
  // summary of stochastic ordering where raw means are heavy tailed.
  std::vector<std::vector<double>> log_tau(6);
  for (int it = 0; it < 10000; ++it) {
    const ModelState s = init_state(hp, empty, B1, B2, rng);
    for (Eigen::Index k = 1; k < 6; ++k) {
      if (!(s.tau1[k] > s.tau1[k - 1])) ++violations;
      if (!(s.tau2[k] > s.tau2[k - 1])) ++violations;
    }
    for (Eigen::Index k = 0; k < 6; ++k) log_tau[static_cast<std::size_t>(k)].push_back(std::log(s.tau1[k]));
  }
  CHECK(violations == 0);
  std::vector<double> mean(6, 0.0);
  for (std::size_t k = 0; k < 6; ++k) {
    for (double v : log_tau[k]) mean[k] += v;
    mean[k] /= 10000;
  }
  for (std::size_t k = 1; k < 6; ++k) CHECK(mean[k] > mean[k - 1]);
}

TEST_CASE("warm start keeps the invariants and orthonormal loadings") {
  Rng rng(25);
  FunctionalDataset data = random_dataset(6, 5, 6, 1, rng);
  const Matrix B1 = build_basis(BasisConfig::uniform(2, 4), data.s_grid);
  const Matrix B2 = build_basis(BasisConfig::uniform(3, 5), data.t_grid);
  const Hyperparameters hp = small_hyper();
  ModelState s = init_state(hp, data, B1, B2, rng);
  const auto theta_before = s.theta;
  warm_start(s, hp, data);
  CHECK(check_invariants(s).empty());
  CHECK((s.lambda.transpose() * s.lambda - Matrix::Identity(2, 2)).norm() < 1e-10);
  CHECK((s.gamma.transpose() * s.gamma - Matrix::Identity(2, 2)).norm() < 1e-10);
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    CHECK(s.theta[i] == theta_before[i]);
    CHECK((s.eta[i] - s.lambda.transpose() * s.theta[i] * s.gamma).norm() < 1e-10);
  }
}

TEST_CASE("warm start without subjects is a no-op") {
  FunctionalDataset empty;
  empty.d = 1;
  const Matrix B1 = Matrix::Zero(0, 3), B2 = Matrix::Zero(0, 3);
  Hyperparameters hp = small_hyper();
  Rng rng(26);
  ModelState s = init_state(hp, empty, B1, B2, rng);
  const ModelState before = s;
  warm_start(s, hp, empty);
  CHECK(s.lambda == before.lambda);
  CHECK(s.sigma == before.sigma);
}

TEST_CASE("content hash changes with an observed value") {
  Rng rng(27);
  FunctionalDataset a = random_dataset(2, 3, 3, 1, rng);
  FunctionalDataset b = a;
  CHECK(a.content_hash() == b.content_hash());
  b.subjects[0].y(0, 0) += 1e-9;
  CHECK(a.content_hash() != b.content_hash());
}
