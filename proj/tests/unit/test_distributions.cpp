#include "doctest.h"

#include <cmath>
#include <functional>

#include <boost/math/special_functions/gamma.hpp>

#include "lfda/distributions.hpp"

using namespace lfda;

namespace {

struct Moments {
  double mean = 0, se = 0, min = INFINITY;
};

Moments sample_moments(double shape, double rate, double lower, int n, std::uint64_t seed,
                       TruncatedGammaStats* stats = nullptr) {
  Rng rng(seed);
  double s = 0, ss = 0;
  Moments m;
  for (int i = 0; i < n; ++i) {
    const double x = sample_truncated_gamma(shape, rate, lower, rng, stats);
    s += x;
    ss += x * x;
    m.min = std::min(m.min, x);
  }
  m.mean = s / n;
  m.se = std::sqrt((ss / n - m.mean * m.mean) / n);
  return m;
}

// Composite Simpson rule on [a, b] with an even number of panels.
double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4 : 2) * f(a + i * h);
  return acc * h / 3;
}

}  // namespace

TEST_CASE("untruncated unit gamma is exponential with mean one") {
  const Moments m = sample_moments(1, 1, kNoLowerBound, 100000, 1);
  CHECK(std::abs(m.mean - 1.0) < 3 * m.se);
}

TEST_CASE("every draw lies above the truncation point") {
  for (double shape : {0.3, 1.0, 2.0, 7.5})
    for (double rate : {0.5, 1.0, 4.0}) {
      const Moments m = sample_moments(shape, rate, 1.0, 2000, 2);
      CHECK(m.min > 1.0);
    }
}

TEST_CASE("truncated mean matches a quadrature oracle") {
  const double shape = 2, rate = 1, lower = 1;
  auto density = [&](double x) { return std::pow(x, shape - 1) * std::exp(-rate * x); };
  const double mass = simpson(density, lower, 80, 20000);
  const double first = simpson([&](double x) { return x * density(x); }, lower, 80, 20000);
  const double oracle = first / mass;
  CHECK(oracle == doctest::Approx(2.5).epsilon(1e-9));  // Gamma(3,1) / Gamma(2,1) = (5/e) / (2/e)
  const Moments m = sample_moments(shape, rate, lower, 100000, 3);
  CHECK(std::abs(m.mean - oracle) < 3 * m.se);
}

TEST_CASE("a nonpositive lower bound means no truncation") {
  const Moments a = sample_moments(3, 2, 0.0, 50000, 4);
  const Moments b = sample_moments(3, 2, -5.0, 50000, 4);
  CHECK(std::abs(a.mean - 1.5) < 3 * a.se);
  CHECK(a.mean == b.mean);
}

TEST_CASE("a vanishing tail uses the counted rejection fallback") {
  TruncatedGammaStats stats;
  const Moments m = sample_moments(1, 1, 800, 20000, 5, &stats);
  CHECK(stats.draws == 20000);
  CHECK(stats.fallbacks == 20000);
  CHECK(m.min > 800);
  // Memoryless: the excess over the bound is unit exponential.
  CHECK(std::abs(m.mean - 801) < 3 * m.se);
}

TEST_CASE("the exact path records no fallbacks") {
  TruncatedGammaStats stats;
  sample_moments(2, 1, 1, 1000, 6, &stats);
  CHECK(stats.draws == 1000);
  CHECK(stats.fallbacks == 0);
}

TEST_CASE("log upper tail agrees with the regularized incomplete gamma") {
  for (double a : {0.2, 1.0, 3.5})
    for (double x : {0.1, 1.0, 6.0}) CHECK(log_upper_gamma_tail(a, x) == doctest::Approx(std::log(boost::math::gamma_q(a, x))));
  CHECK(log_upper_gamma_tail(1.0, 800) == doctest::Approx(-800.0));
}

TEST_CASE("draws are deterministic per seed") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(sample_truncated_gamma(1.7, 0.9, 1.0, a) == sample_truncated_gamma(1.7, 0.9, 1.0, b));
}
