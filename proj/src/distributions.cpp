#include "lfda/distributions.hpp"

#include <cmath>
#include <exception>

#include <boost/math/special_functions/gamma.hpp>

#include "lfda/errors.hpp"

namespace lfda {

namespace {

// Rejection from lower + Exp(lambda). For shape <= 1 lambda = rate; otherwise
// lambda = rate - (shape - 1) / lower, which keeps the ratio maximal at the
// boundary. Only reached far in the tail, where lower > (shape - 1) / rate.
double tail_rejection(double shape, double rate, double lower, Rng& rng) {
  if (shape > 1.0 && rate * lower <= shape - 1.0) {
    // Boundary at or below the mode: plain rejection is efficient here.
    for (;;) {
      const double x = rng.gamma(shape, rate);
      if (x > lower) return x;
    }
  }
  const double lambda = shape <= 1.0 ? rate : rate - (shape - 1.0) / lower;
  for (;;) {
    const double x = lower + rng.exponential(lambda);
    const double log_accept = (shape - 1.0) * std::log(x / lower) - (rate - lambda) * (x - lower);
    if (std::log(rng.uniform()) <= log_accept) return x;
  }
}

}  // namespace

double log_upper_gamma_tail(double shape, double x) {
  if (x <= 0.0) return 0.0;
  const double q = boost::math::gamma_q(shape, x);
  if (q > 0.0) return std::log(q);
  // Asymptotic tail for very large x: Q ~ x^{a-1} e^{-x} / Gamma(a).
  return (shape - 1.0) * std::log(x) - x - std::lgamma(shape);
}

double sample_truncated_gamma(double shape, double rate, double lower, Rng& rng, TruncatedGammaStats* stats) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw ArgumentError("truncated gamma needs shape, rate > 0");
  if (stats) ++stats->draws;
  if (!(lower > 0.0)) {
    const double x = rng.gamma(shape, rate);
    return x > 0.0 ? x : std::numeric_limits<double>::min();
  }

  const double z = rate * lower;
  const double tail = boost::math::gamma_q(shape, z);
  if (tail >= 1e-300) {
    const double u = rng.uniform() * tail;
    double x = -1.0;
    try {
      x = boost::math::gamma_q_inv(shape, u) / rate;
    } catch (const std::exception&) {
      x = -1.0;
    }
    if (x > lower) return x;
    // Rounding at the boundary; the exact draw lies in (lower, lower + ulp].
    if (x >= lower * (1.0 - 1e-12)) return std::nextafter(lower, std::numeric_limits<double>::infinity());
  }
  if (stats) ++stats->fallbacks;
  return tail_rejection(shape, rate, lower, rng);
}

}  // namespace lfda
