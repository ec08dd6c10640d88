#pragma once

#include <cstddef>
#include <limits>

#include "lfda/random.hpp"

namespace lfda {

/// Counts of draws that left the exact inverse-CDF path.
struct TruncatedGammaStats {
  std::size_t draws = 0;
  std::size_t fallbacks = 0;
};

/// Ga(shape, rate) conditioned on value > lower.
///
/// Uses the inverse CDF of the upper tail: u ~ U(0, Q(shape, rate * lower)),
/// x = Q^{-1}(shape, u) / rate. When the tail mass is below 1e-300 the
/// quantile is not representable and an exponential-proposal rejection
/// sampler anchored at `lower` is used instead (counted in `stats`).
/// A lower bound <= 0 (including -inf) means no truncation.
double sample_truncated_gamma(double shape, double rate, double lower, Rng& rng,
                              TruncatedGammaStats* stats = nullptr);

/// log Q(shape, x), the log regularized upper incomplete gamma function.
double log_upper_gamma_tail(double shape, double x);

constexpr double kNoLowerBound = -std::numeric_limits<double>::infinity();

}  // namespace lfda
