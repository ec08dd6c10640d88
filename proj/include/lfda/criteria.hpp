#pragma once

#include <cstddef>

#include "lfda/model.hpp"
#include "lfda/sampler.hpp"

namespace lfda {

/// Deviance-based model-selection criteria.
///
/// D(state) = -2 log p(y | Theta, phi^2). The plug-in state takes the
/// posterior means of Theta_i and phi^2; loadings are not averaged.
struct CriteriaReport {
  double dic = 0.0;
  double bic1 = 0.0;
  double bic2 = 0.0;
  double p_dic = 0.0;
  double mean_deviance = 0.0;
  double plugin_deviance = 0.0;
  std::size_t n_fixed = 0;  // Lambda, Gamma, beta, Sigma, H, phi
  std::size_t n_total = 0;  // n_fixed + n (p1 p2 + q1 q2)
  std::size_t n_obs = 0;
  std::size_t n_subjects = 0;
  std::size_t n_draws = 0;
};

/// Parameter counts for a fit with the given dimensions.
std::size_t fixed_parameter_count(std::size_t p1, std::size_t p2, std::size_t q1, std::size_t q2, std::size_t d);
std::size_t total_parameter_count(std::size_t p1, std::size_t p2, std::size_t q1, std::size_t q2, std::size_t d,
                                  std::size_t n_subjects);

CriteriaReport compute_criteria(const PosteriorDraws& draws, const FunctionalDataset& data, const Matrix& B1,
                                const Matrix& B2);

}  // namespace lfda
