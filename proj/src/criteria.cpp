#include "lfda/criteria.hpp"

#include <cmath>

#include "lfda/errors.hpp"

namespace lfda {

std::size_t fixed_parameter_count(std::size_t p1, std::size_t p2, std::size_t q1, std::size_t q2, std::size_t d) {
  return p1 * q1 + p2 * q2 + d * q1 * q2 + p1 * p2 + q1 * q2 + 1;
}

std::size_t total_parameter_count(std::size_t p1, std::size_t p2, std::size_t q1, std::size_t q2, std::size_t d,
                                  std::size_t n_subjects) {
  return fixed_parameter_count(p1, p2, q1, q2, d) + n_subjects * (p1 * p2 + q1 * q2);
}

CriteriaReport compute_criteria(const PosteriorDraws& draws, const FunctionalDataset& data, const Matrix& B1,
                                const Matrix& B2) {
  if (draws.draws.empty()) throw ArgumentError("compute_criteria needs at least one draw");
  const ModelState& first = draws.draws.front().state;
  if (first.theta.size() != data.subjects.size())
    throw ArgumentError("draws were fitted to a dataset with a different number of subjects");

  CriteriaReport r;
  r.n_draws = draws.draws.size();
  r.n_subjects = data.subjects.size();
  r.n_obs = data.n_observed();
  if (r.n_obs == 0) throw ArgumentError("compute_criteria needs observed cells");

  // Only Theta and phi^2 enter the likelihood; the plug-in state carries their means.
  ModelState plugin = first;
  for (auto& th : plugin.theta) th.setZero();
  plugin.phi2 = 0.0;
  double deviance_sum = 0.0;
  for (const Draw& dr : draws.draws) {
    deviance_sum += -2.0 * log_likelihood(dr.state, data, B1, B2);
    for (std::size_t i = 0; i < plugin.theta.size(); ++i) plugin.theta[i] += dr.state.theta[i];
    plugin.phi2 += dr.state.phi2;
  }
  const double inv = 1.0 / static_cast<double>(r.n_draws);
  for (auto& th : plugin.theta) th *= inv;
  plugin.phi2 *= inv;

  r.mean_deviance = deviance_sum * inv;
  r.plugin_deviance = -2.0 * log_likelihood(plugin, data, B1, B2);
  r.p_dic = r.mean_deviance - r.plugin_deviance;
  r.dic = r.mean_deviance + r.p_dic;
  r.n_fixed = fixed_parameter_count(first.p1(), first.p2(), first.q1(), first.q2(), first.d());
  r.n_total = total_parameter_count(first.p1(), first.p2(), first.q1(), first.q2(), first.d(), r.n_subjects);
  r.bic1 = r.plugin_deviance + static_cast<double>(r.n_fixed) * std::log(static_cast<double>(r.n_subjects));
  r.bic2 = r.plugin_deviance + static_cast<double>(r.n_total) * std::log(static_cast<double>(r.n_obs));
  return r;
}

}  // namespace lfda
