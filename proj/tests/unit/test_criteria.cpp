#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "lfda/criteria.hpp"
#include "lfda/errors.hpp"

using namespace lfda;
using fixtures::random_dataset;
using fixtures::random_state;

namespace {

struct Fit {
  FunctionalDataset data;
  Matrix B1, B2;
  PosteriorDraws draws;
};

Fit random_fit(std::size_t n_draws, std::uint64_t seed) {
  Rng rng(seed);
  Fit f;
  f.data = random_dataset(3, 4, 4, 1, rng);
  f.B1 = build_basis(BasisConfig::uniform(1, 3), f.data.s_grid);
  f.B2 = build_basis(BasisConfig::uniform(1, 3), f.data.t_grid);
  for (std::size_t i = 0; i < n_draws; ++i) {
    Draw d;
    d.state = random_state(3, 3, 2, 2, 1, 3, rng);
    f.draws.draws.push_back(d);
  }
  return f;
}

}  // namespace

TEST_CASE("parameter counts") {
  // p1 q1 + p2 q2 + d q1 q2 + p1 p2 + q1 q2 + 1
  CHECK(fixed_parameter_count(10, 10, 4, 4, 1) == 40 + 40 + 16 + 100 + 16 + 1);
  CHECK(total_parameter_count(10, 10, 4, 4, 1, 30) == 213 + 30 * 116);
}

TEST_CASE("a single draw has zero effective parameters") {
  Fit f = random_fit(1, 1);
  const CriteriaReport r = compute_criteria(f.draws, f.data, f.B1, f.B2);
  const double D = -2 * log_likelihood(f.draws.draws[0].state, f.data, f.B1, f.B2);
  CHECK(r.mean_deviance == doctest::Approx(D).epsilon(1e-14));
  CHECK(std::abs(r.p_dic) <= 1e-10 * std::abs(D));
  CHECK(r.dic == doctest::Approx(D).epsilon(1e-12));
}

TEST_CASE("duplicating every observation doubles the deviance terms") {
  Fit f = random_fit(4, 2);
  const CriteriaReport once = compute_criteria(f.draws, f.data, f.B1, f.B2);
  Fit g = f;
  for (const auto& s : f.data.subjects) g.data.subjects.push_back(s);
  for (auto& d : g.draws.draws) {
    const auto th = d.state.theta;
    const auto et = d.state.eta;
    d.state.theta.insert(d.state.theta.end(), th.begin(), th.end());
    d.state.eta.insert(d.state.eta.end(), et.begin(), et.end());
  }
  const CriteriaReport twice = compute_criteria(g.draws, g.data, g.B1, g.B2);
  CHECK(twice.mean_deviance == doctest::Approx(2 * once.mean_deviance).epsilon(1e-12));
  CHECK(twice.plugin_deviance == doctest::Approx(2 * once.plugin_deviance).epsilon(1e-12));
  CHECK(twice.p_dic == doctest::Approx(2 * once.p_dic).epsilon(1e-10));
  CHECK(twice.n_obs == 2 * once.n_obs);
}

TEST_CASE("micro model criteria match a hand calculation") {
  // Two indicator functions per axis on a 2 x 2 grid make B1 = B2 = I.
  FunctionalDataset data;
  data.s_grid = {0.25, 0.75};
  data.t_grid = {0.25, 0.75};
  data.d = 1;
  SubjectRecord r;
  r.id = "a";
  r.y.resize(2, 2);
  r.y << 1.0, 2.0, -1.0, 0.5;
  r.mask = Mask::Constant(2, 2, true);
  r.x = Vector::Ones(1);
  data.subjects.push_back(r);
  const BasisConfig ind{0, {0.5}, 0.0, 1.0};
  const Matrix B1 = build_basis(ind, data.s_grid), B2 = build_basis(ind, data.t_grid);
  REQUIRE((B1 - Matrix::Identity(2, 2)).norm() == 0.0);

  Rng rng(3);
  PosteriorDraws draws;
  const double phis[3] = {0.5, 1.0, 2.0};
  const double shifts[3] = {0.1, -0.2, 0.4};
  for (int k = 0; k < 3; ++k) {
    Draw d;
    d.state = random_state(2, 2, 1, 1, 1, 1, rng);
    d.state.theta[0] = r.y.array() + shifts[k];
    d.state.phi2 = phis[k];
    draws.draws.push_back(d);
  }
  const double l2pi = std::log(2 * std::numbers::pi);
  // Each draw misfits all four cells by its shift.
  auto dev = [&](double phi2, double shift) { return 4 * (l2pi + std::log(phi2) + shift * shift / phi2); };
  const double mean_d = (dev(0.5, 0.1) + dev(1.0, -0.2) + dev(2.0, 0.4)) / 3;
  const double plug = dev(3.5 / 3, 0.1);  // mean shift (0.1 - 0.2 + 0.4) / 3
  const CriteriaReport rep = compute_criteria(draws, data, B1, B2);
  CHECK(std::abs(rep.mean_deviance - mean_d) <= 1e-10);
  CHECK(std::abs(rep.plugin_deviance - plug) <= 1e-10);
  CHECK(std::abs(rep.dic - (2 * mean_d - plug)) <= 1e-10);
  const std::size_t nf = 2 + 2 + 1 + 4 + 1 + 1;
  CHECK(rep.n_fixed == nf);
  CHECK(rep.n_total == nf + 5);
  CHECK(std::abs(rep.bic1 - (plug + nf * std::log(1.0))) <= 1e-10);
  CHECK(std::abs(rep.bic2 - (plug + (nf + 5) * std::log(4.0))) <= 1e-10);
}

TEST_CASE("criteria do not depend on draw order") {
  Fit f = random_fit(5, 4);
  const CriteriaReport a = compute_criteria(f.draws, f.data, f.B1, f.B2);
  std::reverse(f.draws.draws.begin(), f.draws.draws.end());
  std::swap(f.draws.draws[0], f.draws.draws[2]);
  const CriteriaReport b = compute_criteria(f.draws, f.data, f.B1, f.B2);
  CHECK(a.dic == doctest::Approx(b.dic).epsilon(1e-12));
  CHECK(a.bic1 == doctest::Approx(b.bic1).epsilon(1e-12));
  CHECK(a.bic2 == doctest::Approx(b.bic2).epsilon(1e-12));
}

TEST_CASE("empty draws and subject-count mismatch are argument errors") {
  Fit f = random_fit(2, 5);
  PosteriorDraws empty;
  CHECK_THROWS_AS(compute_criteria(empty, f.data, f.B1, f.B2), ArgumentError);
  f.data.subjects.pop_back();
  CHECK_THROWS_AS(compute_criteria(f.draws, f.data, f.B1, f.B2), ArgumentError);
}
