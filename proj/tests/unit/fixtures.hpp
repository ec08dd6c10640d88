#pragma once

// Small deterministic datasets and states shared by the unit tests.

#include <cmath>
#include <string>
#include <vector>

#include "lfda/model.hpp"
#include "lfda/random.hpp"
#include "lfda/splines.hpp"

namespace fixtures {

using lfda::Matrix;
using lfda::Vector;

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// n subjects of standard-normal values on an ns x nt grid, all observed.
inline lfda::FunctionalDataset random_dataset(std::size_t n, std::size_t ns, std::size_t nt, std::size_t d,
                                              lfda::Rng& rng) {
  lfda::FunctionalDataset data;
  data.s_grid = linspace(0.0, 1.0, ns);
  data.t_grid = linspace(0.0, 1.0, nt);
  data.d = d;
  for (std::size_t i = 0; i < n; ++i) {
    lfda::SubjectRecord r;
    r.id = "s" + std::to_string(i);
    r.y.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(nt));
    for (Eigen::Index k = 0; k < r.y.cols(); ++k)
      for (Eigen::Index j = 0; j < r.y.rows(); ++j) r.y(j, k) = rng.normal();
    r.mask = lfda::Mask::Constant(r.y.rows(), r.y.cols(), true);
    r.x = Vector::Zero(static_cast<Eigen::Index>(d));
    if (d > 0) r.x[0] = 1.0;
    for (std::size_t c = 1; c < d; ++c) r.x[static_cast<Eigen::Index>(c)] = rng.normal();
    data.subjects.push_back(std::move(r));
  }
  return data;
}

/// A state satisfying every invariant with all entries drawn at random.
inline lfda::ModelState random_state(std::size_t p1, std::size_t p2, std::size_t q1, std::size_t q2, std::size_t d,
                                     std::size_t n, lfda::Rng& rng) {
  auto I = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  auto pos = [&rng]() { return 0.5 + rng.uniform(); };
  auto fill = [&rng](Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.normal();
  };
  lfda::ModelState s;
  s.lambda.resize(I(p1), I(q1));
  s.gamma.resize(I(p2), I(q2));
  fill(s.lambda);
  fill(s.gamma);
  s.rho1.resize(I(p1), I(q1));
  s.rho2.resize(I(p2), I(q2));
  for (Eigen::Index i = 0; i < s.rho1.size(); ++i) s.rho1.data()[i] = pos();
  for (Eigen::Index i = 0; i < s.rho2.size(); ++i) s.rho2.data()[i] = pos();
  s.delta1.resize(I(q1));
  s.delta2.resize(I(q2));
  for (Eigen::Index v = 0; v < s.delta1.size(); ++v) s.delta1[v] = v == 0 ? pos() : 1.0 + pos();
  for (Eigen::Index v = 0; v < s.delta2.size(); ++v) s.delta2[v] = v == 0 ? pos() : 1.0 + pos();
  s.refresh_tau();
  s.sigma.resize(I(p1 * p2));
  s.h.resize(I(q1 * q2));
  for (Eigen::Index i = 0; i < s.sigma.size(); ++i) s.sigma[i] = pos();
  for (Eigen::Index i = 0; i < s.h.size(); ++i) s.h[i] = pos();
  s.phi2 = pos();
  s.beta.resize(I(d), I(q1 * q2));
  s.omega.resize(I(d), I(q1 * q2));
  fill(s.beta);
  for (Eigen::Index i = 0; i < s.omega.size(); ++i) s.omega.data()[i] = pos();
  for (std::size_t i = 0; i < n; ++i) {
    Matrix th(I(p1), I(p2)), et(I(q1), I(q2));
    fill(th);
    fill(et);
    s.theta.push_back(th);
    s.eta.push_back(et);
  }
  s.a11 = pos();
  s.a12 = 1.0 + pos();
  s.a21 = pos();
  s.a22 = 1.0 + pos();
  return s;
}

inline Matrix basis_on(const lfda::BasisConfig& cfg, const std::vector<double>& grid) {
  return lfda::build_basis(cfg, grid);
}

}  // namespace fixtures
