#include "doctest.h"

#include <random>
#include <vector>

#include "lfda/errors.hpp"
#include "lfda/splines.hpp"

using namespace lfda;

namespace {

BasisConfig paper_t_basis() { return BasisConfig{3, {1.0 / 6, 2.0 / 6, 3.0 / 6, 4.0 / 6, 5.0 / 6, 5.0 / 6}, 0.0, 1.0}; }

}  // namespace

TEST_CASE("degree 0 basis is an interval indicator") {
  const BasisConfig cfg{0, {0.5}, 0.0, 1.0};
  const std::vector<double> pts{0.25};
  const Matrix B = build_basis(cfg, pts);
  REQUIRE(B.rows() == 1);
  REQUIRE(B.cols() == 2);
  CHECK(B(0, 0) == 1.0);
  CHECK(B(0, 1) == 0.0);
}

TEST_CASE("fit configuration with a doubled knot has ten functions") {
  CHECK(paper_t_basis().dimension() == 10);
  const std::vector<double> pts{0.3};
  CHECK(build_basis(paper_t_basis(), pts).cols() == 10);
}

TEST_CASE("cubic basis values match scipy BSpline") {
  // Frozen from scipy.interpolate.BSpline on the clamped knot vector.
  const std::vector<double> pts{0.0, 0.1, 0.45, 5.0 / 6, 0.9, 1.0};
  const double expected[6][10] = {
      {1, 0, 0, 0, 0, 0, 0, 0, 0, 0},
      {0.06399999999999996, 0.5579999999999999, 0.3420000000000001, 0.03600000000000001, 0, 0, 0, 0, 0, 0},
      {0, 0, 0.004499999999999996, 0.34816666666666657, 0.5901666666666667, 0.05716666666666671, 0, 0, 0, 0},
      {0, 0, 0, 0, 0, 0, 0.49999999999999983, 0.5000000000000001, 0, 0},
      {0, 0, 0, 0, 0, 0, 0.10799999999999998, 0.54, 0.28800000000000003, 0.06400000000000002},
      {0, 0, 0, 0, 0, 0, 0, 0, 0, 1},
  };
  const Matrix B = build_basis(paper_t_basis(), pts);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 10; ++c) CHECK(B(r, c) == doctest::Approx(expected[r][c]).epsilon(1e-12));
}

TEST_CASE("partition of unity, nonnegativity and local support") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int deg = 0; deg <= 4; ++deg) {
    const BasisConfig cfg = BasisConfig::uniform(deg, static_cast<std::size_t>(deg) + 6);
    std::vector<double> pts{0.0, 1.0, 0.5};
    for (int i = 0; i < 200; ++i) pts.push_back(u(gen));
    const Matrix B = build_basis(cfg, pts);
    for (Eigen::Index r = 0; r < B.rows(); ++r) {
      CHECK(std::abs(B.row(r).sum() - 1.0) < 1e-12);
      CHECK(B.row(r).minCoeff() >= 0.0);
      CHECK((B.row(r).array() != 0.0).count() <= deg + 1);
    }
  }
}

TEST_CASE("build_basis errors") {
  const BasisConfig cfg = BasisConfig::uniform(3, 6);
  CHECK_THROWS_AS(build_basis(cfg, std::vector<double>{1.5}), DomainError);
  CHECK_THROWS_AS(build_basis(cfg, std::vector<double>{-0.1}), DomainError);
  CHECK_THROWS_AS(build_basis(cfg, std::vector<double>{}), ArgumentError);
  CHECK_THROWS_AS(build_basis(BasisConfig{3, {}, 0.0, 1.0}, std::vector<double>{0.5}), ArgumentError);
  CHECK_THROWS_AS(build_basis(BasisConfig{3, {0.6, 0.4}, 0.0, 1.0}, std::vector<double>{0.5}), ArgumentError);
  CHECK_THROWS_AS(build_basis(BasisConfig{3, {0.5}, 1.0, 0.0}, std::vector<double>{0.5}), ArgumentError);
  CHECK_THROWS_AS(build_basis(BasisConfig{-1, {0.5}, 0.0, 1.0}, std::vector<double>{0.5}), ArgumentError);
}

TEST_CASE("tensor_row ordering") {
  Vector b1(2), b2(2);
  b1 << 1, 0;
  b2 << 0, 1;
  const Vector r = tensor_row(b1, b2);
  CHECK((r.array() != 0.0).count() == 1);
  CHECK(r[0 + 2 * 1] == 1.0);

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector a(3), b(4);
  for (auto& v : a) v = u(gen);
  for (auto& v : b) v = u(gen);
  const Vector t = tensor_row(a, b);
  for (int m = 0; m < 3; ++m)
    for (int l = 0; l < 4; ++l) CHECK(t[m + 3 * l] == doctest::Approx(a[m] * b[l]).epsilon(1e-15));

  a /= a.sum();
  b /= b.sum();
  CHECK(tensor_row(a, b).sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("tensor_design rows are tensor rows") {
  const std::vector<double> s{0.0, 0.3, 0.8}, t{0.1, 0.6};
  const Matrix B1 = build_basis(BasisConfig::uniform(2, 4), s);
  const Matrix B2 = build_basis(BasisConfig::uniform(3, 5), t);
  const Matrix D = tensor_design(B1, B2);
  for (Eigen::Index k = 0; k < 2; ++k)
    for (Eigen::Index j = 0; j < 3; ++j)
      CHECK((D.row(j + 3 * k).transpose() - tensor_row(B1.row(j).transpose(), B2.row(k).transpose())).norm() < 1e-15);
}

TEST_CASE("eval_surface") {
  const std::vector<double> s{0.0, 0.4, 1.0}, t{0.2, 0.5, 0.9};
  const Matrix B1 = build_basis(BasisConfig::uniform(3, 5), s);
  const Matrix B2 = build_basis(BasisConfig::uniform(2, 4), t);

  CHECK(eval_surface(Matrix::Zero(5, 4), B1, B2).cwiseAbs().maxCoeff() == 0.0);

  Matrix single = Matrix::Zero(5, 4);
  single(2, 1) = 1.0;
  const Matrix f = eval_surface(single, B1, B2);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) CHECK(f(j, k) == doctest::Approx(B1(j, 2) * B2(k, 1)).epsilon(1e-15));

  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  Matrix th(5, 4), th2(5, 4);
  for (Eigen::Index i = 0; i < th.size(); ++i) {
    th.data()[i] = z(gen);
    th2.data()[i] = z(gen);
  }
  const Matrix g = eval_surface(th, B1, B2);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) {
      double acc = 0.0;
      for (int m = 0; m < 5; ++m)
        for (int l = 0; l < 4; ++l) acc += B1(j, m) * th(m, l) * B2(k, l);
      CHECK(std::abs(g(j, k) - acc) < 1e-12);
    }

  const Matrix lin = eval_surface(2.5 * th - 0.7 * th2, B1, B2);
  CHECK((lin - (2.5 * g - 0.7 * eval_surface(th2, B1, B2))).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(eval_surface(Matrix::Zero(4, 4), B1, B2), ArgumentError);
}
