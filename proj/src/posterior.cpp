#include "lfda/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lfda/errors.hpp"

namespace lfda {

KernelGrid covariance_kernel(const Matrix& omega, const Matrix& B1_s, const Matrix& B2_t, std::vector<double> s_points,
                             std::vector<double> t_points) {
  if (omega.rows() != B1_s.cols() * B2_t.cols() || omega.cols() != omega.rows())
    throw ArgumentError("Omega dimension does not match the tensor basis");
  const Matrix D = tensor_design(B1_s, B2_t);
  KernelGrid k;
  k.s_points = std::move(s_points);
  k.t_points = std::move(t_points);
  k.gram = D * omega * D.transpose();
  k.gram = (0.5 * (k.gram + k.gram.transpose())).eval();
  return k;
}

KernelGrid covariance_kernel(const ModelState& draw, const BasisConfig& s_basis, const BasisConfig& t_basis,
                             const std::vector<double>& s_points, const std::vector<double>& t_points) {
  const Matrix B1 = build_basis(s_basis, s_points);
  const Matrix B2 = build_basis(t_basis, t_points);
  return covariance_kernel(omega(draw), B1, B2, s_points, t_points);
}

Matrix mean_surface(const ModelState& draw, const Vector& x, const Matrix& B1_s, const Matrix& B2_t) {
  if (static_cast<std::size_t>(x.size()) != draw.d())
    throw ArgumentError("covariate vector has length " + std::to_string(x.size()) + ", expected " +
                        std::to_string(draw.d()));
  const Vector m = draw.eta_mean(x);
  const Eigen::Map<const Matrix> M(m.data(), static_cast<Eigen::Index>(draw.q1()), static_cast<Eigen::Index>(draw.q2()));
  return eval_surface(draw.lambda * M * draw.gamma.transpose(), B1_s, B2_t);
}

namespace {

Vector quadrature_weights(const std::vector<double>& pts, Quadrature rule) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  if (rule == Quadrature::Uniform || n < 2) return Vector::Constant(n, 1.0 / static_cast<double>(n));
  Vector w = Vector::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = pts[i + 1] - pts[i];
    w[i] += 0.5 * h;
    w[i + 1] += 0.5 * h;
  }
  return w / w.sum();
}

}  // namespace

MarginalCovariance marginalize(const KernelGrid& kernel, Axis axis, Quadrature rule) {
  const auto ns = static_cast<Eigen::Index>(kernel.s_points.size());
  const auto nt = static_cast<Eigen::Index>(kernel.t_points.size());
  if (ns < 1 || nt < 1) throw ArgumentError("marginalize needs nonempty grids");
  if (kernel.gram.rows() != ns * nt) throw ArgumentError("kernel gram does not match its grids");

  MarginalCovariance out;
  out.axis = axis;
  if (axis == Axis::S) {
    const Vector w = quadrature_weights(kernel.t_points, rule);
    out.points = kernel.s_points;
    out.matrix = Matrix::Zero(ns, ns);
    for (Eigen::Index k = 0; k < nt; ++k) out.matrix += w[k] * kernel.gram.block(k * ns, k * ns, ns, ns);
  } else {
    const Vector w = quadrature_weights(kernel.s_points, rule);
    out.points = kernel.t_points;
    out.matrix = Matrix::Zero(nt, nt);
    for (Eigen::Index k = 0; k < nt; ++k)
      for (Eigen::Index kp = 0; kp < nt; ++kp) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < ns; ++j) acc += w[j] * kernel.gram(j + ns * k, j + ns * kp);
        out.matrix(k, kp) = acc;
      }
  }
  out.matrix = (0.5 * (out.matrix + out.matrix.transpose())).eval();
  return out;
}

double grid_weight(const std::vector<double>& points) {
  if (points.size() < 2) return 1.0;
  return (points.back() - points.front()) / static_cast<double>(points.size() - 1);
}

EigenSummary eigen_decompose(const MarginalCovariance& marg, std::size_t rank) {
  const Matrix& K = marg.matrix;
  const auto n = K.rows();
  if (K.cols() != n) throw ArgumentError("eigen_decompose needs a square matrix");
  if (rank == 0 || rank > static_cast<std::size_t>(n)) throw ArgumentError("rank must be in [1, grid size]");
  const double scale = std::max(K.cwiseAbs().maxCoeff(), 1e-300);
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) throw ArgumentError("marginal covariance is not symmetric");

  EigenSummary out;
  out.weight = marg.points.size() == static_cast<std::size_t>(n) ? grid_weight(marg.points) : 1.0;
  const Matrix sym = 0.5 * (K + K.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(out.weight * sym);
  // Eigen sorts ascending; flip to nonincreasing.
  Vector values = es.eigenvalues().reverse();
  Matrix vectors = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values[i] < 0.0) {
      ++out.n_clamped;
      out.clamped_mass -= values[i];
      values[i] = 0.0;
    }
  const double total = values.sum();
  const auto r = static_cast<Eigen::Index>(rank);
  out.eigenvalues = values.head(r);
  out.eigenfunctions = vectors.leftCols(r) / std::sqrt(out.weight);
  out.fve = total > 0.0 ? Vector(out.eigenvalues / total) : Vector::Zero(r);
  return out;
}

std::vector<Vector> align_signs(const std::vector<Vector>& draws, std::vector<bool>* flips) {
  std::vector<Vector> out;
  out.reserve(draws.size());
  if (flips) flips->assign(draws.size(), false);
  Vector running;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    Vector u = draws[i];
    if (i == 0) {
      running = u;
    } else {
      if (u.size() != running.size()) throw ArgumentError("align_signs needs draws on identical grids");
      if ((-u - running).squaredNorm() < (u - running).squaredNorm()) {
        u = -u;
        if (flips) (*flips)[i] = true;
      }
      running += (u - running) / static_cast<double>(i + 1);
    }
    out.push_back(std::move(u));
  }
  return out;
}

FunctionBand simultaneous_band(const Matrix& draws, double alpha, std::vector<double> points) {
  const auto n = draws.rows();
  if (n < 2) throw ArgumentError("simultaneous_band needs at least two draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");

  FunctionBand band;
  band.points = std::move(points);
  band.level = 1.0 - alpha;
  band.center = draws.colwise().mean().transpose();
  const Matrix centered = draws.rowwise() - band.center.transpose();
  Vector sd = (centered.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
  const double reference = std::max(sd.maxCoeff(), band.center.cwiseAbs().maxCoeff());
  const double floor = 1e-12 * (reference > 0.0 ? reference : 1.0);
  sd = sd.cwiseMax(floor);

  std::vector<double> max_dev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) max_dev[i] = (centered.row(i).transpose().cwiseQuotient(sd)).cwiseAbs().maxCoeff();
  std::vector<double> sorted = max_dev;
  std::sort(sorted.begin(), sorted.end());
  // Smallest order statistic with at least ceil((1 - alpha) n) draws at or below it.
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(n) - 1e-12));
  k = std::clamp<std::size_t>(k, 1, static_cast<std::size_t>(n));
  band.critical_value = sorted[k - 1];
  band.lower = band.center - band.critical_value * sd;
  band.upper = band.center + band.critical_value * sd;
  // center + q sd can round just inside a draw that attains q; those draws are
  // absorbed so containment holds in floating point, not only in exact arithmetic.
  for (Eigen::Index i = 0; i < n; ++i)
    if (max_dev[static_cast<std::size_t>(i)] <= band.critical_value) {
      band.lower = band.lower.cwiseMin(draws.row(i).transpose());
      band.upper = band.upper.cwiseMax(draws.row(i).transpose());
    }
  return band;
}

PosteriorSummary summarize(const PosteriorDraws& draws, const SummaryOptions& options) {
  if (draws.draws.empty()) throw ArgumentError("summarize needs at least one draw");
  PosteriorSummary out;
  out.s_points = options.s_points.empty() ? draws.s_grid : options.s_points;
  out.t_points = options.t_points.empty() ? draws.t_grid : options.t_points;
  out.n_draws = draws.draws.size();
  const Matrix B1 = build_basis(draws.s_basis, out.s_points);
  const Matrix B2 = build_basis(draws.t_basis, out.t_points);
  const auto ns = static_cast<Eigen::Index>(out.s_points.size());
  const auto nt = static_cast<Eigen::Index>(out.t_points.size());
  const std::size_t rank_s = std::min<std::size_t>(options.rank, out.s_points.size());
  const std::size_t rank_t = std::min<std::size_t>(options.rank, out.t_points.size());

  const std::size_t d = draws.draws.front().state.d();
  Vector x = options.x.value_or(d > 0 ? Vector(Vector::Unit(static_cast<Eigen::Index>(d), 0)) : Vector());
  const auto n_draws = static_cast<Eigen::Index>(draws.draws.size());

  Matrix mu_draws(n_draws, ns * nt);
  Matrix gram_sum = Matrix::Zero(ns * nt, ns * nt);
  Matrix ks_sum = Matrix::Zero(ns, ns), kt_sum = Matrix::Zero(nt, nt);
  std::vector<std::vector<Vector>> s_funcs(rank_s), t_funcs(rank_t);
  out.s_axis.eigenvalue_draws.resize(n_draws, static_cast<Eigen::Index>(rank_s));
  out.t_axis.eigenvalue_draws.resize(n_draws, static_cast<Eigen::Index>(rank_t));

  for (Eigen::Index i = 0; i < n_draws; ++i) {
    const ModelState& st = draws.draws[static_cast<std::size_t>(i)].state;
    const Matrix mu = mean_surface(st, x, B1, B2);
    mu_draws.row(i) = Eigen::Map<const Vector>(mu.data(), mu.size()).transpose();
    const KernelGrid kg = covariance_kernel(draws.omega_of(static_cast<std::size_t>(i)), B1, B2, out.s_points, out.t_points);
    gram_sum += kg.gram;
    const MarginalCovariance ks = marginalize(kg, Axis::S);
    const MarginalCovariance kt = marginalize(kg, Axis::T);
    ks_sum += ks.matrix;
    kt_sum += kt.matrix;
    const EigenSummary es = eigen_decompose(ks, rank_s);
    const EigenSummary et = eigen_decompose(kt, rank_t);
    out.s_axis.eigenvalue_draws.row(i) = es.eigenvalues.transpose();
    out.t_axis.eigenvalue_draws.row(i) = et.eigenvalues.transpose();
    for (std::size_t c = 0; c < rank_s; ++c) s_funcs[c].push_back(es.eigenfunctions.col(static_cast<Eigen::Index>(c)));
    for (std::size_t c = 0; c < rank_t; ++c) t_funcs[c].push_back(et.eigenfunctions.col(static_cast<Eigen::Index>(c)));
  }

  const double inv_n = 1.0 / static_cast<double>(n_draws);
  std::vector<double> flat_points(static_cast<std::size_t>(ns * nt));
  std::iota(flat_points.begin(), flat_points.end(), 0.0);
  if (n_draws >= 2) {
    out.mean = simultaneous_band(mu_draws, options.alpha, flat_points);
  } else {
    out.mean.points = flat_points;
    out.mean.level = 1.0 - options.alpha;
    out.mean.center = out.mean.lower = out.mean.upper = mu_draws.row(0).transpose();
  }
  out.kernel_mean = {out.s_points, out.t_points, gram_sum * inv_n};

  auto finish_axis = [&](AxisSummary& ax, Axis axis, const std::vector<double>& pts, const Matrix& k_sum,
                         std::vector<std::vector<Vector>>& funcs) {
    ax.mean_marginal = {axis, pts, k_sum * inv_n};
    ax.eigenvalues_mean = ax.eigenvalue_draws.colwise().mean().transpose();
    std::vector<Vector> means;
    for (auto& comp : funcs) {
      const std::vector<Vector> aligned = align_signs(comp);
      Matrix m(n_draws, static_cast<Eigen::Index>(pts.size()));
      for (Eigen::Index i = 0; i < n_draws; ++i) m.row(i) = aligned[static_cast<std::size_t>(i)].transpose();
      if (n_draws >= 2) {
        ax.eigenfunctions.push_back(simultaneous_band(m, options.alpha, pts));
      } else {
        FunctionBand b;
        b.points = pts;
        b.level = 1.0 - options.alpha;
        b.center = b.lower = b.upper = m.row(0).transpose();
        ax.eigenfunctions.push_back(std::move(b));
      }
      comp = aligned;
      means.push_back(ax.eigenfunctions.back().center);
    }
    ax.crossings.assign(funcs.size(), 0);
    for (std::size_t c = 0; c < funcs.size(); ++c)
      for (const Vector& u : funcs[c]) {
        const double own = std::abs(u.dot(means[c]));
        const bool prev = c > 0 && std::abs(u.dot(means[c - 1])) > own;
        const bool next = c + 1 < funcs.size() && std::abs(u.dot(means[c + 1])) > own;
        if (prev || next) ++ax.crossings[c];
      }
  };
  finish_axis(out.s_axis, Axis::S, out.s_points, ks_sum, s_funcs);
  finish_axis(out.t_axis, Axis::T, out.t_points, kt_sum, t_funcs);
  return out;
}

}  // namespace lfda
