#include "lfda/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/QR>
#include <unsupported/Eigen/KroneckerProduct>

#include "lfda/criteria.hpp"
#include "lfda/errors.hpp"

namespace lfda {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> unit_grid(std::size_t n) {
  std::vector<double> g(n);
  if (n == 1) {
    g[0] = 0.5;
    return g;
  }
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(name) + " outside [0, 1]");
}

// Columns of U projected onto span(B) by least squares.
Matrix project_columns(const Matrix& B, const Matrix& U) {
  if (B.cols() >= B.rows()) return U;
  return B * B.colPivHouseholderQr().solve(U);
}

Matrix projector(const Matrix& B) {
  if (B.cols() >= B.rows()) return Matrix::Identity(B.rows(), B.rows());
  return B * B.colPivHouseholderQr().solve(Matrix::Identity(B.rows(), B.rows()));
}

Matrix leading_eigenvectors(const Matrix& K, std::size_t q) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (K + K.transpose()));
  const auto n = static_cast<Eigen::Index>(std::min<std::size_t>(q, static_cast<std::size_t>(K.rows())));
  return es.eigenvectors().rowwise().reverse().leftCols(n);
}

Matrix orthonormalize(const Matrix& U) {
  Eigen::HouseholderQR<Matrix> qr(U);
  return qr.householderQ() * Matrix::Identity(U.rows(), U.cols());
}

Matrix smooth_eigenfunctions(const EigenSummary& es, const Matrix& B) {
  Matrix out = project_columns(B, es.eigenfunctions);
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double norm = std::sqrt(es.weight * out.col(c).squaredNorm());
    if (norm > 0.0) out.col(c) /= norm;
  }
  return out;
}

Matrix reshape(const Vector& v, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t replication, std::uint64_t slot) {
  Rng r(seed, (replication << 8) | (slot + 1));
  return r.next_u64();
}

}  // namespace

void ScenarioSpec::validate() const {
  if (case_id < 1 || case_id > 3) throw ArgumentError("case_id must be 1, 2 or 3");
  if (n_s == 0 || n_t == 0) throw ArgumentError("grid sizes must be positive");
  if (!(noise_var >= 0.0)) throw ArgumentError("noise_var must be nonnegative");
  if (case_id == 1 && !(matern_sigma2 > 0.0 && matern_rho > 0.0))
    throw ArgumentError("Matern parameters must be positive");
  if (case_id == 2 && !(alpha > 0.0 && k_terms > 0)) throw ArgumentError("case 2 needs alpha > 0 and k_terms > 0");
  if (projection) {
    projection->s_basis.validate();
    projection->t_basis.validate();
    if (projection->q1 == 0 || projection->q2 == 0) throw ArgumentError("projection ranks must be positive");
  }
}

std::vector<double> ScenarioSpec::s_grid() const { return unit_grid(n_s); }
std::vector<double> ScenarioSpec::t_grid() const { return unit_grid(n_t); }

double true_kernel_s(const ScenarioSpec& spec, double s, double s2) {
  check_unit(s, "s");
  check_unit(s2, "s'");
  double k = 0.0;
  for (int j = 1; j <= 2; ++j) {
    const double w = spec.case_id == 1 ? j : j - 0.5;
    k += 2.0 * std::sin(w * kPi * s) * std::sin(w * kPi * s2) / (w * w * kPi * kPi);
  }
  return k;
}

double true_kernel_t(const ScenarioSpec& spec, double t, double t2) {
  check_unit(t, "t");
  check_unit(t2, "t'");
  if (spec.case_id == 1) {
    const double r = std::sqrt(3.0) * std::abs(t - t2) / spec.matern_rho;
    return spec.matern_sigma2 * (1.0 + r) * std::exp(-r);
  }
  double k = 0.0;
  for (std::size_t m = 1; m <= spec.k_terms; ++m) {
    const double md = static_cast<double>(m);
    k += std::pow(md, -2.0 * spec.alpha) * std::cos(md * kPi * t) * std::cos(md * kPi * t2);
  }
  return k;
}

double true_kernel(const ScenarioSpec& spec, double s, double t, double s2, double t2) {
  if (spec.case_id == 3) {
    check_unit(s, "s");
    check_unit(s2, "s'");
    check_unit(t, "t");
    check_unit(t2, "t'");
    const double g = (t - t2) * (t - t2) + 1.0;
    return std::exp(-(s - s2) * (s - s2) / g) / g;
  }
  return true_kernel_s(spec, s, s2) * true_kernel_t(spec, t, t2);
}

double true_mean(const ScenarioSpec& spec, double s, double t) {
  check_unit(s, "s");
  check_unit(t, "t");
  switch (spec.case_id) {
    case 1:
      return std::sqrt(1.0 / (5.0 * std::sqrt(s + 1.0))) * std::sin(5.0 * t);
    case 2:
      return 5.0 * std::sqrt(std::max(0.0, 1.0 - (s - 0.5) * (s - 0.5) - (t - 0.5) * (t - 0.5)));
    case 3:
      return std::sqrt(std::max(0.0, 1.0 + std::sin(kPi * s) + std::cos(kPi * t)));
    default:
      throw ArgumentError("case_id must be 1, 2 or 3");
  }
}

BasisConfig default_s_basis() { return BasisConfig{3, {0.2, 0.4, 0.6, 0.8}, 0.0, 1.0}; }
BasisConfig default_t_basis() { return BasisConfig{3, {1.0 / 6, 2.0 / 6, 3.0 / 6, 4.0 / 6, 5.0 / 6, 5.0 / 6}, 0.0, 1.0}; }

GroundTruth ground_truth(const ScenarioSpec& spec, const TruthOptions& options) {
  spec.validate();
  GroundTruth g;
  g.s_points = spec.s_grid();
  g.t_points = spec.t_grid();
  const auto ns = static_cast<Eigen::Index>(spec.n_s);
  const auto nt = static_cast<Eigen::Index>(spec.n_t);
  const Eigen::Index N = ns * nt;

  g.mean.resize(ns, nt);
  for (Eigen::Index k = 0; k < nt; ++k)
    for (Eigen::Index j = 0; j < ns; ++j) g.mean(j, k) = true_mean(spec, g.s_points[j], g.t_points[k]);

  g.gram.resize(N, N);
  if (spec.case_id == 3) {
    for (Eigen::Index b = 0; b < N; ++b)
      for (Eigen::Index a = 0; a <= b; ++a) {
        const double v = true_kernel(spec, g.s_points[a % ns], g.t_points[a / ns], g.s_points[b % ns], g.t_points[b / ns]);
        g.gram(a, b) = g.gram(b, a) = v;
      }
  } else {
    Matrix ks(ns, ns), kt(nt, nt);
    for (Eigen::Index a = 0; a < ns; ++a)
      for (Eigen::Index b = 0; b < ns; ++b) ks(a, b) = true_kernel_s(spec, g.s_points[a], g.s_points[b]);
    for (Eigen::Index a = 0; a < nt; ++a)
      for (Eigen::Index b = 0; b < nt; ++b) kt(a, b) = true_kernel_t(spec, g.t_points[a], g.t_points[b]);
    g.gram = Eigen::kroneckerProduct(kt, ks).eval();
  }

  if (spec.projection) {
    const auto& pr = *spec.projection;
    const Matrix Bs = build_basis(pr.s_basis, g.s_points);
    const Matrix Bt = build_basis(pr.t_basis, g.t_points);
    const KernelGrid raw{g.s_points, g.t_points, g.gram};
    const Matrix Us = orthonormalize(project_columns(Bs, leading_eigenvectors(marginalize(raw, Axis::S).matrix, pr.q1)));
    const Matrix Ut = orthonormalize(project_columns(Bt, leading_eigenvectors(marginalize(raw, Axis::T).matrix, pr.q2)));
    const Matrix W = Eigen::kroneckerProduct(Ut, Us).eval();
    const Matrix scores = W.transpose() * g.gram * W;
    g.gram = W * scores * W.transpose();
    g.mean = projector(Bs) * g.mean * projector(Bt).transpose();
  }
  g.gram = (0.5 * (g.gram + g.gram.transpose())).eval();

  const KernelGrid kg{g.s_points, g.t_points, g.gram};
  g.k_s = marginalize(kg, Axis::S);
  g.k_t = marginalize(kg, Axis::T);
  const std::size_t rs = std::min<std::size_t>(options.n_components, spec.n_s);
  const std::size_t rt = std::min<std::size_t>(options.n_components, spec.n_t);
  g.psi = smooth_eigenfunctions(eigen_decompose(g.k_s, rs), build_basis(options.s_basis, g.s_points));
  g.phi = smooth_eigenfunctions(eigen_decompose(g.k_t, rt), build_basis(options.t_basis, g.t_points));
  return g;
}

Matrix gram_factor(const Matrix& gram) {
  const double scale = gram.size() > 0 ? gram.cwiseAbs().maxCoeff() : 0.0;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success && scale > 0.0) {
    Matrix L = llt.matrixL();
    if ((L * L.transpose() - gram).cwiseAbs().maxCoeff() <= 1e-10 * scale) return L;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gram + gram.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

SimulatedData generate(const ScenarioSpec& spec, Rng& rng, const TruthOptions& options) {
  SimulatedData out;
  out.truth = ground_truth(spec, options);
  const Matrix L = gram_factor(out.truth.gram);
  const Vector mu = Eigen::Map<const Vector>(out.truth.mean.data(), out.truth.mean.size());
  const double noise_sd = std::sqrt(spec.noise_var);

  out.data.s_grid = out.truth.s_points;
  out.data.t_grid = out.truth.t_points;
  out.data.d = 1;
  out.data.subjects.reserve(spec.n_subjects);
  for (std::size_t i = 0; i < spec.n_subjects; ++i) {
    Vector z(L.cols());
    for (Eigen::Index c = 0; c < z.size(); ++c) z[c] = rng.normal();
    Vector f = mu + L * z;
    for (Eigen::Index c = 0; c < f.size(); ++c) f[c] += noise_sd * rng.normal();
    SubjectRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "subj%04zu", i + 1);
    rec.id = id;
    rec.y = reshape(f, spec.n_s, spec.n_t);
    rec.mask = Mask::Constant(rec.y.rows(), rec.y.cols(), true);
    rec.x = Vector::Ones(1);
    out.data.subjects.push_back(std::move(rec));
  }
  return out;
}

double relative_error(const Matrix& estimate, const Matrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw ArgumentError("relative_error needs estimate and truth on the same grid");
  const double denom = truth.squaredNorm();
  if (!(denom > 0.0)) throw ArgumentError("relative_error needs a truth with nonzero norm");
  return (estimate - truth).squaredNorm() / denom;
}

EmpiricalEstimates empirical_estimates(const FunctionalDataset& data) {
  const std::size_t n = data.subjects.size();
  if (n < 2) throw ArgumentError("empirical estimates need at least two subjects");
  const auto ns = static_cast<Eigen::Index>(data.s_grid.size());
  const auto nt = static_cast<Eigen::Index>(data.t_grid.size());
  Matrix Y(ns * nt, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& subj = data.subjects[i];
    if (!subj.complete()) throw ArgumentError("empirical estimates need complete grids (subject " + subj.id + ")");
    Y.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Vector>(subj.y.data(), subj.y.size());
  }
  const Vector m = Y.rowwise().mean();
  const Matrix C = Y.colwise() - m;
  EmpiricalEstimates e;
  e.mean = reshape(m, data.s_grid.size(), data.t_grid.size());
  e.gram = C * C.transpose() / static_cast<double>(n - 1);
  return e;
}

Vector align_to(const Vector& estimate, const Vector& reference) {
  return (-estimate - reference).squaredNorm() < (estimate - reference).squaredNorm() ? Vector(-estimate) : estimate;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw ArgumentError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double h = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

const std::vector<std::string> kQuantities{"mu", "K", "K_S", "K_T", "psi1", "psi2", "phi1", "phi2"};

struct Estimate {
  Matrix mean;
  Matrix gram;
  Matrix k_s;
  Matrix k_t;
  std::vector<Vector> psi;
  std::vector<Vector> phi;
};

std::vector<double> errors_of(const Estimate& e, const GroundTruth& g) {
  std::vector<double> out{relative_error(e.mean, g.mean), relative_error(e.gram, g.gram),
                          relative_error(e.k_s, g.k_s.matrix), relative_error(e.k_t, g.k_t.matrix)};
  for (Eigen::Index c = 0; c < 2; ++c) {
    const bool have = c < g.psi.cols() && static_cast<std::size_t>(c) < e.psi.size();
    out.push_back(have ? relative_error(align_to(e.psi[c], g.psi.col(c)), g.psi.col(c)) : std::nan(""));
  }
  for (Eigen::Index c = 0; c < 2; ++c) {
    const bool have = c < g.phi.cols() && static_cast<std::size_t>(c) < e.phi.size();
    out.push_back(have ? relative_error(align_to(e.phi[c], g.phi.col(c)), g.phi.col(c)) : std::nan(""));
  }
  return out;
}

Estimate empirical_estimate(const FunctionalDataset& data, std::size_t n_components) {
  const EmpiricalEstimates emp = empirical_estimates(data);
  Estimate e{emp.mean, emp.gram, {}, {}, {}, {}};
  const KernelGrid kg{data.s_grid, data.t_grid, emp.gram};
  const MarginalCovariance ms = marginalize(kg, Axis::S), mt = marginalize(kg, Axis::T);
  e.k_s = ms.matrix;
  e.k_t = mt.matrix;
  const EigenSummary es = eigen_decompose(ms, std::min(n_components, data.s_grid.size()));
  const EigenSummary et = eigen_decompose(mt, std::min(n_components, data.t_grid.size()));
  for (Eigen::Index c = 0; c < es.eigenfunctions.cols(); ++c) e.psi.push_back(es.eigenfunctions.col(c));
  for (Eigen::Index c = 0; c < et.eigenfunctions.cols(); ++c) e.phi.push_back(et.eigenfunctions.col(c));
  return e;
}

Estimate bayes_estimate(const ExperimentConfig& config, const FunctionalDataset& data, std::uint64_t chain_seed) {
  ChainConfig chain = config.chain;
  chain.seed = chain_seed;
  const PosteriorDraws draws = run_chain(data, config.hyper, config.s_basis, config.t_basis, chain);
  if (draws.any_failed()) {
    for (const auto& c : draws.chains)
      if (c.failed) throw ChainError("chain " + std::to_string(c.chain) + " failed: " + c.error);
  }
  SummaryOptions opts;
  opts.x = Vector::Ones(static_cast<Eigen::Index>(data.d));
  opts.rank = config.n_components;
  const PosteriorSummary sum = summarize(draws, opts);
  Estimate e;
  e.mean = reshape(sum.mean.center, data.s_grid.size(), data.t_grid.size());
  e.gram = sum.kernel_mean.gram;
  e.k_s = sum.s_axis.mean_marginal.matrix;
  e.k_t = sum.t_axis.mean_marginal.matrix;
  for (const auto& b : sum.s_axis.eigenfunctions) e.psi.push_back(b.center);
  for (const auto& b : sum.t_axis.eigenfunctions) e.phi.push_back(b.center);
  return e;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t n_replications, std::uint64_t seed) {
  config.scenario.validate();
  if (config.fit_bayes) config.chain.validate();
  std::vector<std::string> estimators;
  if (config.fit_bayes) estimators.push_back("bayes");
  estimators.push_back("empirical");

  ExperimentReport report;
  for (const auto& q : kQuantities)
    for (const auto& est : estimators) report.values.emplace_back(q + "/" + est, std::vector<double>{});

  const TruthOptions truth_opts{config.s_basis, config.t_basis, config.n_components};
  for (std::size_t r = 0; r < n_replications; ++r) {
    try {
      Rng rng(seed, r);
      const SimulatedData sim = generate(config.scenario, rng, truth_opts);
      std::vector<std::vector<double>> per_estimator;
      if (config.fit_bayes)
        per_estimator.push_back(errors_of(bayes_estimate(config, sim.data, derived_seed(seed, r, 0)), sim.truth));
      per_estimator.push_back(errors_of(empirical_estimate(sim.data, config.n_components), sim.truth));
      for (std::size_t q = 0; q < kQuantities.size(); ++q)
        for (std::size_t e = 0; e < estimators.size(); ++e) {
          const double v = per_estimator[e][q];
          if (std::isfinite(v)) report.values[q * estimators.size() + e].second.push_back(v);
        }
    } catch (const std::exception& ex) {
      report.failures.push_back({r, ex.what()});
    }
  }

  for (std::size_t q = 0; q < kQuantities.size(); ++q)
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const auto& vals = report.values[q * estimators.size() + e].second;
      if (vals.empty()) continue;
      ReportRow row;
      row.case_id = config.scenario.case_id;
      row.n = config.scenario.n_subjects;
      row.quantity = kQuantities[q];
      row.estimator = estimators[e];
      row.median = quantile(vals, 0.5);
      row.q10 = quantile(vals, 0.1);
      row.q90 = quantile(vals, 0.9);
      row.n_values = vals.size();
      report.rows.push_back(row);
    }
  return report;
}

SelectionConfig default_selection_config() {
  SelectionConfig c;
  c.scenario.case_id = 2;
  c.scenario.n_s = 20;
  c.scenario.n_t = 20;
  c.scenario.n_subjects = 30;
  c.scenario.projection = GeneratingProjection{BasisConfig::uniform(3, 10), BasisConfig::uniform(3, 10), 4, 4};
  c.hyper.q1 = 4;
  c.hyper.q2 = 4;
  c.chain.n_iterations = 1500;
  c.chain.burn_in = 500;
  c.chain.cache_omega = false;
  return c;
}

SelectionReport run_selection_experiment(const SelectionConfig& config, std::size_t n_replications,
                                         std::uint64_t seed) {
  config.scenario.validate();
  config.chain.validate();
  static const std::array<const char*, 3> kCriteria{"DIC", "BIC1", "BIC2"};
  SelectionReport report;
  report.values.resize(config.candidates.size());
  const auto s_grid = config.scenario.s_grid();
  const auto t_grid = config.scenario.t_grid();

  for (std::size_t r = 0; r < n_replications; ++r) {
    try {
      Rng rng(seed, r);
      const SimulatedData sim = generate(config.scenario, rng);
      std::vector<CriteriaReport> reports;
      for (std::size_t c = 0; c < config.candidates.size(); ++c) {
        const BasisConfig basis = BasisConfig::uniform(3, config.candidates[c]);
        Hyperparameters hp = config.hyper;
        hp.q1 = config.q1;
        hp.q2 = config.q2;
        ChainConfig chain = config.chain;
        chain.seed = derived_seed(seed, r, c);
        const PosteriorDraws draws = run_chain(sim.data, hp, basis, basis, chain);
        for (const auto& ch : draws.chains)
          if (ch.failed) throw ChainError("candidate " + std::to_string(config.candidates[c]) + ": " + ch.error);
        reports.push_back(compute_criteria(draws, sim.data, build_basis(basis, s_grid), build_basis(basis, t_grid)));
      }
      for (std::size_t c = 0; c < reports.size(); ++c) {
        report.values[c][0].push_back(reports[c].dic);
        report.values[c][1].push_back(reports[c].bic1);
        report.values[c][2].push_back(reports[c].bic2);
      }
    } catch (const std::exception& ex) {
      report.failures.push_back({r, ex.what()});
    }
  }

  for (std::size_t c = 0; c < config.candidates.size(); ++c)
    for (std::size_t k = 0; k < kCriteria.size(); ++k) {
      const auto& v = report.values[c][k];
      if (v.empty()) continue;
      SelectionRow row;
      row.candidate = config.candidates[c];
      row.criterion = kCriteria[k];
      row.n_values = v.size();
      double sum = 0.0, sq = 0.0;
      for (double x : v) sum += x;
      row.mean = sum / static_cast<double>(v.size());
      for (double x : v) sq += (x - row.mean) * (x - row.mean);
      row.se = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
      row.median = quantile(v, 0.5);
      row.q10 = quantile(v, 0.1);
      row.q90 = quantile(v, 0.9);
      report.rows.push_back(row);
    }
  return report;
}

}  // namespace lfda
