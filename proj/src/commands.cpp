#include "lfda/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include "lfda/criteria.hpp"
#include "lfda/errors.hpp"
#include "lfda/posterior.hpp"
#include "lfda/simgen.hpp"

namespace lfda {

namespace {

namespace fs = std::filesystem;

std::string out_path(const RunConfig& config, const std::string& name) {
  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir + ": " + ec.message());
  return (fs::path(config.out_dir) / name).string();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string d2s(double v) { return format_double(v); }

void emit(CommandResult& result, const std::string& path, const std::string& content, std::ostream& log) {
  atomic_write(path, content);
  result.files.push_back(path);
  log << "wrote " << path << "\n";
}

std::string matrix_csv(const std::vector<double>& rows, const std::vector<double>& cols, const Matrix& m,
                       const std::string& header) {
  std::string out = header + "\n";
  for (Eigen::Index j = 0; j < m.rows(); ++j)
    for (Eigen::Index k = 0; k < m.cols(); ++k) out += d2s(rows[j]) + "," + d2s(cols[k]) + "," + d2s(m(j, k)) + "\n";
  return out;
}

std::string gram_csv(const std::vector<double>& s, const std::vector<double>& t, const Matrix& gram) {
  const std::size_t ns = s.size();
  std::string out = "s,t,s2,t2,value\n";
  for (Eigen::Index a = 0; a < gram.rows(); ++a)
    for (Eigen::Index b = 0; b < gram.cols(); ++b)
      out += d2s(s[a % ns]) + "," + d2s(t[a / ns]) + "," + d2s(s[b % ns]) + "," + d2s(t[b / ns]) + "," +
             d2s(gram(a, b)) + "\n";
  return out;
}

FunctionalDataset load_configured_dataset(const RunConfig& config) {
  if (config.data_path.empty()) throw ArgumentError("data.path is required");
  FunctionalDataset data = load_dataset(config.data_path, LoadOptions{config.intercept});
  data.validate();
  return data;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const VersionError*>(&e)) return kExitVersion;
  if (dynamic_cast<const DatasetMismatchError*>(&e)) return kExitDataMismatch;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const ArgumentError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitConfig;
  if (dynamic_cast<const ChainError*>(&e)) return kExitChainFailure;
  return kExitError;
}

std::string write_provenance(const RunConfig& config, const std::string& command,
                             const std::vector<std::string>& notes) {
  std::string text = "; command: " + command + "\n";
  for (const auto& n : notes) text += "; " + n + "\n";
  text += to_ini(config);
  const std::string path = out_path(config, command + ".provenance.ini");
  atomic_write(path, text);
  return path;
}

CommandResult simulate_command(const RunConfig& config, std::ostream& log) {
  config.scenario.validate();
  CommandResult result;
  Rng rng(config.chain.seed, 0);
  const SimulatedData sim = generate(config.scenario, rng, TruthOptions{config.s_basis, config.t_basis, config.n_components});
  const GroundTruth& g = sim.truth;
  emit(result, out_path(config, "data.csv"), format_dataset(sim.data), log);
  emit(result, out_path(config, "truth_mean.csv"), matrix_csv(g.s_points, g.t_points, g.mean, "s,t,value"), log);
  emit(result, out_path(config, "truth_gram.csv"), gram_csv(g.s_points, g.t_points, g.gram), log);
  emit(result, out_path(config, "truth_k_s.csv"), matrix_csv(g.s_points, g.s_points, g.k_s.matrix, "s,s2,value"), log);
  emit(result, out_path(config, "truth_k_t.csv"), matrix_csv(g.t_points, g.t_points, g.k_t.matrix, "t,t2,value"), log);
  std::string eig = "axis,component,point,value\n";
  for (Eigen::Index c = 0; c < g.psi.cols(); ++c)
    for (Eigen::Index j = 0; j < g.psi.rows(); ++j)
      eig += "S," + std::to_string(c + 1) + "," + d2s(g.s_points[j]) + "," + d2s(g.psi(j, c)) + "\n";
  for (Eigen::Index c = 0; c < g.phi.cols(); ++c)
    for (Eigen::Index k = 0; k < g.phi.rows(); ++k)
      eig += "T," + std::to_string(c + 1) + "," + d2s(g.t_points[k]) + "," + d2s(g.phi(k, c)) + "\n";
  emit(result, out_path(config, "truth_eigenfunctions.csv"), eig, log);
  result.files.push_back(write_provenance(config, "simulate"));
  return result;
}

CommandResult fit_command(const RunConfig& config, std::ostream& log) {
  config.validate();
  const FunctionalDataset data = load_configured_dataset(config);
  log << "fitting " << data.subjects.size() << " subjects on a " << data.s_grid.size() << " x " << data.t_grid.size()
      << " grid, " << config.chain.n_chains << " chain(s) of " << config.chain.n_iterations << " iterations\n";
  const PosteriorDraws draws = run_chain(data, config.hyper, config.s_basis, config.t_basis, config.chain);

  CommandResult result;
  emit(result, out_path(config, "draws.lfd"), encode_draws(draws), log);
  std::string diag = "chain,param,acceptance_rate,step_sd\n";
  std::string chains = "chain,failed,iterations_completed,truncated_gamma_fallbacks,jitter_retries,error\n";
  std::string trace = "chain,iteration,log_likelihood\n";
  for (const ChainDiagnostics& c : draws.chains) {
    for (std::size_t k = 0; k < 4; ++k)
      diag += std::to_string(c.chain) + "," + kShrinkageParamNames[k] + "," + d2s(c.acceptance_rate[k]) + "," +
              d2s(c.step_sd[k]) + "\n";
    chains += std::to_string(c.chain) + "," + (c.failed ? "1" : "0") + "," + std::to_string(c.iterations_completed) +
              "," + std::to_string(c.truncated_gamma_fallbacks) + "," + std::to_string(c.jitter_retries) + "," +
              csv_field(c.error) + "\n";
    for (std::size_t it = 0; it < c.loglik_trace.size(); ++it)
      trace += std::to_string(c.chain) + "," + std::to_string(it + 1) + "," + d2s(c.loglik_trace[it]) + "\n";
  }
  emit(result, out_path(config, "diagnostics.csv"), diag, log);
  emit(result, out_path(config, "chains.csv"), chains, log);
  emit(result, out_path(config, "loglik_trace.csv"), trace, log);
  result.files.push_back(write_provenance(config, "fit"));
  if (draws.any_failed()) {
    for (const auto& c : draws.chains)
      if (c.failed) log << "chain " << c.chain << " failed: " << c.error << "\n";
    result.exit_code = kExitChainFailure;
  }
  return result;
}

CommandResult summarize_command(const RunConfig& config, const std::string& draws_path, std::ostream& log) {
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ArgumentError("summary.alpha must lie in (0, 1)");
  const PosteriorDraws draws = load_draws(draws_path);
  SummaryOptions opts;
  opts.s_points = config.s_points;
  opts.t_points = config.t_points;
  opts.alpha = config.alpha;
  opts.rank = config.rank;
  const PosteriorSummary sum = summarize(draws, opts);
  const auto& s = sum.s_points;
  const auto& t = sum.t_points;
  const std::size_t ns = s.size();

  CommandResult result;
  std::string mean = "s,t,center,lower,upper\n";
  for (Eigen::Index i = 0; i < sum.mean.center.size(); ++i)
    mean += d2s(s[i % ns]) + "," + d2s(t[i / ns]) + "," + d2s(sum.mean.center[i]) + "," + d2s(sum.mean.lower[i]) +
            "," + d2s(sum.mean.upper[i]) + "\n";
  emit(result, out_path(config, "mean_surface.csv"), mean, log);
  emit(result, out_path(config, "kernel.csv"), gram_csv(s, t, sum.kernel_mean.gram), log);
  emit(result, out_path(config, "k_s.csv"), matrix_csv(s, s, sum.s_axis.mean_marginal.matrix, "s,s2,value"), log);
  emit(result, out_path(config, "k_t.csv"), matrix_csv(t, t, sum.t_axis.mean_marginal.matrix, "t,t2,value"), log);

  std::string values = "axis,component,mean,q_lower,q_upper,crossings\n";
  std::string funcs = "axis,component,point,center,lower,upper\n";
  for (const auto* ax : {&sum.s_axis, &sum.t_axis}) {
    const std::string name = ax == &sum.s_axis ? "S" : "T";
    for (Eigen::Index c = 0; c < ax->eigenvalues_mean.size(); ++c) {
      std::vector<double> col(ax->eigenvalue_draws.rows());
      for (Eigen::Index i = 0; i < ax->eigenvalue_draws.rows(); ++i) col[i] = ax->eigenvalue_draws(i, c);
      values += name + "," + std::to_string(c + 1) + "," + d2s(ax->eigenvalues_mean[c]) + "," +
                d2s(quantile(col, config.alpha / 2)) + "," + d2s(quantile(col, 1 - config.alpha / 2)) + "," +
                std::to_string(ax->crossings[c]) + "\n";
      const FunctionBand& b = ax->eigenfunctions[c];
      for (Eigen::Index j = 0; j < b.center.size(); ++j)
        funcs += name + "," + std::to_string(c + 1) + "," + d2s(b.points[j]) + "," + d2s(b.center[j]) + "," +
                 d2s(b.lower[j]) + "," + d2s(b.upper[j]) + "\n";
    }
  }
  emit(result, out_path(config, "eigenvalues.csv"), values, log);
  emit(result, out_path(config, "eigenfunctions.csv"), funcs, log);
  result.files.push_back(write_provenance(config, "summarize", {"draws: " + draws_path}));
  return result;
}

CommandResult criteria_command(const RunConfig& config, const std::vector<std::string>& draws_paths,
                               std::ostream& log) {
  if (draws_paths.empty()) throw ArgumentError("criteria needs at least one draw file");
  const FunctionalDataset data = load_configured_dataset(config);
  const std::uint64_t hash = data.content_hash();

  std::vector<std::string> paths = draws_paths;
  std::sort(paths.begin(), paths.end());
  struct Row {
    std::string path;
    PosteriorDraws meta;
    CriteriaReport report;
  };
  std::vector<Row> rows;
  for (const auto& p : paths) {
    PosteriorDraws draws = load_draws(p);
    if (draws.dataset_hash != hash)
      throw DatasetMismatchError(p + " was fitted to a different dataset than " + config.data_path);
    const Matrix B1 = build_basis(draws.s_basis, data.s_grid);
    const Matrix B2 = build_basis(draws.t_basis, data.t_grid);
    CriteriaReport r = compute_criteria(draws, data, B1, B2);
    draws.draws.clear();
    rows.push_back({p, std::move(draws), r});
  }
  auto argmin = [&](auto get) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (get(rows[i].report) < get(rows[best].report)) best = i;
    return best;
  };
  const std::size_t m_dic = argmin([](const CriteriaReport& r) { return r.dic; });
  const std::size_t m_b1 = argmin([](const CriteriaReport& r) { return r.bic1; });
  const std::size_t m_b2 = argmin([](const CriteriaReport& r) { return r.bic2; });

  std::string csv = "model,p1,p2,q1,q2,n_draws,dic,p_dic,bic1,bic2,n_fixed,n_total,n_obs,min_dic,min_bic1,min_bic2\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].report;
    const auto& m = rows[i].meta;
    csv += csv_field(rows[i].path) + "," + std::to_string(m.s_basis.dimension()) + "," +
           std::to_string(m.t_basis.dimension()) + "," + std::to_string(m.hyper.q1) + "," + std::to_string(m.hyper.q2) +
           "," + std::to_string(r.n_draws) + "," + d2s(r.dic) + "," + d2s(r.p_dic) + "," + d2s(r.bic1) + "," +
           d2s(r.bic2) + "," + std::to_string(r.n_fixed) + "," + std::to_string(r.n_total) + "," +
           std::to_string(r.n_obs) + "," + (i == m_dic ? "1" : "0") + "," + (i == m_b1 ? "1" : "0") + "," +
           (i == m_b2 ? "1" : "0") + "\n";
    log << rows[i].path << ": DIC " << r.dic << (i == m_dic ? " *" : "") << ", BIC1 " << r.bic1
        << (i == m_b1 ? " *" : "") << ", BIC2 " << r.bic2 << (i == m_b2 ? " *" : "") << "\n";
  }
  CommandResult result;
  emit(result, out_path(config, "criteria.csv"), csv, log);
  result.files.push_back(write_provenance(
      config, "criteria",
      {"n_fixed counts Lambda, Gamma, beta, Sigma, H and phi; n_total adds Theta_i and eta_i per subject",
       "BIC1 penalty log(n_subjects); BIC2 penalty log(n_observed_cells)"}));
  return result;
}

CommandResult benchmark_command(const RunConfig& config, std::ostream& log) {
  config.validate();
  CommandResult result;
  std::string failures = "replication,error\n";
  std::size_t n_failed = 0;
  if (config.experiment == "table1") {
    ExperimentConfig ec;
    ec.scenario = config.scenario;
    ec.s_basis = config.s_basis;
    ec.t_basis = config.t_basis;
    ec.hyper = config.hyper;
    ec.chain = config.chain;
    ec.fit_bayes = config.fit_bayes;
    ec.n_components = config.n_components;
    const ExperimentReport rep = run_experiment(ec, config.replications, config.chain.seed);
    std::string csv = "case,n,quantity,estimator,median,q10,q90\n";
    for (const auto& r : rep.rows) {
      csv += std::to_string(r.case_id) + "," + std::to_string(r.n) + "," + r.quantity + "," + r.estimator + "," +
             d2s(r.median) + "," + d2s(r.q10) + "," + d2s(r.q90) + "\n";
      log << r.quantity << " " << r.estimator << ": median " << r.median << " (" << r.q10 << ", " << r.q90 << ")\n";
    }
    emit(result, out_path(config, "benchmark.csv"), csv, log);
    for (const auto& f : rep.failures) failures += std::to_string(f.replication) + "," + csv_field(f.error) + "\n";
    n_failed = rep.failures.size();
  } else {
    SelectionConfig sc;
    sc.scenario = config.scenario;
    const BasisConfig gen = BasisConfig::uniform(3, config.generating_dimension);
    sc.scenario.projection = GeneratingProjection{gen, gen, config.generating_q, config.generating_q};
    sc.candidates = config.candidates;
    // Candidates are fitted with the generating ranks; hyper.q1/q2 apply to table1 only.
    sc.q1 = sc.q2 = config.generating_q;
    sc.hyper = config.hyper;
    sc.chain = config.chain;
    const SelectionReport rep = run_selection_experiment(sc, config.replications, config.chain.seed);
    std::string csv = "p1,p2,criterion,mean,se,median,q10,q90,n\n";
    for (const auto& r : rep.rows) {
      csv += std::to_string(r.candidate) + "," + std::to_string(r.candidate) + "," + r.criterion + "," + d2s(r.mean) +
             "," + d2s(r.se) + "," + d2s(r.median) + "," + d2s(r.q10) + "," + d2s(r.q90) + "," +
             std::to_string(r.n_values) + "\n";
      log << "(" << r.candidate << "," << r.candidate << ") " << r.criterion << ": mean " << r.mean << " (SE " << r.se
          << ")\n";
    }
    emit(result, out_path(config, "selection.csv"), csv, log);
    for (const auto& f : rep.failures) failures += std::to_string(f.replication) + "," + csv_field(f.error) + "\n";
    n_failed = rep.failures.size();
  }
  if (n_failed > 0) {
    emit(result, out_path(config, "failures.csv"), failures, log);
    log << n_failed << " replication(s) failed\n";
  }
  result.files.push_back(write_provenance(config, "benchmark"));
  return result;
}

}  // namespace lfda
