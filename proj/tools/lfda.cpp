#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lfda/commands.hpp"
#include "lfda/config.hpp"
#include "lfda/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian longitudinal functional data analysis: simulate, fit, summarize, criteria, benchmark"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> chains, iterations, burnin, thin;
  std::optional<double> alpha;
  std::optional<std::string> out, data;
  std::vector<std::string> settings;
  bool print_config = false;

  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--chains", chains, "Number of chains");
  app.add_option("--iterations", iterations, "Iterations per chain, burn-in included");
  app.add_option("--burnin", burnin, "Burn-in iterations");
  app.add_option("--thin", thin, "Keep every k-th post burn-in draw");
  app.add_option("--alpha", alpha, "Band level is 1 - alpha");
  app.add_option("--out", out, "Output directory");
  app.add_option("--data", data, "Long-format dataset CSV");
  app.add_option("--set", settings, "Override any setting: section.key=value (repeatable)");
  app.add_flag("--print-config", print_config, "Print effective settings before running");

  auto* simulate = app.add_subcommand("simulate", "Generate a dataset and its ground truth");
  auto* fit = app.add_subcommand("fit", "Run the Gibbs sampler and persist draws");
  auto* summarize = app.add_subcommand("summarize", "Posterior summaries from a draw file");
  auto* criteria = app.add_subcommand("criteria", "Information criteria for one or more fits");
  auto* benchmark = app.add_subcommand("benchmark", "Monte Carlo experiment (table1 or selection)");
  std::string draws_path;
  std::vector<std::string> draws_paths;
  summarize->add_option("draws", draws_path, "Draw container")->required();
  criteria->add_option("draws", draws_paths, "Draw containers")->required();
  for (auto* sub : {simulate, fit, summarize, criteria, benchmark}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lfda::kExitConfig;
  }

  try {
    lfda::RunConfig config = lfda::default_run_config();
    if (!config_path.empty()) lfda::apply_ini_file(config, config_path);
    const std::vector<std::string> env = lfda::apply_environment(config);
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      const auto dot = s.find('.');
      if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw lfda::ArgumentError("--set expects section.key=value, got '" + s + "'");
      lfda::apply_setting(config, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
    }
    if (seed) config.chain.seed = *seed;
    if (chains) config.chain.n_chains = *chains;
    if (iterations) config.chain.n_iterations = *iterations;
    if (burnin) config.chain.burn_in = *burnin;
    if (thin) config.chain.thin = *thin;
    if (alpha) config.alpha = *alpha;
    if (out) config.out_dir = *out;
    if (data) config.data_path = *data;
    for (const auto& name : env) std::cerr << "environment override: " << name << "\n";
    if (print_config) std::cout << lfda::to_ini(config) << "\n";

    lfda::CommandResult result;
    if (*simulate)
      result = lfda::simulate_command(config, std::cerr);
    else if (*fit)
      result = lfda::fit_command(config, std::cerr);
    else if (*summarize)
      result = lfda::summarize_command(config, draws_path, std::cerr);
    else if (*criteria)
      result = lfda::criteria_command(config, draws_paths, std::cerr);
    else
      result = lfda::benchmark_command(config, std::cerr);
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return lfda::exit_code_for(e);
  }
}
