#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lfda/io.hpp"
#include "lfda/model.hpp"
#include "lfda/sampler.hpp"
#include "lfda/simgen.hpp"
#include "lfda/splines.hpp"

namespace lfda {

/// Every setting a command can consume. Precedence, lowest first: built-in
/// defaults, the INI file, LFDA_<SECTION>_<KEY> environment variables, flags.
struct RunConfig {
  ChainConfig chain;
  BasisConfig s_basis = default_s_basis();
  BasisConfig t_basis = default_t_basis();
  Hyperparameters hyper;
  ScenarioSpec scenario;

  std::string data_path;
  std::string out_dir = ".";
  Intercept intercept = Intercept::Auto;

  double alpha = 0.05;
  std::size_t rank = 3;
  std::vector<double> s_points;  // summary grids; empty means the fitted data grid
  std::vector<double> t_points;

  std::string experiment = "table1";  // table1 | selection
  std::size_t replications = 50;
  bool fit_bayes = true;
  std::size_t n_components = 2;
  std::vector<std::size_t> candidates{5, 10, 15};
  std::size_t generating_dimension = 10;  // selection experiment: cubic p1 = p2
  std::size_t generating_q = 4;

  void validate() const;
};

RunConfig default_run_config();

/// Applies `[section] key = value` pairs. Unknown keys throw ArgumentError.
void apply_ini_file(RunConfig& config, const std::string& path);
void apply_ini_text(RunConfig& config, const std::string& text);

/// Applies one setting by its section and key (as in the INI file).
void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value);

/// Applies every LFDA_<SECTION>_<KEY> variable present in the environment.
/// Returns the names that were applied.
std::vector<std::string> apply_environment(RunConfig& config);

/// Effective settings as INI text, every key listed.
std::string to_ini(const RunConfig& config);

}  // namespace lfda
