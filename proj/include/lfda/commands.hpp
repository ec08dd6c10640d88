#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

#include "lfda/config.hpp"

namespace lfda {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,          // unexpected failure
  kExitConfig = 2,         // invalid configuration or arguments
  kExitChainFailure = 3,   // at least one chain failed; partial outputs kept
  kExitVersion = 4,        // draw container version not readable
  kExitDataMismatch = 5,   // draws fitted to a different dataset
  kExitIo = 6,             // unreadable or malformed input, write failure
};

int exit_code_for(const std::exception& e);

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::string> files;  // written, in order
};

/// data.csv plus truth_mean.csv, truth_gram.csv, truth_k_s.csv, truth_k_t.csv,
/// truth_eigenfunctions.csv. The generator stream is (chain.seed, 0).
CommandResult simulate_command(const RunConfig& config, std::ostream& log);

/// draws.lfd, diagnostics.csv, chains.csv, loglik_trace.csv.
CommandResult fit_command(const RunConfig& config, std::ostream& log);

/// mean_surface.csv, kernel.csv, k_s.csv, k_t.csv, eigenvalues.csv, eigenfunctions.csv.
CommandResult summarize_command(const RunConfig& config, const std::string& draws_path, std::ostream& log);

/// criteria.csv with one row per draw file, minimum per criterion flagged.
CommandResult criteria_command(const RunConfig& config, const std::vector<std::string>& draws_paths,
                               std::ostream& log);

/// benchmark.csv (table1) or selection.csv (selection).
CommandResult benchmark_command(const RunConfig& config, std::ostream& log);

/// Writes <out>/<command>.provenance.ini with every effective setting.
std::string write_provenance(const RunConfig& config, const std::string& command,
                             const std::vector<std::string>& notes = {});

}  // namespace lfda
