#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lfda/commands.hpp"
#include "lfda/errors.hpp"
#include "lfda/io.hpp"
#include "lfda/simgen.hpp"

using namespace lfda;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Rows of a numeric CSV after the header, split on commas.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("lfda_test_commands_" + name);
  fs::remove_all(d);
  return d;
}

/// A small case-1 design with a linear basis so a fit takes milliseconds.
RunConfig micro_config(const fs::path& dir) {
  RunConfig c;
  c.out_dir = dir.string();
  c.scenario.n_subjects = 6;
  c.scenario.n_s = 5;
  c.scenario.n_t = 6;
  c.scenario.k_terms = 10;
  c.s_basis = BasisConfig::uniform(1, 3);
  c.t_basis = BasisConfig::uniform(1, 4);
  c.hyper.q1 = 2;
  c.hyper.q2 = 2;
  c.chain.n_iterations = 40;
  c.chain.burn_in = 20;
  c.chain.thin = 2;
  c.chain.seed = 4;
  c.data_path = (dir / "data.csv").string();
  c.rank = 2;
  c.n_components = 2;
  return c;
}

}  // namespace

TEST_CASE("exit codes follow the error type") {
  CHECK(exit_code_for(VersionError("v")) == kExitVersion);
  CHECK(exit_code_for(DatasetMismatchError("d")) == kExitDataMismatch);
  CHECK(exit_code_for(FormatError("f", 3)) == kExitIo);
  CHECK(exit_code_for(IoError("i")) == kExitIo);
  CHECK(exit_code_for(ArgumentError("a")) == kExitConfig);
  CHECK(exit_code_for(DomainError("m")) == kExitConfig);
  CHECK(exit_code_for(ChainError("c")) == kExitChainFailure);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitError);
}

TEST_CASE("simulate writes the dataset drawn from stream (seed, 0)") {
  const fs::path dir = fresh_dir("simulate");
  const RunConfig c = micro_config(dir);
  std::ostringstream log;
  const CommandResult r = simulate_command(c, log);
  CHECK(r.exit_code == kExitOk);
  for (const char* f : {"data.csv", "truth_mean.csv", "truth_gram.csv", "truth_k_s.csv", "truth_k_t.csv",
                        "truth_eigenfunctions.csv", "simulate.provenance.ini"})
    CHECK(fs::exists(dir / f));

  Rng rng(c.chain.seed, 0);
  const SimulatedData sim = generate(c.scenario, rng, TruthOptions{c.s_basis, c.t_basis, c.n_components});
  CHECK(slurp(dir / "data.csv") == format_dataset(sim.data));

  // The gram file lists (a, b) and (b, a) with equal values.
  std::map<std::string, std::string> cells;
  for (const auto& row : csv_rows(dir / "truth_gram.csv"))
    cells[row[0] + "," + row[1] + "," + row[2] + "," + row[3]] = row[4];
  CHECK(cells.size() == 30 * 30);
  for (const auto& [key, v] : cells) {
    std::stringstream ks(key);
    std::string s, t, s2, t2;
    std::getline(ks, s, ',');
    std::getline(ks, t, ',');
    std::getline(ks, s2, ',');
    std::getline(ks, t2, ',');
    CHECK(cells.at(s2 + "," + t2 + "," + s + "," + t) == v);
  }

  const fs::path dir2 = fresh_dir("simulate2");
  RunConfig c2 = micro_config(dir2);
  simulate_command(c2, log);
  CHECK(slurp(dir2 / "data.csv") == slurp(dir / "data.csv"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("fit, summarize and criteria compose") {
  const fs::path dir = fresh_dir("pipeline");
  RunConfig c = micro_config(dir);
  std::ostringstream log;
  simulate_command(c, log);
  const CommandResult fit = fit_command(c, log);
  REQUIRE(fit.exit_code == kExitOk);
  const std::string bytes = slurp(dir / "draws.lfd");
  const PosteriorDraws draws = decode_draws(bytes);
  CHECK(draws.draws.size() == 10);
  CHECK(csv_rows(dir / "loglik_trace.csv").size() == 40);
  CHECK(csv_rows(dir / "diagnostics.csv").size() == 4);
  CHECK(csv_rows(dir / "chains.csv")[0][1] == "0");

  // Same seed: the container is byte-identical.
  const fs::path again = fresh_dir("pipeline_again");
  RunConfig c2 = c;
  c2.out_dir = again.string();
  fit_command(c2, log);
  CHECK(slurp(again / "draws.lfd") == bytes);

  const CommandResult sum = summarize_command(c, (dir / "draws.lfd").string(), log);
  CHECK(sum.exit_code == kExitOk);
  const auto mean = csv_rows(dir / "mean_surface.csv");
  CHECK(mean.size() == 30);
  for (const auto& row : mean) {
    CHECK(parse_double(row[3]) <= parse_double(row[2]));
    CHECK(parse_double(row[2]) <= parse_double(row[4]));
  }
  const auto values = csv_rows(dir / "eigenvalues.csv");
  CHECK(values.size() == 4);  // rank 2 on each axis
  for (const auto& row : values) CHECK(parse_double(row[2]) >= 0.0);
  for (const auto& row : csv_rows(dir / "eigenfunctions.csv")) {
    CHECK(parse_double(row[4]) <= parse_double(row[3]) + 1e-12);
    CHECK(parse_double(row[3]) <= parse_double(row[5]) + 1e-12);
  }

  // A second model, then criteria in either argument order.
  const fs::path other = fresh_dir("pipeline_other");
  RunConfig c3 = c;
  c3.out_dir = other.string();
  c3.hyper.q1 = c3.hyper.q2 = 1;
  fit_command(c3, log);
  const std::string a = (dir / "draws.lfd").string(), b = (other / "draws.lfd").string();
  criteria_command(c, {a, b}, log);
  const std::string forward = slurp(dir / "criteria.csv");
  criteria_command(c, {b, a}, log);
  CHECK(slurp(dir / "criteria.csv") == forward);
  const auto rows = csv_rows(dir / "criteria.csv");
  REQUIRE(rows.size() == 2);
  for (int col : {13, 14, 15}) CHECK(std::stoi(rows[0][col]) + std::stoi(rows[1][col]) == 1);

  criteria_command(c, {a}, log);
  const auto single = csv_rows(dir / "criteria.csv");
  REQUIRE(single.size() == 1);
  CHECK(single[0][13] == "1");
  CHECK(single[0][14] == "1");
  CHECK(single[0][15] == "1");

  fs::remove_all(again);
  fs::remove_all(other);
  fs::remove_all(dir);
}

TEST_CASE("criteria refuse draws from another dataset") {
  const fs::path dir = fresh_dir("mismatch");
  RunConfig c = micro_config(dir);
  std::ostringstream log;
  simulate_command(c, log);
  fit_command(c, log);
  RunConfig other = micro_config(fresh_dir("mismatch_data"));
  other.chain.seed = 99;
  simulate_command(other, log);
  c.data_path = other.data_path;
  try {
    criteria_command(c, {(dir / "draws.lfd").string()}, log);
    FAIL("expected a dataset mismatch");
  } catch (const DatasetMismatchError& e) {
    CHECK(exit_code_for(e) == kExitDataMismatch);
  }
  fs::remove_all(dir);
  fs::remove_all(other.out_dir);
}

TEST_CASE("summarize reports unreadable containers") {
  const fs::path dir = fresh_dir("version");
  RunConfig c = micro_config(dir);
  std::ostringstream log;
  simulate_command(c, log);
  fit_command(c, log);
  std::string bytes = slurp(dir / "draws.lfd");
  bytes[8] = 9;  // major version
  atomic_write((dir / "future.lfd").string(), bytes);
  try {
    summarize_command(c, (dir / "future.lfd").string(), log);
    FAIL("expected a version error");
  } catch (const VersionError& e) {
    CHECK(exit_code_for(e) == kExitVersion);
  }
  CHECK_THROWS_AS(summarize_command(c, (dir / "missing.lfd").string(), log), IoError);
  c.alpha = 0;
  CHECK_THROWS_AS(summarize_command(c, (dir / "draws.lfd").string(), log), ArgumentError);
  fs::remove_all(dir);
}

TEST_CASE("provenance lists the effective settings") {
  const fs::path dir = fresh_dir("provenance");
  RunConfig c = micro_config(dir);
  const std::string path = write_provenance(c, "fit", {"note one"});
  const std::string text = slurp(path);
  CHECK(text.rfind("; command: fit\n; note one\n", 0) == 0);
  RunConfig back;
  apply_ini_file(back, path);
  CHECK(to_ini(back) == to_ini(c));
  fs::remove_all(dir);
}
