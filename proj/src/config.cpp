#include "lfda/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lfda/errors.hpp"

namespace lfda {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::string setting_name(const std::string& section, const std::string& key) { return section + "." + key; }

double to_double(const std::string& v, const std::string& name) {
  try {
    return parse_double(v);
  } catch (const FormatError&) {
    throw ArgumentError(name + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& name) {
  std::uint64_t out = 0;
  const char* b = v.data();
  const char* e = v.data() + v.size();
  const auto res = std::from_chars(b, e, out);
  if (v.empty() || res.ec != std::errc() || res.ptr != e)
    throw ArgumentError(name + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v, const std::string& name) {
  const std::string l = lower(v);
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw ArgumentError(name + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> tokens(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> to_doubles(const std::string& v, const std::string& name) {
  std::vector<double> out;
  for (const auto& t : tokens(v)) out.push_back(to_double(t, name));
  return out;
}

std::vector<std::size_t> to_sizes(const std::string& v, const std::string& name) {
  std::vector<std::size_t> out;
  for (const auto& t : tokens(v)) out.push_back(to_u64(t, name));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

std::string intercept_name(Intercept i) {
  switch (i) {
    case Intercept::Always:
      return "always";
    case Intercept::Never:
      return "never";
    default:
      return "auto";
  }
}

struct Entry {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;  // empty: write-only alias
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define LFDA_NUM(sec, k, field)                                                              \
  Entry {                                                                                    \
    sec, k, [](const RunConfig& c) { return format_double(c.field); },                       \
        [](RunConfig& c, const std::string& v, const std::string& n) { c.field = to_double(v, n); } \
  }
#define LFDA_SIZE(sec, k, field)                                                                  \
  Entry {                                                                                         \
    sec, k, [](const RunConfig& c) { return std::to_string(c.field); },                           \
        [](RunConfig& c, const std::string& v, const std::string& n) {                            \
          c.field = static_cast<decltype(c.field)>(to_u64(v, n));                                 \
        }                                                                                         \
  }
#define LFDA_BOOL(sec, k, field)                                                                \
  Entry {                                                                                       \
    sec, k, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); },          \
        [](RunConfig& c, const std::string& v, const std::string& n) { c.field = to_bool(v, n); } \
  }
#define LFDA_STR(sec, k, field)                                                                          \
  Entry {                                                                                                \
    sec, k, [](const RunConfig& c) { return c.field; }, [](RunConfig& c, const std::string& v, const std::string&) { \
      c.field = v;                                                                                       \
    }                                                                                                    \
  }
#define LFDA_DOUBLES(sec, k, field)                                                                \
  Entry {                                                                                          \
    sec, k, [](const RunConfig& c) { return join(c.field); },                                      \
        [](RunConfig& c, const std::string& v, const std::string& n) { c.field = to_doubles(v, n); } \
  }

std::vector<Entry> basis_entries(const std::string& sec, BasisConfig RunConfig::*member) {
  return {
      Entry{sec, "degree", [member](const RunConfig& c) { return std::to_string((c.*member).degree); },
            [member](RunConfig& c, const std::string& v, const std::string& n) {
              (c.*member).degree = static_cast<int>(to_u64(v, n));
            }},
      Entry{sec, "knots", [member](const RunConfig& c) { return join((c.*member).interior_knots); },
            [member](RunConfig& c, const std::string& v, const std::string& n) {
              (c.*member).interior_knots = to_doubles(v, n);
            }},
      Entry{sec, "lo", [member](const RunConfig& c) { return format_double((c.*member).lo); },
            [member](RunConfig& c, const std::string& v, const std::string& n) { (c.*member).lo = to_double(v, n); }},
      Entry{sec, "hi", [member](const RunConfig& c) { return format_double((c.*member).hi); },
            [member](RunConfig& c, const std::string& v, const std::string& n) { (c.*member).hi = to_double(v, n); }},
      // Replaces the knots by `dimension` equally spaced ones for the current degree.
      Entry{sec, "dimension", nullptr,
            [member](RunConfig& c, const std::string& v, const std::string& n) {
              BasisConfig& b = c.*member;
              const auto dim = static_cast<std::size_t>(to_u64(v, n));
              if (dim < static_cast<std::size_t>(b.degree) + 1) throw ArgumentError(n + ": dimension below degree + 1");
              b = BasisConfig::uniform(b.degree, dim, b.lo, b.hi);
            }},
  };
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e{
        LFDA_SIZE("chain", "iterations", chain.n_iterations),
        LFDA_SIZE("chain", "burnin", chain.burn_in),
        LFDA_SIZE("chain", "thin", chain.thin),
        LFDA_SIZE("chain", "chains", chain.n_chains),
        LFDA_SIZE("chain", "seed", chain.seed),
        LFDA_NUM("chain", "mh_step_sd", chain.mh_step_sd),
        LFDA_BOOL("chain", "adapt", chain.adapt),
        LFDA_BOOL("chain", "cache_omega", chain.cache_omega),
        LFDA_BOOL("chain", "warm_start", chain.warm_start),
        LFDA_SIZE("hyper", "q1", hyper.q1),
        LFDA_SIZE("hyper", "q2", hyper.q2),
        LFDA_NUM("hyper", "nu1", hyper.nu1),
        LFDA_NUM("hyper", "nu2", hyper.nu2),
        LFDA_NUM("hyper", "r1", hyper.r1),
        LFDA_NUM("hyper", "r2", hyper.r2),
        LFDA_NUM("hyper", "a_sigma", hyper.a_sigma),
        LFDA_NUM("hyper", "b_sigma", hyper.b_sigma),
        LFDA_NUM("hyper", "a_h", hyper.a_h),
        LFDA_NUM("hyper", "b_h", hyper.b_h),
        LFDA_NUM("hyper", "a_phi", hyper.a_phi),
        LFDA_NUM("hyper", "b_phi", hyper.b_phi),
        Entry{"scenario", "case", [](const RunConfig& c) { return std::to_string(c.scenario.case_id); },
              [](RunConfig& c, const std::string& v, const std::string& n) {
                c.scenario.case_id = static_cast<int>(to_u64(v, n));
              }},
        LFDA_SIZE("scenario", "subjects", scenario.n_subjects),
        LFDA_SIZE("scenario", "n_s", scenario.n_s),
        LFDA_SIZE("scenario", "n_t", scenario.n_t),
        LFDA_NUM("scenario", "noise_var", scenario.noise_var),
        LFDA_NUM("scenario", "matern_sigma2", scenario.matern_sigma2),
        LFDA_NUM("scenario", "matern_rho", scenario.matern_rho),
        LFDA_NUM("scenario", "alpha", scenario.alpha),
        LFDA_SIZE("scenario", "k_terms", scenario.k_terms),
        LFDA_STR("data", "path", data_path),
        Entry{"data", "intercept", [](const RunConfig& c) { return intercept_name(c.intercept); },
              [](RunConfig& c, const std::string& v, const std::string& n) {
                const std::string l = lower(v);
                if (l == "auto")
                  c.intercept = Intercept::Auto;
                else if (l == "always")
                  c.intercept = Intercept::Always;
                else if (l == "never")
                  c.intercept = Intercept::Never;
                else
                  throw ArgumentError(n + ": expected auto, always or never");
              }},
        LFDA_STR("output", "dir", out_dir),
        LFDA_NUM("summary", "alpha", alpha),
        LFDA_SIZE("summary", "rank", rank),
        LFDA_DOUBLES("summary", "s_points", s_points),
        LFDA_DOUBLES("summary", "t_points", t_points),
        LFDA_STR("benchmark", "experiment", experiment),
        LFDA_SIZE("benchmark", "replications", replications),
        LFDA_BOOL("benchmark", "fit_bayes", fit_bayes),
        LFDA_SIZE("benchmark", "components", n_components),
        Entry{"benchmark", "candidates", [](const RunConfig& c) { return join(c.candidates); },
              [](RunConfig& c, const std::string& v, const std::string& n) { c.candidates = to_sizes(v, n); }},
        LFDA_SIZE("benchmark", "generating_dimension", generating_dimension),
        LFDA_SIZE("benchmark", "generating_q", generating_q),
    };
    for (auto& b : basis_entries("basis_s", &RunConfig::s_basis)) e.push_back(std::move(b));
    for (auto& b : basis_entries("basis_t", &RunConfig::t_basis)) e.push_back(std::move(b));
    return e;
  }();
  return entries;
}

#undef LFDA_NUM
#undef LFDA_SIZE
#undef LFDA_BOOL
#undef LFDA_STR
#undef LFDA_DOUBLES

void apply_tree(RunConfig& config, const boost::property_tree::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ArgumentError("setting '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) apply_setting(config, section, key, value.get_value<std::string>());
  }
}

}  // namespace

void RunConfig::validate() const {
  chain.validate();
  s_basis.validate();
  t_basis.validate();
  hyper.validate(s_basis.dimension(), t_basis.dimension());
  scenario.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("summary.alpha must lie in (0, 1)");
  if (rank == 0) throw ArgumentError("summary.rank must be positive");
  if (experiment != "table1" && experiment != "selection")
    throw ArgumentError("benchmark.experiment must be table1 or selection");
  if (replications == 0) throw ArgumentError("benchmark.replications must be positive");
  if (candidates.empty()) throw ArgumentError("benchmark.candidates must not be empty");
}

RunConfig default_run_config() { return RunConfig{}; }

void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value) {
  const std::string s = lower(section), k = lower(key);
  for (const Entry& e : registry())
    if (e.section == s && e.key == k) {
      e.set(config, value, setting_name(s, k));
      return;
    }
  throw ArgumentError("unknown setting " + setting_name(section, key));
}

void apply_ini_file(RunConfig& config, const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ArgumentError("config file " + path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  apply_tree(config, tree);
}

void apply_ini_text(RunConfig& config, const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ArgumentError("config text: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  apply_tree(config, tree);
}

std::vector<std::string> apply_environment(RunConfig& config) {
  std::vector<std::string> applied;
  for (const Entry& e : registry()) {
    const std::string name = "LFDA_" + upper(e.section) + "_" + upper(e.key);
    if (const char* v = std::getenv(name.c_str())) {
      e.set(config, v, name);
      applied.push_back(name);
    }
  }
  return applied;
}

std::string to_ini(const RunConfig& config) {
  std::string out, current;
  for (const Entry& e : registry()) {
    if (!e.get) continue;
    if (e.section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + e.section + "]\n";
      current = e.section;
    }
    out += e.key + " = " + e.get(config) + "\n";
  }
  return out;
}

}  // namespace lfda
