#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lfda/model.hpp"
#include "lfda/sampler.hpp"

namespace lfda {

/// Shortest round-trip text for a double (17 significant digits).
std::string format_double(double v);

/// Strict parse of a whole field; throws FormatError carrying `line`.
double parse_double(std::string_view field, std::size_t line = 0);

/// Writes to `path + ".tmp"` then renames over `path`.
void atomic_write(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

enum class Intercept {
  Auto,    // prepend x = 1 only when the file has no covariate columns
  Always,  // prepend x = 1
  Never,
};

struct LoadOptions {
  Intercept intercept = Intercept::Auto;
};

/// Long-format CSV with header subject,s,t,value[,x1..xd].
///
/// The grids are the sorted unions of the s and t values; cells a subject
/// lacks are masked out. Subjects keep their order of first appearance.
FunctionalDataset load_dataset(const std::string& path, const LoadOptions& options = {});
FunctionalDataset parse_dataset(std::istream& in, const LoadOptions& options = {});

/// Observed cells only, ordered by subject, then s, then t.
std::string format_dataset(const FunctionalDataset& data);
void save_dataset(const std::string& path, const FunctionalDataset& data);

/// Draw container format version. Readers accept files with the same major
/// version and a minor version not newer than their own.
struct FormatVersion {
  std::uint16_t major = 1;
  std::uint16_t minor = 0;
  std::uint16_t patch = 0;
};
inline constexpr FormatVersion kDrawFormatVersion{1, 0, 0};

std::string encode_draws(const PosteriorDraws& draws);
PosteriorDraws decode_draws(std::string_view bytes);
void save_draws(const std::string& path, const PosteriorDraws& draws);
PosteriorDraws load_draws(const std::string& path);

}  // namespace lfda
