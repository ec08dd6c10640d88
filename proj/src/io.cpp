#include "lfda/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <system_error>
#include <tuple>
#include <unordered_map>

#include "lfda/errors.hpp"

namespace lfda {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

double parse_double(std::string_view field, std::size_t line) {
  field = trim(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw FormatError("non-numeric field '" + std::string(field) + "'", line);
  return v;
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Long-format datasets

FunctionalDataset load_dataset(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_dataset(in, options);
}

FunctionalDataset parse_dataset(std::istream& in, const LoadOptions& options) {
  struct Cell {
    double s, t, value;
  };
  struct Pending {
    std::string id;
    std::vector<Cell> cells;
    std::vector<double> x;
    std::size_t first_line = 0;
  };

  std::string raw;
  std::size_t line_no = 0;
  std::size_t n_cov = 0;
  bool have_header = false;
  std::vector<Pending> subjects;
  std::unordered_map<std::string, std::size_t> index;
  std::map<std::tuple<std::size_t, double, double>, std::size_t> seen;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.remove_prefix(3);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (!have_header) {
      if (fields.size() < 4 || fields[0] != "subject" || fields[1] != "s" || fields[2] != "t" || fields[3] != "value")
        throw FormatError("header must start with subject,s,t,value", line_no);
      n_cov = fields.size() - 4;
      have_header = true;
      continue;
    }
    if (fields.size() != n_cov + 4)
      throw FormatError("expected " + std::to_string(n_cov + 4) + " fields, found " + std::to_string(fields.size()),
                        line_no);
    if (fields[0].empty()) throw FormatError("empty subject id", line_no);
    const std::string id(fields[0]);
    const Cell cell{parse_double(fields[1], line_no), parse_double(fields[2], line_no), parse_double(fields[3], line_no)};
    if (!std::isfinite(cell.s) || !std::isfinite(cell.t)) throw FormatError("grid coordinates must be finite", line_no);
    if (!std::isfinite(cell.value)) throw FormatError("value must be finite", line_no);
    std::vector<double> x(n_cov);
    for (std::size_t c = 0; c < n_cov; ++c) x[c] = parse_double(fields[4 + c], line_no);

    auto [it, inserted] = index.try_emplace(id, subjects.size());
    if (inserted) subjects.push_back({id, {}, x, line_no});
    Pending& subj = subjects[it->second];
    if (!inserted && subj.x != x)
      throw FormatError("covariates vary within subject '" + id + "' (first seen on line " +
                            std::to_string(subj.first_line) + ")",
                        line_no);
    const auto key = std::make_tuple(it->second, cell.s, cell.t);
    if (auto [prev, fresh] = seen.try_emplace(key, line_no); !fresh)
      throw FormatError("duplicate cell for subject '" + id + "' (first on line " + std::to_string(prev->second) + ")",
                        line_no);
    subj.cells.push_back(cell);
  }
  if (!have_header) throw FormatError("missing header");

  FunctionalDataset data;
  for (const auto& subj : subjects)
    for (const auto& c : subj.cells) {
      data.s_grid.push_back(c.s);
      data.t_grid.push_back(c.t);
    }
  for (auto* g : {&data.s_grid, &data.t_grid}) {
    std::sort(g->begin(), g->end());
    g->erase(std::unique(g->begin(), g->end()), g->end());
  }
  const bool intercept =
      options.intercept == Intercept::Always || (options.intercept == Intercept::Auto && n_cov == 0);
  data.d = n_cov + (intercept ? 1 : 0);
  const auto ns = static_cast<Eigen::Index>(data.s_grid.size());
  const auto nt = static_cast<Eigen::Index>(data.t_grid.size());
  for (const auto& subj : subjects) {
    SubjectRecord rec;
    rec.id = subj.id;
    rec.y = Matrix::Zero(ns, nt);
    rec.mask = Mask::Constant(ns, nt, false);
    for (const auto& c : subj.cells) {
      const auto j = std::lower_bound(data.s_grid.begin(), data.s_grid.end(), c.s) - data.s_grid.begin();
      const auto k = std::lower_bound(data.t_grid.begin(), data.t_grid.end(), c.t) - data.t_grid.begin();
      rec.y(j, k) = c.value;
      rec.mask(j, k) = true;
    }
    rec.x.resize(static_cast<Eigen::Index>(data.d));
    Eigen::Index o = 0;
    if (intercept) rec.x[o++] = 1.0;
    for (double v : subj.x) rec.x[o++] = v;
    data.subjects.push_back(std::move(rec));
  }
  return data;
}

std::string format_dataset(const FunctionalDataset& data) {
  std::string out = "subject,s,t,value";
  for (std::size_t c = 0; c < data.d; ++c) out += ",x" + std::to_string(c + 1);
  out += '\n';
  for (const auto& subj : data.subjects) {
    std::string cov;
    for (Eigen::Index c = 0; c < subj.x.size(); ++c) cov += ',' + format_double(subj.x[c]);
    for (Eigen::Index j = 0; j < subj.y.rows(); ++j)
      for (Eigen::Index k = 0; k < subj.y.cols(); ++k) {
        if (!subj.mask(j, k)) continue;
        out += subj.id;
        out += ',' + format_double(data.s_grid[j]) + ',' + format_double(data.t_grid[k]) + ',' +
               format_double(subj.y(j, k)) + cov + '\n';
      }
  }
  return out;
}

void save_dataset(const std::string& path, const FunctionalDataset& data) { atomic_write(path, format_dataset(data)); }

// ---------------------------------------------------------------------------
// Draw container. All integers and doubles are little-endian; see
// docs/draw-container.md for the byte layout.

namespace {

constexpr char kMagic[8] = {'L', 'F', 'D', 'A', 'D', 'R', 'W', '\0'};
constexpr char kTrailer[8] = {'L', 'F', 'D', 'A', 'E', 'N', 'D', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }
  void matrix(const Matrix& m) { doubles(m.data(), static_cast<std::size_t>(m.size())); }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    doubles(v.data(), v.size());
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(uint_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
  std::uint64_t u64() { return uint_le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t limit = std::size_t{1} << 40) {
    const std::uint64_t n = u64();
    if (n > limit) throw FormatError("draw container: implausible count " + std::to_string(n));
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count(remaining());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void matrix(Matrix& m, std::size_t rows, std::size_t cols) {
    need(rows * cols * 8);
    m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
  }
  void vector(Vector& v, std::size_t n) {
    need(n * 8);
    v.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f64();
  }
  std::vector<double> vec() {
    const std::size_t n = count(remaining() / 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw FormatError("draw container truncated");
  }
  std::uint64_t uint_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

void write_basis(Writer& w, const BasisConfig& b) {
  w.u64(static_cast<std::uint64_t>(b.degree));
  w.f64(b.lo);
  w.f64(b.hi);
  w.vec(b.interior_knots);
}

BasisConfig read_basis(Reader& r) {
  BasisConfig b;
  b.degree = static_cast<int>(r.u64());
  b.lo = r.f64();
  b.hi = r.f64();
  b.interior_knots = r.vec();
  return b;
}

}  // namespace

std::string encode_draws(const PosteriorDraws& pd) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u16(kDrawFormatVersion.major);
  w.u16(kDrawFormatVersion.minor);
  w.u16(kDrawFormatVersion.patch);
  w.u16(0);

  std::size_t p1 = pd.s_basis.dimension(), p2 = pd.t_basis.dimension(), q1 = pd.hyper.q1, q2 = pd.hyper.q2, d = 0,
              n = 0;
  if (!pd.draws.empty()) {
    const ModelState& s = pd.draws.front().state;
    p1 = s.p1();
    p2 = s.p2();
    q1 = s.q1();
    q2 = s.q2();
    d = s.d();
    n = s.n_subjects();
  }
  for (std::uint64_t v : {p1, p2, q1, q2, d, n, pd.draws.size(), pd.chains.size()}) w.u64(v);
  w.u64(pd.config.seed);
  w.u64(pd.dataset_hash);
  w.u64(pd.config.n_iterations);
  w.u64(pd.config.burn_in);
  w.u64(pd.config.thin);
  w.u64(pd.config.n_chains);
  w.f64(pd.config.mh_step_sd);
  w.u8(pd.config.adapt ? 1 : 0);
  w.u8(pd.config.cache_omega ? 1 : 0);
  w.u8(pd.config.warm_start ? 1 : 0);
  write_basis(w, pd.s_basis);
  write_basis(w, pd.t_basis);
  const Hyperparameters& h = pd.hyper;
  for (double v : {h.nu1, h.nu2, h.r1, h.r2, h.a_sigma, h.b_sigma, h.a_h, h.b_h, h.a_phi, h.b_phi}) w.f64(v);
  w.vec(pd.s_grid);
  w.vec(pd.t_grid);

  for (const ChainDiagnostics& c : pd.chains) {
    w.u32(c.chain);
    w.u8(c.failed ? 1 : 0);
    w.str(c.error);
    w.u64(c.iterations_completed);
    for (double v : c.acceptance_rate) w.f64(v);
    for (double v : c.step_sd) w.f64(v);
    w.u64(c.truncated_gamma_fallbacks);
    w.u64(c.jitter_retries);
  }

  for (const Draw& dr : pd.draws) {
    const ModelState& s = dr.state;
    if (s.p1() != p1 || s.p2() != p2 || s.q1() != q1 || s.q2() != q2 || s.d() != d || s.n_subjects() != n)
      throw ArgumentError("draws with inconsistent dimensions cannot share a container");
    w.u32(dr.chain);
    w.u32(0);
    w.u64(dr.iteration);
    w.f64(dr.log_likelihood);
    for (const Matrix& th : s.theta) w.matrix(th);
    w.matrix(s.lambda);
    w.matrix(s.gamma);
    for (const Matrix& e : s.eta) w.matrix(e);
    w.matrix(s.sigma);
    w.matrix(s.h);
    w.f64(s.phi2);
    w.matrix(s.beta);
    w.matrix(s.omega);
    w.matrix(s.rho1);
    w.matrix(s.rho2);
    w.matrix(s.delta1);
    w.matrix(s.delta2);
    for (double v : {s.a11, s.a12, s.a21, s.a22}) w.f64(v);
  }
  w.bytes(kTrailer, sizeof kTrailer);
  return w.take();
}

PosteriorDraws decode_draws(std::string_view bytes) {
  Reader r(bytes);
  char magic[8];
  if (bytes.size() < sizeof magic) throw FormatError("not a draw container (too short)");
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a draw container (bad magic)");
  FormatVersion v;
  v.major = r.u16();
  v.minor = r.u16();
  v.patch = r.u16();
  r.u16();
  if (v.major != kDrawFormatVersion.major || v.minor > kDrawFormatVersion.minor)
    throw VersionError("draw container version " + std::to_string(v.major) + "." + std::to_string(v.minor) + "." +
                       std::to_string(v.patch) + " is not readable by format " +
                       std::to_string(kDrawFormatVersion.major) + "." + std::to_string(kDrawFormatVersion.minor));

  PosteriorDraws pd;
  const std::size_t p1 = r.count(1 << 20), p2 = r.count(1 << 20), q1 = r.count(1 << 20), q2 = r.count(1 << 20),
                    d = r.count(1 << 20), n = r.count(1 << 30), n_draws = r.count(), n_chains = r.count(1 << 20);
  pd.config.seed = r.u64();
  pd.dataset_hash = r.u64();
  pd.config.n_iterations = r.u64();
  pd.config.burn_in = r.u64();
  pd.config.thin = r.u64();
  pd.config.n_chains = r.u64();
  pd.config.mh_step_sd = r.f64();
  pd.config.adapt = r.u8() != 0;
  pd.config.cache_omega = r.u8() != 0;
  pd.config.warm_start = r.u8() != 0;
  pd.s_basis = read_basis(r);
  pd.t_basis = read_basis(r);
  Hyperparameters& h = pd.hyper;
  h.q1 = q1;
  h.q2 = q2;
  for (double* f : {&h.nu1, &h.nu2, &h.r1, &h.r2, &h.a_sigma, &h.b_sigma, &h.a_h, &h.b_h, &h.a_phi, &h.b_phi})
    *f = r.f64();
  pd.s_grid = r.vec();
  pd.t_grid = r.vec();

  pd.chains.resize(n_chains);
  for (ChainDiagnostics& c : pd.chains) {
    c.chain = r.u32();
    c.failed = r.u8() != 0;
    c.error = r.str();
    c.iterations_completed = r.u64();
    for (double& x : c.acceptance_rate) x = r.f64();
    for (double& x : c.step_sd) x = r.f64();
    c.truncated_gamma_fallbacks = r.u64();
    c.jitter_retries = r.u64();
  }

  const std::size_t per_draw = 8 * (2 + n * (p1 * p2 + q1 * q2) + p1 * q1 + p2 * q2 + p1 * p2 + q1 * q2 + 1 +
                                    2 * d * q1 * q2 + p1 * q1 + p2 * q2 + q1 + q2 + 4) + 8;
  if (n_draws > r.remaining() / std::max<std::size_t>(per_draw, 1)) throw FormatError("draw container truncated");
  pd.draws.resize(n_draws);
  for (Draw& dr : pd.draws) {
    dr.chain = r.u32();
    r.u32();
    dr.iteration = r.u64();
    dr.log_likelihood = r.f64();
    ModelState& s = dr.state;
    s.theta.resize(n);
    for (Matrix& th : s.theta) r.matrix(th, p1, p2);
    r.matrix(s.lambda, p1, q1);
    r.matrix(s.gamma, p2, q2);
    s.eta.resize(n);
    for (Matrix& e : s.eta) r.matrix(e, q1, q2);
    r.vector(s.sigma, p1 * p2);
    r.vector(s.h, q1 * q2);
    s.phi2 = r.f64();
    r.matrix(s.beta, d, q1 * q2);
    r.matrix(s.omega, d, q1 * q2);
    r.matrix(s.rho1, p1, q1);
    r.matrix(s.rho2, p2, q2);
    r.vector(s.delta1, q1);
    r.vector(s.delta2, q2);
    s.a11 = r.f64();
    s.a12 = r.f64();
    s.a21 = r.f64();
    s.a22 = r.f64();
    s.refresh_tau();
  }
  char trailer[8];
  r.bytes(trailer, sizeof trailer);
  if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0) throw FormatError("draw container: bad trailer");
  if (r.remaining() != 0) throw FormatError("draw container: trailing bytes");
  return pd;
}

void save_draws(const std::string& path, const PosteriorDraws& draws) { atomic_write(path, encode_draws(draws)); }

PosteriorDraws load_draws(const std::string& path) { return decode_draws(read_file(path)); }

}  // namespace lfda
