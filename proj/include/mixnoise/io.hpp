#pragma once

// File formats: small CSV reader/writer, chain / events / checkpoint files,
// observations and surrogate tables. Doubles are written in shortest
// round-trip form so that files reload bitwise.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"
#include "mixnoise/kernels.hpp"
#include "mixnoise/observations.hpp"

namespace mixnoise::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError("malformed number '" + std::string(s) + "'");
  return v;
}

inline std::uint64_t parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError("malformed integer '" + std::string(s) + "'");
  return v;
}

inline std::ofstream open_out(const fs::path& p, bool append = false) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  std::ofstream os(p, append ? std::ios::app : std::ios::trunc);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  return os;
}

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot open " + p.string());
  return is;
}

inline void write_json(const fs::path& p, const json& j) {
  // Written to a sibling and renamed, so readers never see a partial file.
  const fs::path tmp = p.string() + ".tmp";
  {
    auto os = open_out(tmp);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed for " + p.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline json read_json(const fs::path& p) {
  auto is = open_in(p);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

/// Header plus rows of string fields.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw IoError("missing column '" + std::string(name) + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_csv(const fs::path& p) {
  auto is = open_in(p);
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw IoError(p.string() + ": empty file");
  t.header = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto r = split_csv_line(line);
    if (r.size() != t.header.size()) throw IoError(p.string() + ": ragged row");
    t.rows.push_back(std::move(r));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Observations, ground truth, surrogate

inline void write_observations(const fs::path& p, const ObservationSet& obs) {
  auto os = open_out(p);
  os << "n,l,y,c\n";
  for (std::size_t n = 0; n < obs.pixels; ++n)
    for (std::size_t l = 0; l < obs.channels; ++l)
      os << n << "," << l << "," << fmt(obs.y[n * obs.channels + l]) << ","
         << static_cast<int>(obs.censored[n * obs.channels + l]) << "\n";
}

inline ObservationSet read_observations(const fs::path& p, const NoiseModel& noise) {
  const Table t = read_csv(p);
  const std::size_t cn = t.column("n"), cl = t.column("l"), cy = t.column("y"), cc = t.column("c");
  ObservationSet obs;
  obs.noise = noise;
  for (const auto& r : t.rows) {
    obs.pixels = std::max<std::size_t>(obs.pixels, parse_uint(r[cn]) + 1);
    obs.channels = std::max<std::size_t>(obs.channels, parse_uint(r[cl]) + 1);
  }
  if (t.rows.size() != obs.pixels * obs.channels) throw IoError(p.string() + ": incomplete observation grid");
  obs.y.assign(t.rows.size(), 0.0);
  obs.censored.assign(t.rows.size(), 0);
  for (const auto& r : t.rows) {
    const std::size_t i = parse_uint(r[cn]) * obs.channels + parse_uint(r[cl]);
    obs.y[i] = parse_double(r[cy]);
    obs.censored[i] = static_cast<std::uint8_t>(parse_uint(r[cc]) != 0);
  }
  return obs;
}

/// n, theta_1 .. theta_D
inline void write_field(const fs::path& p, const Field& f, std::string_view index = "n") {
  auto os = open_out(p);
  os << index;
  for (std::size_t d = 0; d < f.dim(); ++d) os << ",theta_" << d + 1;
  os << "\n";
  for (std::size_t n = 0; n < f.pixels(); ++n) {
    os << n;
    for (std::size_t d = 0; d < f.dim(); ++d) os << "," << fmt(f(n, d));
    os << "\n";
  }
}

inline Field read_field(const fs::path& p) {
  const Table t = read_csv(p);
  if (t.header.size() < 2) throw IoError(p.string() + ": no value columns");
  Field f(t.rows.size(), t.header.size() - 1);
  for (std::size_t n = 0; n < t.rows.size(); ++n) {
    if (parse_uint(t.rows[n][0]) != n) throw IoError(p.string() + ": rows out of order");
    for (std::size_t d = 0; d < f.dim(); ++d) f(n, d) = parse_double(t.rows[n][d + 1]);
  }
  return f;
}

/// l, e_1 .. e_D, coefficient; one row per (channel, monomial).
inline void write_surrogate(const fs::path& p, const PolynomialSurrogate& s) {
  auto os = open_out(p);
  os << "l";
  for (std::size_t d = 0; d < s.dim(); ++d) os << ",e_" << d + 1;
  os << ",coefficient\n";
  for (std::size_t l = 0; l < s.channels(); ++l)
    for (std::size_t k = 0; k < s.terms(); ++k) {
      os << l;
      for (int e : s.exponents(k)) os << "," << e;
      os << "," << fmt(s.coefficient(l, k)) << "\n";
    }
}

inline PolynomialSurrogate read_surrogate(const fs::path& p) {
  const Table t = read_csv(p);
  if (t.header.size() < 3) throw IoError(p.string() + ": malformed surrogate table");
  const std::size_t D = t.header.size() - 2;
  std::size_t L = 0;
  int degree = 0;
  for (const auto& r : t.rows) {
    L = std::max<std::size_t>(L, parse_uint(r[0]) + 1);
    int tot = 0;
    for (std::size_t d = 0; d < D; ++d) tot += static_cast<int>(parse_uint(r[d + 1]));
    degree = std::max(degree, tot);
  }
  PolynomialSurrogate s(D, L, degree);
  if (t.rows.size() != L * s.terms()) throw IoError(p.string() + ": incomplete surrogate table");
  std::vector<int> e(D);
  for (const auto& r : t.rows) {
    for (std::size_t d = 0; d < D; ++d) e[d] = static_cast<int>(parse_uint(r[d + 1]));
    s.coefficient(parse_uint(r[0]), s.index_of(e)) = parse_double(r[D + 1]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Chains

inline const char* kernel_name(Kernel k) { return k == Kernel::kPmala ? "pmala" : "mtm"; }

inline Kernel parse_kernel(std::string_view s) {
  if (s == "pmala") return Kernel::kPmala;
  if (s == "mtm") return Kernel::kMtm;
  throw IoError("unknown kernel '" + std::string(s) + "'");
}

/// Chain layouts: "wide" has one row per recorded iteration; "long" has one
/// row per (iteration, pixel, dim).
class ChainWriter {
 public:
  ChainWriter(const fs::path& dir, std::size_t pixels, std::size_t dim, std::string layout, bool append)
      : pixels_(pixels), dim_(dim), layout_(std::move(layout)) {
    if (layout_ != "wide" && layout_ != "long") throw ConfigError("chain layout must be 'wide' or 'long'");
    chain_ = open_out(dir / "chain.csv", append);
    events_ = open_out(dir / "events.csv", append);
    if (!append) {
      if (layout_ == "wide") {
        chain_ << "iteration";
        for (std::size_t n = 0; n < pixels_; ++n)
          for (std::size_t d = 0; d < dim_; ++d) chain_ << ",theta_" << n << "_" << d;
        chain_ << "\n";
      } else {
        chain_ << "iteration,pixel,dim,value\n";
      }
      events_ << "iteration,kernel,accepted,attempts\n";
    }
  }

  void sample(std::uint64_t t, const Field& th) {
    if (layout_ == "wide") {
      chain_ << t;
      for (std::size_t i = 0; i < th.size(); ++i) chain_ << "," << fmt(th[i]);
      chain_ << "\n";
    } else {
      for (std::size_t n = 0; n < pixels_; ++n)
        for (std::size_t d = 0; d < dim_; ++d) chain_ << t << "," << n << "," << d << "," << fmt(th(n, d)) << "\n";
    }
  }
  void event(const IterationEvent& e) {
    events_ << e.iteration << "," << kernel_name(e.kernel) << "," << e.accepted << "," << e.attempts << "\n";
  }
  void flush() {
    chain_.flush();
    events_.flush();
    if (!chain_ || !events_) throw IoError("chain write failed");
  }

 private:
  std::size_t pixels_, dim_;
  std::string layout_;
  std::ofstream chain_, events_;
};

/// Recorded samples of a chain directory plus the iteration number of each row.
struct LoadedChain {
  ChainRecord record;  // events hold every iteration; samples only recorded rows
  std::vector<std::uint64_t> sample_iterations;
};

inline std::vector<IterationEvent> read_events(const fs::path& p) {
  const Table t = read_csv(p);
  const std::size_t ci = t.column("iteration"), ck = t.column("kernel"), ca = t.column("accepted"),
                    cn = t.column("attempts");
  std::vector<IterationEvent> ev;
  ev.reserve(t.rows.size());
  for (const auto& r : t.rows)
    ev.push_back({parse_uint(r[ci]), parse_kernel(r[ck]), static_cast<std::size_t>(parse_uint(r[ca])),
                  static_cast<std::size_t>(parse_uint(r[cn]))});
  return ev;
}

inline LoadedChain read_chain(const fs::path& dir, std::size_t pixels, std::size_t dim) {
  LoadedChain out;
  auto& rec = out.record;
  rec.pixels = pixels;
  rec.dim = dim;
  rec.events = read_events(dir / "events.csv");
  const Table t = read_csv(dir / "chain.csv");
  const std::size_t W = pixels * dim;
  if (t.header.size() == W + 1) {
    rec.samples.reserve(t.rows.size() * W);
    for (const auto& r : t.rows) {
      out.sample_iterations.push_back(parse_uint(r[0]));
      for (std::size_t i = 0; i < W; ++i) rec.samples.push_back(parse_double(r[i + 1]));
    }
  } else if (t.header == std::vector<std::string>{"iteration", "pixel", "dim", "value"}) {
    if (t.rows.size() % W) throw IoError("chain.csv: long layout row count is not a multiple of N*D");
    rec.samples.assign(t.rows.size(), 0.0);
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
      const auto& r = t.rows[k];
      const std::size_t row = k / W;
      const std::uint64_t it = parse_uint(r[0]);
      if (k % W == 0) out.sample_iterations.push_back(it);
      if (out.sample_iterations[row] != it) throw IoError("chain.csv: long layout rows out of order");
      rec.samples[row * W + parse_uint(r[1]) * dim + parse_uint(r[2])] = parse_double(r[3]);
    }
  } else {
    throw IoError("chain.csv: header does not match the model shape");
  }
  return out;
}

/// Samples with iteration > burn_in as a ChainRecord whose events are aligned
/// with the recorded rows (one event per sample).
inline ChainRecord recorded_after(const LoadedChain& c, std::uint64_t burn_in) {
  ChainRecord r;
  r.pixels = c.record.pixels;
  r.dim = c.record.dim;
  const std::size_t W = r.width();
  for (std::size_t k = 0; k < c.sample_iterations.size(); ++k) {
    const std::uint64_t it = c.sample_iterations[k];
    if (it <= burn_in) continue;
    r.samples.insert(r.samples.end(), c.record.samples.begin() + k * W, c.record.samples.begin() + (k + 1) * W);
    r.events.push_back(it >= 1 && it <= c.record.events.size() ? c.record.events[it - 1] : IterationEvent{it});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json to_json(const Field& f) {
  return {{"pixels", f.pixels()}, {"dim", f.dim()}, {"values", std::vector<double>(f.flat().begin(), f.flat().end())}};
}

inline Field field_from_json(const json& j) {
  Field f(j.at("pixels").get<std::size_t>(), j.at("dim").get<std::size_t>());
  const auto v = j.at("values").get<std::vector<double>>();
  if (v.size() != f.size()) throw IoError("field size mismatch in JSON");
  std::copy(v.begin(), v.end(), f.flat().begin());
  return f;
}

inline json to_json(const Checkpoint& c) {
  return {{"seed", c.seed},
          {"iteration", c.iteration},
          {"theta", to_json(c.theta)},
          {"v", to_json(c.v)},
          {"j", c.j},
          {"epsilon", c.epsilon},
          {"adapter",
           {{"mu", c.adapter.mu}, {"log_eps_bar", c.adapter.log_eps_bar}, {"h_bar", c.adapter.h_bar}, {"m", c.adapter.m}}}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.iteration = j.at("iteration").get<std::uint64_t>();
    c.theta = field_from_json(j.at("theta"));
    c.v = field_from_json(j.at("v"));
    c.j = j.at("j").get<std::vector<std::uint64_t>>();
    c.epsilon = j.at("epsilon").get<double>();
    const auto& a = j.at("adapter");
    c.adapter.mu = a.at("mu").get<double>();
    c.adapter.log_eps_bar = a.at("log_eps_bar").get<double>();
    c.adapter.h_bar = a.at("h_bar").get<double>();
    c.adapter.m = a.at("m").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
  return c;
}

/// Keeps the first rows of a CSV (after the header) whose first field, an
/// iteration number, is <= last.
inline void truncate_after(const fs::path& p, std::uint64_t last) {
  auto is = open_in(p);
  std::ostringstream keep;
  std::string line;
  std::getline(is, line);
  keep << line << "\n";
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (parse_uint(std::string_view(line).substr(0, comma)) > last) break;
    keep << line << "\n";
  }
  is.close();
  auto os = open_out(p);
  os << keep.str();
}

}  // namespace mixnoise::io
