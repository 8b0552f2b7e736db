#pragma once

// Chain statistics: Geyer ESS, MMSE error metrics, empirical credible
// intervals, mode occupancy and the CSV / JSON summaries of an experiment.

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"
#include "mixnoise/kernels.hpp"
#include "mixnoise/parallel.hpp"

namespace mixnoise {

/// Normalized autocorrelation rho_0..rho_{T-1} (biased estimator), via zero-padded FFT.
inline std::vector<double> autocorrelation(std::span<const double> xs) {
  const std::size_t T = xs.size();
  if (T == 0) return {};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(T);
  std::size_t n = 1;
  while (n < 2 * T) n <<= 1;
  std::vector<double> padded(n, 0.0);
  for (std::size_t t = 0; t < T; ++t) padded[t] = xs[t] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& c : spec) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> acov;
  fft.inv(acov, spec);
  std::vector<double> rho(T, 0.0);
  if (!(acov[0] > 0.0)) return rho;
  for (std::size_t k = 0; k < T; ++k) rho[k] = acov[k] / acov[0];
  return rho;
}

/// T / tau with tau = -1 + 2 sum_k Gamma_k, Gamma_k = rho_2k + rho_2k+1 summed
/// while positive (initial positive sequence). Clamped to [1, T].
inline double ess(std::span<const double> xs) {
  const std::size_t T = xs.size();
  if (T < 2) return static_cast<double>(T);
  const auto rho = autocorrelation(xs);
  if (rho[0] == 0.0) return 1.0;  // constant chain
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k + 1 < T; ++k) {
    const double g = rho[2 * k] + rho[2 * k + 1];
    if (!(g > 0.0)) break;
    tau += 2.0 * g;
  }
  const double e = static_cast<double>(T) / tau;
  return std::clamp(e, 1.0, static_cast<double>(T));
}

/// Linear-interpolated empirical quantile of a sorted sample.
inline double sorted_quantile(std::span<const double> s, double q) {
  if (s.empty()) throw DomainError("quantile of an empty sample");
  const double pos = q * static_cast<double>(s.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double r = pos - static_cast<double>(i);
  return i + 1 < s.size() ? s[i] + r * (s[i + 1] - s[i]) : s[i];
}

/// Per-map (parameter d) reconstruction metrics.
struct MapStats {
  double mse = 0.0;   // mean over pixels of squared error
  double sq_error = 0.0;  // ||mean - truth||^2 over the map
  std::optional<double> rsnr_db;  // absent when the true map is identically 0
  double ci_width_mean = 0.0;      // % of the validity interval
  std::optional<double> ci_width_low_censor;   // pixels <= 50% censored
  std::optional<double> ci_width_high_censor;  // pixels > 50% censored
  std::optional<double> rsnr_db_low_censor;    // pixels < 50% censored only
};

struct ChainStats {
  std::size_t pixels = 0, dim = 0, samples = 0;
  std::vector<double> ess;  // per coordinate, (n, d) flattened
  Field mean;
  Field ci_lower, ci_upper;
  Field ci_width_pct;  // relative to u_d - l_d
  std::optional<double> bias;  // ||mean - truth||
  std::optional<double> mse;   // ||mean - truth||^2 / (N D)
  std::optional<double> rsnr_db;
  std::vector<MapStats> maps;  // one per parameter d; error fields need truth

  double ess_min() const { return *std::min_element(ess.begin(), ess.end()); }
  double ess_max() const { return *std::max_element(ess.begin(), ess.end()); }
  double ess_mean() const {
    double s = 0.0;
    for (double e : ess) s += e;
    return s / static_cast<double>(ess.size());
  }
};

inline double rsnr(double truth_sq, double err_sq) {
  if (err_sq == 0.0) return kInf;
  return 10.0 * std::log10(truth_sq / err_sq);
}

/// Post-burn-in summary. censored_fraction (one entry per pixel) splits the
/// CI widths at 50% censorship.
inline ChainStats summarize(const ChainRecord& rec, const std::optional<Field>& truth, const ValidityBox& box,
                            std::size_t burn_in, std::span<const double> censored_fraction = {},
                            std::size_t threads = 1) {
  if (burn_in >= rec.length()) throw ConfigError("summarize: burn-in leaves no samples");
  if (box.dim() != rec.dim) throw ConfigError("summarize: box dimension mismatch");
  if (truth && (truth->pixels() != rec.pixels || truth->dim() != rec.dim))
    throw ConfigError("summarize: truth shape mismatch");
  if (!censored_fraction.empty() && censored_fraction.size() != rec.pixels)
    throw ConfigError("summarize: censored fraction needs one entry per pixel");
  const std::size_t W = rec.width();
  ChainStats st;
  st.pixels = rec.pixels;
  st.dim = rec.dim;
  st.samples = rec.length() - burn_in;
  st.ess.assign(W, 0.0);
  st.mean = Field(rec.pixels, rec.dim);
  st.ci_lower = st.ci_upper = st.ci_width_pct = Field(rec.pixels, rec.dim);
  parallel_for(W, threads, [&](std::size_t i) {
    auto xs = rec.coordinate(i, burn_in);
    st.ess[i] = ess(xs);
    double m = 0.0;
    for (double x : xs) m += x;
    st.mean[i] = m / static_cast<double>(xs.size());
    std::sort(xs.begin(), xs.end());
    st.ci_lower[i] = sorted_quantile(xs, 0.025);
    st.ci_upper[i] = sorted_quantile(xs, 0.975);
    const std::size_t d = i % rec.dim;
    st.ci_width_pct[i] = 100.0 * (st.ci_upper[i] - st.ci_lower[i]) / (box.upper[d] - box.lower[d]);
  });

  st.maps.resize(rec.dim);
  for (std::size_t d = 0; d < rec.dim; ++d) {
    auto& m = st.maps[d];
    double lo_sum = 0.0, hi_sum = 0.0, all = 0.0;
    std::size_t lo_n = 0, hi_n = 0;
    for (std::size_t n = 0; n < rec.pixels; ++n) {
      const double w = st.ci_width_pct(n, d);
      all += w;
      if (!censored_fraction.empty()) {
        if (censored_fraction[n] > 0.5) {
          hi_sum += w;
          ++hi_n;
        } else {
          lo_sum += w;
          ++lo_n;
        }
      }
    }
    m.ci_width_mean = all / static_cast<double>(rec.pixels);
    if (lo_n) m.ci_width_low_censor = lo_sum / static_cast<double>(lo_n);
    if (hi_n) m.ci_width_high_censor = hi_sum / static_cast<double>(hi_n);
  }

  if (truth) {
    double err = 0.0, norm = 0.0;
    for (std::size_t d = 0; d < rec.dim; ++d) {
      double e = 0.0, t2 = 0.0, e_lo = 0.0, t2_lo = 0.0;
      for (std::size_t n = 0; n < rec.pixels; ++n) {
        const double r = st.mean(n, d) - (*truth)(n, d);
        const double t = (*truth)(n, d) * (*truth)(n, d);
        e += r * r;
        t2 += t;
        if (!censored_fraction.empty() && censored_fraction[n] < 0.5) {
          e_lo += r * r;
          t2_lo += t;
        }
      }
      auto& m = st.maps[d];
      m.sq_error = e;
      m.mse = e / static_cast<double>(rec.pixels);
      if (t2 > 0.0) m.rsnr_db = rsnr(t2, e);
      if (t2_lo > 0.0) m.rsnr_db_low_censor = rsnr(t2_lo, e_lo);
      err += e;
      norm += t2;
    }
    st.bias = std::sqrt(err);
    st.mse = err / static_cast<double>(W);
    if (norm > 0.0) st.rsnr_db = rsnr(norm, err);
  }
  return st;
}

struct ModeOccupancy {
  std::vector<double> fractions;  // per center
  double unassigned = 0.0;
};

/// Fraction of post-burn-in samples of pixel n whose nearest center lies within radius.
inline ModeOccupancy mode_occupancy(const ChainRecord& rec, const std::vector<std::vector<double>>& centers,
                                    double radius, std::size_t burn_in = 0, std::size_t pixel = 0) {
  if (centers.empty()) throw ConfigError("mode_occupancy: no centers");
  if (burn_in >= rec.length()) throw ConfigError("mode_occupancy: burn-in leaves no samples");
  for (const auto& c : centers)
    if (c.size() != rec.dim) throw ConfigError("mode_occupancy: center dimension mismatch");
  ModeOccupancy occ;
  occ.fractions.assign(centers.size(), 0.0);
  const double r2 = radius * radius;
  for (std::size_t t = burn_in; t < rec.length(); ++t) {
    std::size_t best = 0;
    double best_d2 = kInf;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < rec.dim; ++d) {
        const double r = rec.at(t, pixel, d) - centers[k][d];
        d2 += r * r;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = k;
      }
    }
    if (best_d2 <= r2)
      occ.fractions[best] += 1.0;
    else
      occ.unassigned += 1.0;
  }
  const double n = static_cast<double>(rec.length() - burn_in);
  for (double& f : occ.fractions) f /= n;
  occ.unassigned /= n;
  return occ;
}

/// Modes of a 2D sample: histogram on [lo, hi]^2, Gaussian smoothing of
/// `smooth` bins, every cell climbs to its local maximum; a maximum counts if
/// its basin holds at least min_mass of the sample.
inline std::size_t count_modes_2d(std::span<const double> xs, std::span<const double> ys, std::array<double, 2> lo,
                                  std::array<double, 2> hi, std::size_t bins = 40, double smooth = 1.0,
                                  double min_mass = 0.05) {
  if (xs.size() != ys.size() || xs.empty()) throw DomainError("count_modes_2d: sample size mismatch");
  const std::size_t B = bins;
  std::vector<double> h(B * B, 0.0);
  const auto cell = [&](double v, std::size_t a) {
    const double u = (v - lo[a]) / (hi[a] - lo[a]) * static_cast<double>(B);
    return static_cast<std::size_t>(std::clamp(u, 0.0, static_cast<double>(B) - 1.0));
  };
  for (std::size_t i = 0; i < xs.size(); ++i) h[cell(xs[i], 0) * B + cell(ys[i], 1)] += 1.0;
  const double total = static_cast<double>(xs.size());

  // Separable Gaussian blur; the raw counts are kept for basin masses.
  const int rad = static_cast<int>(std::ceil(3.0 * smooth));
  std::vector<double> ker(2 * rad + 1);
  for (int k = -rad; k <= rad; ++k) ker[k + rad] = smooth > 0.0 ? std::exp(-0.5 * k * k / (smooth * smooth)) : (k == 0);
  std::vector<double> tmp(B * B, 0.0), s(B * B, 0.0);
  const int Bi = static_cast<int>(B);
  for (int i = 0; i < Bi; ++i)
    for (int j = 0; j < Bi; ++j)
      for (int k = -rad; k <= rad; ++k)
        if (j + k >= 0 && j + k < Bi) tmp[i * B + j] += ker[k + rad] * h[i * B + j + k];
  for (int i = 0; i < Bi; ++i)
    for (int j = 0; j < Bi; ++j)
      for (int k = -rad; k <= rad; ++k)
        if (i + k >= 0 && i + k < Bi) s[i * B + j] += ker[k + rad] * tmp[(i + k) * B + j];

  // Steepest ascent over the 8-neighbourhood; ties resolved by index order.
  std::vector<std::size_t> up(B * B);
  for (int i = 0; i < Bi; ++i)
    for (int j = 0; j < Bi; ++j) {
      std::size_t best = i * B + j;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const int a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= Bi || b >= Bi) continue;
          if (s[a * B + b] > s[best]) best = a * B + b;
        }
      up[i * B + j] = best;
    }
  std::vector<double> basin(B * B, 0.0);
  for (std::size_t c = 0; c < B * B; ++c) {
    std::size_t r = c;
    while (up[r] != r) r = up[r];
    basin[r] += h[c];
  }
  std::size_t modes = 0;
  for (std::size_t c = 0; c < B * B; ++c) modes += up[c] == c && basin[c] >= min_mass * total;
  return modes;
}

// ---------------------------------------------------------------------------
// Tables and stats.json

struct SamplerRow {
  std::string label;
  ChainStats stats;
};

/// Bias and per-coordinate ESS, one row per sampler setting.
inline void write_bias_ess_table(std::ostream& os, const std::vector<SamplerRow>& rows) {
  os << "sampler,bias";
  if (!rows.empty())
    for (std::size_t i = 0; i < rows.front().stats.ess.size(); ++i) os << ",ess_" << i + 1;
  os << "\n";
  for (const auto& r : rows) {
    os << r.label << "," << (r.stats.bias ? *r.stats.bias : kInf);
    for (double e : r.stats.ess) os << "," << e;
    os << "\n";
  }
}

/// ESS min / mean / max, one row per sampler setting.
inline void write_ess_range_table(std::ostream& os, const std::vector<SamplerRow>& rows) {
  os << "sampler,ess_min,ess_mean,ess_max\n";
  for (const auto& r : rows)
    os << r.label << "," << r.stats.ess_min() << "," << r.stats.ess_mean() << "," << r.stats.ess_max() << "\n";
}

/// Per-map MSE, R-SNR and mean CI widths split by censorship.
inline void write_map_table(std::ostream& os, const ChainStats& st) {
  const auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
  os << "map,mse,rsnr_db,rsnr_db_censor_lt50,ci_pct_censor_le50,ci_pct_censor_gt50,ci_pct_overall\n";
  for (std::size_t d = 0; d < st.maps.size(); ++d) {
    const auto& m = st.maps[d];
    os << d + 1 << "," << m.mse << "," << opt(m.rsnr_db) << "," << opt(m.rsnr_db_low_censor) << ","
       << opt(m.ci_width_low_censor) << ","
       << opt(m.ci_width_high_censor) << "," << m.ci_width_mean << "\n";
  }
}

inline nlohmann::json to_json(const ChainStats& st) {
  using nlohmann::json;
  const auto opt = [](const std::optional<double>& v) { return v && std::isfinite(*v) ? json(*v) : json(); };
  json j;
  j["pixels"] = st.pixels;
  j["dim"] = st.dim;
  j["samples"] = st.samples;
  j["ess"] = st.ess;
  j["ess_min"] = st.ess_min();
  j["ess_mean"] = st.ess_mean();
  j["ess_max"] = st.ess_max();
  j["mean"] = std::vector<double>(st.mean.flat().begin(), st.mean.flat().end());
  j["ci_lower"] = std::vector<double>(st.ci_lower.flat().begin(), st.ci_lower.flat().end());
  j["ci_upper"] = std::vector<double>(st.ci_upper.flat().begin(), st.ci_upper.flat().end());
  j["bias"] = opt(st.bias);
  j["mse"] = opt(st.mse);
  j["rsnr_db"] = opt(st.rsnr_db);
  j["maps"] = json::array();
  for (const auto& m : st.maps)
    j["maps"].push_back({{"mse", m.mse},
                         {"rsnr_db", opt(m.rsnr_db)},
                         {"rsnr_db_censor_lt50", opt(m.rsnr_db_low_censor)},
                         {"ci_pct_overall", m.ci_width_mean},
                         {"ci_pct_censor_le50", opt(m.ci_width_low_censor)},
                         {"ci_pct_censor_gt50", opt(m.ci_width_high_censor)}});
  return j;
}

}  // namespace mixnoise
