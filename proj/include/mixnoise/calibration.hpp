#pragma once

// Per-channel choice of the blend thresholds (a0, a1): grid search minimizing
// the expected KS distance between samples of the exact noise model and the
// surrogate CDF, weighted by a KDE of z = log f over the prior.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/likelihood.hpp"
#include "mixnoise/observations.hpp"
#include "mixnoise/parallel.hpp"

namespace mixnoise {

/// Right-continuous step CDF of a sorted sample.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> sorted) : xs_(std::move(sorted)) {
    if (xs_.empty()) throw DomainError("empirical_cdf: empty sample");
    if (!std::is_sorted(xs_.begin(), xs_.end())) throw DomainError("empirical_cdf: samples must be sorted");
  }
  double operator()(double y) const {
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), y);
    return static_cast<double>(it - xs_.begin()) / static_cast<double>(xs_.size());
  }
  std::span<const double> samples() const { return xs_; }

 private:
  std::vector<double> xs_;
};

inline EmpiricalCdf empirical_cdf(std::vector<double> sorted) { return EmpiricalCdf(std::move(sorted)); }

/// Tabulated CDF of the normalized blend N(f, s_a2)^(1-lambda) * logN(z+m, s_m2)^lambda
/// (uncensored part). Pure additive blends are tabulated in y over f +- 8 sd;
/// anything with a lognormal factor lives on y > 0 and is tabulated in log y.
class SurrogateCdf {
 public:
  static constexpr std::size_t kMinIntervals = 4096;
  static constexpr std::size_t kMaxIntervals = std::size_t{1} << 16;
  static constexpr double kStability = 1e-4;

  SurrogateCdf(double z, BlendPair a, const NoiseModel& noise) {
    noise.validate();
    const double f = std::exp(z);
    if (!std::isfinite(f) || !(f > 0.0)) throw DomainError("surrogate_cdf: exp(z) must be positive and finite");
    lambda_ = blend_weight(z, a.a0, a.a1).lambda;
    const AdditiveMoments am = additive_moments(f, noise);
    const MultiplicativeMoments mm = multiplicative_moments(f, noise);
    f_ = f;
    sa_ = std::sqrt(am.s_a2);
    mu_ = z + mm.m_m;
    sl_ = std::sqrt(mm.s_m2);
    log_space_ = lambda_ > 0.0;
    if (log_space_) {
      lo_ = mu_ - 8.0 * sl_;
      hi_ = mu_ + 8.0 * sl_;
      if (lambda_ < 1.0) {
        // The Gaussian factor flattens below f - 8 sd; the log-space Jacobian then decays like y.
        const double glo = f - 8.0 * sa_;
        lo_ = std::min(lo_, glo > 0.0 ? std::log(glo) : std::log(f + 8.0 * sa_) - 40.0);
        hi_ = std::max(hi_, std::log(f + 8.0 * sa_));
      }
    } else {
      lo_ = f - 8.0 * sa_;
      hi_ = f + 8.0 * sa_;
    }
    tabulate();
  }

  double lambda() const { return lambda_; }
  std::size_t intervals() const { return pdf_.size() - 1; }

  double operator()(double y) const {
    double x = y;
    if (log_space_) {
      if (!(y > 0.0)) return 0.0;
      x = std::log(y);
    }
    if (x <= lo_) return 0.0;
    if (x >= hi_) return 1.0;
    const double pos = (x - lo_) / h_;
    const std::size_t i = std::min(static_cast<std::size_t>(pos), pdf_.size() - 2);
    const double r = x - (lo_ + static_cast<double>(i) * h_);
    // Exact integral of the piecewise-linear density used by the trapezoid rule.
    const double v = cdf_[i] + r * (pdf_[i] + 0.5 * (pdf_[i + 1] - pdf_[i]) * r / h_);
    return std::clamp(v, 0.0, 1.0);
  }

 private:
  // Unnormalized log density in the tabulation variable.
  double log_density(double x) const {
    const double y = log_space_ ? std::exp(x) : x;
    const double ra = (y - f_) / sa_;
    const double la = -0.5 * ra * ra - std::log(sa_) - kLogSqrt2Pi;
    if (!log_space_) return la;
    // Lognormal density in log y is Gaussian; the additive factor picks up the Jacobian y.
    const double rl = (x - mu_) / sl_;
    const double lm = -0.5 * rl * rl - std::log(sl_) - kLogSqrt2Pi;
    return (1.0 - lambda_) * (la + x) + lambda_ * lm;
  }

  void tabulate() {
    for (std::size_t n = 2 * kMinIntervals; n <= kMaxIntervals; n *= 2) {
      std::vector<double> lp(n + 1);
      const double h = (hi_ - lo_) / static_cast<double>(n);
      for (std::size_t i = 0; i <= n; ++i) lp[i] = log_density(lo_ + static_cast<double>(i) * h);
      const double peak = *std::max_element(lp.begin(), lp.end());
      if (!std::isfinite(peak)) throw NumericalError("surrogate_cdf: density is not finite on the grid");
      std::vector<double> p(n + 1);
      for (std::size_t i = 0; i <= n; ++i) p[i] = std::exp(lp[i] - peak);
      double fine = 0.0, coarse = 0.0;
      for (std::size_t i = 0; i < n; ++i) fine += 0.5 * h * (p[i] + p[i + 1]);
      for (std::size_t i = 0; i + 2 <= n; i += 2) coarse += h * (p[i] + p[i + 2]);
      if (std::abs(fine - coarse) <= kStability * fine) {
        h_ = h;
        pdf_.resize(n + 1);
        cdf_.assign(n + 1, 0.0);
        for (std::size_t i = 0; i <= n; ++i) pdf_[i] = p[i] / fine;
        for (std::size_t i = 0; i < n; ++i) cdf_[i + 1] = cdf_[i] + 0.5 * h * (pdf_[i] + pdf_[i + 1]);
        return;
      }
    }
    throw NumericalError("surrogate_cdf: quadrature did not converge at 2^16 points");
  }

  double lambda_ = 0.0, f_ = 0.0, sa_ = 0.0, mu_ = 0.0, sl_ = 0.0;
  bool log_space_ = false;
  double lo_ = 0.0, hi_ = 0.0, h_ = 0.0;
  std::vector<double> pdf_, cdf_;
};

inline double surrogate_cdf(double y, double z, BlendPair a, const NoiseModel& noise) {
  return SurrogateCdf(z, a, noise)(y);
}

/// sup_y |F_M(y) - F(y)| for a sorted sample.
template <class Cdf>
double ks_distance_sorted(std::span<const double> sorted, const Cdf& cdf) {
  const double m = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
  }
  return d;
}

/// M sorted draws of the exact uncensored model eps_m e^z + eps_a.
inline std::vector<double> exact_model_samples(double z, const NoiseModel& noise, std::size_t M, Engine& rng) {
  NoiseModel un = noise;
  un.omega = -kInf;
  const double f = std::exp(z);
  std::vector<double> ys(M);
  for (auto& y : ys) y = draw_observation(f, un, rng).first;
  std::sort(ys.begin(), ys.end());
  return ys;
}

inline double ks_distance_at_z(double z, BlendPair a, const NoiseModel& noise, std::size_t M, Engine& rng) {
  if (M == 0) throw ConfigError("ks_distance_at_z: M must be positive");
  const auto ys = exact_model_samples(z, noise, M, rng);
  return ks_distance_sorted(ys, SurrogateCdf(z, a, noise));
}

/// Silverman rule of thumb 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> xs) {
  if (xs.size() < 2) throw DomainError("silverman_bandwidth: need at least two samples");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double mean = 0.0;
  for (double x : s) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : s) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  const auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double r = pos - static_cast<double>(i);
    return i + 1 < s.size() ? s[i] * (1.0 - r) + s[i + 1] * r : s[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) spread = 1.0;
  return 0.9 * spread * std::pow(n, -0.2);
}

/// Gaussian KDE evaluated on a grid and normalized to weights summing to 1.
inline std::vector<double> kde_weights(std::span<const double> samples, std::span<const double> grid,
                                       double bandwidth = 0.0) {
  const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(samples);
  std::vector<double> w(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (double x : samples) {
      const double r = (grid[g] - x) / h;
      w[g] += std::exp(-0.5 * r * r);
    }
  double s = 0.0;
  for (double x : w) s += x;
  if (!(s > 0.0)) throw NumericalError("kde_weights: density vanishes on the grid");
  for (double& x : w) x /= s;
  return w;
}

struct CalibrationConfig {
  std::size_t M = 20000;
  std::size_t S = 50;
  std::size_t grid_resolution = 20;
  std::vector<double> z_grid;
  std::vector<double> z_density;
  std::vector<BlendPair> a_grid;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (M < 1000) throw ConfigError("calibration: M must be >= 1000");
    if (S < 10) throw ConfigError("calibration: S must be >= 10");
    if (z_grid.size() != S || z_density.size() != S) throw ConfigError("calibration: z grid and density need S entries");
    double s = 0.0;
    for (double w : z_density) {
      if (!(w >= 0.0)) throw ConfigError("calibration: density weights must be nonnegative");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("calibration: density weights must sum to 1");
    if (a_grid.empty()) throw ConfigError("calibration: empty a grid");
    for (const auto& p : a_grid)
      if (!(p.a0 < p.a1)) throw ConfigError("calibration: grid pairs need a0 < a1");
  }
};

/// Threshold values covering [zmin, zmax] with half a step of slack outside
/// both ends, so the grid holds a pure-additive pair (a0 > zmax) and a
/// pure-multiplicative pair (a1 < zmin).
inline std::vector<double> threshold_values(double zmin, double zmax, std::size_t G) {
  if (G < 5) throw ConfigError("calibration: grid resolution must be >= 5");
  if (!(zmax > zmin)) throw ConfigError("calibration: empty z range");
  const double h = (zmax - zmin) / static_cast<double>(G - 4);
  std::vector<double> v(G);
  for (std::size_t k = 0; k < G; ++k) v[k] = zmin - 1.5 * h + static_cast<double>(k) * h;
  return v;
}

inline std::vector<BlendPair> threshold_grid(double zmin, double zmax, std::size_t G) {
  const auto v = threshold_values(zmin, zmax, G);
  std::vector<BlendPair> out;
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t j = i + 1; j < G; ++j) out.push_back({v[i], v[j]});
  return out;
}

/// Config from prior draws of z: S-point grid over their range, KDE weights,
/// G x G threshold grid.
inline CalibrationConfig make_calibration_config(std::span<const double> z_samples, std::size_t M, std::size_t S,
                                                 std::size_t G, std::uint64_t seed) {
  if (z_samples.size() < 2) throw ConfigError("calibration: need z samples");
  if (S < 2) throw ConfigError("calibration: S must be >= 2");
  const auto [lo, hi] = std::minmax_element(z_samples.begin(), z_samples.end());
  CalibrationConfig c;
  c.M = M;
  c.S = S;
  c.grid_resolution = G;
  c.seed = seed;
  c.z_grid.resize(S);
  for (std::size_t s = 0; s < S; ++s)
    c.z_grid[s] = *lo + (*hi - *lo) * static_cast<double>(s) / static_cast<double>(S - 1);
  c.z_density = kde_weights(z_samples, c.z_grid);
  c.a_grid = threshold_grid(*lo, *hi, G);
  return c;
}

/// Exact-model samples shared by every grid cell (common random numbers):
/// bin s draws from stream (seed, s).
inline std::vector<std::vector<double>> calibration_samples(const CalibrationConfig& cfg, const NoiseModel& noise,
                                                            std::uint64_t seed) {
  std::vector<std::vector<double>> out(cfg.z_grid.size());
  parallel_for(out.size(), cfg.threads, [&](std::size_t s) {
    Engine rng = keyed_engine(seed, s, Stream::kCalibration);
    out[s] = exact_model_samples(cfg.z_grid[s], noise, cfg.M, rng);
  });
  return out;
}

inline double expected_ks(BlendPair a, const CalibrationConfig& cfg, const NoiseModel& noise,
                          const std::vector<std::vector<double>>& samples) {
  double phi = 0.0;
  for (std::size_t s = 0; s < cfg.z_grid.size(); ++s) {
    if (cfg.z_density[s] == 0.0) continue;
    phi += cfg.z_density[s] * ks_distance_sorted(samples[s], SurrogateCdf(cfg.z_grid[s], a, noise));
  }
  return phi;
}

inline double expected_ks(BlendPair a, const CalibrationConfig& cfg, const NoiseModel& noise, std::uint64_t seed) {
  return expected_ks(a, cfg, noise, calibration_samples(cfg, noise, seed));
}

/// Standard error of the expected-KS estimator at a, from independent replicates.
inline double expected_ks_se(BlendPair a, const CalibrationConfig& cfg, const NoiseModel& noise,
                             std::uint64_t seed, std::size_t replicates) {
  if (replicates < 2) throw ConfigError("expected_ks_se: need at least two replicates");
  std::vector<double> phis(replicates);
  for (std::size_t r = 0; r < replicates; ++r) phis[r] = expected_ks(a, cfg, noise, splitmix64(seed + 0x5e + r));
  double m = 0.0;
  for (double p : phis) m += p;
  m /= static_cast<double>(replicates);
  double v = 0.0;
  for (double p : phis) v += (p - m) * (p - m);
  return std::sqrt(v / static_cast<double>(replicates - 1));
}

struct CalibrationResult {
  BlendPair a;
  double phi = 0.0;
  std::vector<double> phi_grid;  // one entry per a_grid cell
};

/// Grid argmin of expected KS; ties go to the narrower transition, then lexicographic (a0, a1).
inline CalibrationResult calibrate_channel(const CalibrationConfig& cfg, const NoiseModel& noise) {
  cfg.validate();
  noise.validate();
  const auto samples = calibration_samples(cfg, noise, cfg.seed);
  CalibrationResult r;
  r.phi_grid.assign(cfg.a_grid.size(), 0.0);
  parallel_for(cfg.a_grid.size(), cfg.threads,
               [&](std::size_t c) { r.phi_grid[c] = expected_ks(cfg.a_grid[c], cfg, noise, samples); });
  std::size_t best = 0;
  for (std::size_t c = 1; c < cfg.a_grid.size(); ++c) {
    const auto& p = cfg.a_grid[c];
    const auto& q = cfg.a_grid[best];
    const double wp = p.a1 - p.a0, wq = q.a1 - q.a0;
    if (r.phi_grid[c] < r.phi_grid[best] ||
        (r.phi_grid[c] == r.phi_grid[best] &&
         (wp < wq || (wp == wq && (p.a0 < q.a0 || (p.a0 == q.a0 && p.a1 < q.a1))))))
      best = c;
  }
  r.a = cfg.a_grid[best];
  r.phi = r.phi_grid[best];
  return r;
}

/// z at which the additive and multiplicative noise variances are equal:
/// sigma_a^2 = f^2 (exp(sigma_m^2) - 1).
inline double equal_variance_z(const NoiseModel& noise) {
  return std::log(noise.sigma_a) - 0.5 * std::log(std::expm1(noise.sigma_m * noise.sigma_m));
}

}  // namespace mixnoise
