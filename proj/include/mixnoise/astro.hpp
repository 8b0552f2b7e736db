#pragma once

// Multispectral image inverse problem: N pixels on a grid, D parameters per
// pixel, L channels given by polynomial surrogates of log f, observed under
// mixed noise with censorship, with a smooth-box and Laplacian prior.

#include <cmath>
#include <limits>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"
#include "mixnoise/likelihood.hpp"
#include "mixnoise/observations.hpp"
#include "mixnoise/parallel.hpp"
#include "mixnoise/priors.hpp"
#include "mixnoise/targets.hpp"

namespace mixnoise {

/// Random degree-6 surrogates whose exp spans roughly [10^lo, 10^hi] over the
/// box. Coefficients of degree k >= 2 are drawn with scale nonlinearity^(k-1)
/// relative to the linear part; each channel is then mapped affinely so that
/// its probe-grid minimum and maximum hit the decade targets.
/// line_correlation = r mixes a direction shared by all channels into the
/// linear part, r u + sqrt(1 - r^2) g_l, so that lines brighten together.
inline PolynomialSurrogate make_synthetic_surrogate(std::size_t dim, std::size_t channels,
                                                    std::pair<double, double> decade_span, const ValidityBox& box,
                                                    std::uint64_t seed, double nonlinearity = 0.25,
                                                    int degree = PolynomialSurrogate::kMaxDegree,
                                                    double line_correlation = 0.0) {
  if (dim > 10) throw ConfigError("synthetic surrogate: dimension must be <= 10");
  if (box.dim() != dim) throw ConfigError("synthetic surrogate: box dimension mismatch");
  if (!(decade_span.first < decade_span.second)) throw ConfigError("synthetic surrogate: empty decade span");
  if (!(line_correlation >= 0.0 && line_correlation <= 1.0))
    throw ConfigError("synthetic surrogate: line correlation must be in [0, 1]");
  PolynomialSurrogate p(dim, channels, degree);
  Engine rng = keyed_engine(seed, 0, Stream::kLayout);
  std::vector<double> shared(dim, 0.0);
  if (line_correlation > 0.0)
    for (auto& u : shared) u = std_normal(rng);
  const double own = std::sqrt(1.0 - line_correlation * line_correlation);
  for (std::size_t l = 0; l < channels; ++l)
    for (std::size_t k = 1; k < p.terms(); ++k) {
      int total = 0;
      std::size_t axis = 0;
      for (std::size_t d = 0; d < dim; ++d) {
        total += p.exponents(k)[d];
        if (p.exponents(k)[d] > 0) axis = d;
      }
      const double g = std_normal(rng) * std::pow(nonlinearity, total - 1);
      p.coefficient(l, k) = (total == 1 && line_correlation > 0.0) ? line_correlation * shared[axis] + own * g : g;
    }

  // Probe set: a tensor grid (which includes the box corners) plus uniform
  // interior points, so that extremes between grid nodes are seen too.
  const std::size_t per_dim = dim <= 4 ? 9 : (dim <= 6 ? 5 : 3);
  std::size_t grid = 1;
  for (std::size_t d = 0; d < dim; ++d) grid *= per_dim;
  const std::size_t interior = 50000;
  std::vector<double> lo(channels, kInf), hi(channels, -kInf), z(channels), x(dim);
  for (std::size_t idx = 0; idx < grid + interior; ++idx) {
    std::size_t r = idx;
    for (std::size_t d = 0; d < dim; ++d) {
      const double t = idx < grid ? static_cast<double>(r % per_dim) / static_cast<double>(per_dim - 1) : uniform01(rng);
      x[d] = box.lower[d] + t * box.width(d);
      r /= per_dim;
    }
    p.evaluate_values(x, z);
    for (std::size_t l = 0; l < channels; ++l) {
      lo[l] = std::min(lo[l], z[l]);
      hi[l] = std::max(hi[l], z[l]);
    }
  }
  const double target_lo = decade_span.first * std::numbers::ln10;
  const double target_hi = decade_span.second * std::numbers::ln10;
  for (std::size_t l = 0; l < channels; ++l) {
    const double b = (hi[l] > lo[l]) ? (target_hi - target_lo) / (hi[l] - lo[l]) : 0.0;
    for (std::size_t k = 1; k < p.terms(); ++k) p.coefficient(l, k) *= b;
    p.coefficient(l, 0) = target_lo - b * lo[l];
  }
  return p;
}

/// Sums of Gaussian bumps on the pixel grid, one map per coordinate 1..D-1,
/// each rescaled to [0, 1]. Coordinate 0 stays 0.
inline Field smooth_bump_maps(std::size_t rows, std::size_t cols, std::size_t D, std::uint64_t seed, int bumps = 4) {
  const std::size_t N = rows * cols;
  Field t(N, D, 0.0);
  Engine rng = keyed_engine(seed, 1, Stream::kLayout);
  std::uniform_real_distribution<double> pr(0.0, static_cast<double>(rows)), pc(0.0, static_cast<double>(cols)),
      amp(-1.0, 1.0), width(0.2, 0.5);
  const double scale = static_cast<double>(std::max(rows, cols));
  for (std::size_t d = 1; d < D; ++d) {
    std::vector<double> m(N, 0.0);
    for (int b = 0; b < bumps; ++b) {
      const double r0 = pr(rng), c0 = pc(rng), a = amp(rng), w = width(rng) * scale;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          const double dr = static_cast<double>(r) - r0, dc = static_cast<double>(c) - c0;
          m[r * cols + c] += a * std::exp(-(dr * dr + dc * dc) / (2.0 * w * w));
        }
    }
    const auto [mn, mx] = std::minmax_element(m.begin(), m.end());
    const double span = *mx - *mn;
    for (std::size_t n = 0; n < N; ++n) t(n, d) = span > 0.0 ? (m[n] - *mn) / span : 0.5;
  }
  return t;
}

/// Ground truth maps: map 0 is constant 0; the others are sums of Gaussian
/// bumps rescaled into [l + m w, u - m w] with m = margin.
inline Field make_smooth_truth(std::size_t rows, std::size_t cols, const ValidityBox& box, std::uint64_t seed,
                               double margin = 0.15, int bumps = 4) {
  Field t = smooth_bump_maps(rows, cols, box.dim(), seed, bumps);
  for (std::size_t d = 1; d < box.dim(); ++d) {
    const double lo = box.lower[d] + margin * box.width(d), hi = box.upper[d] - margin * box.width(d);
    for (std::size_t n = 0; n < t.pixels(); ++n) t(n, d) = lo + t(n, d) * (hi - lo);
  }
  return t;
}

struct PlacedTruth {
  Field truth;
  ValidityBox region;     // sub-box holding maps 1..D-1
  std::size_t heavy = 0;  // pixels with more than half the channels below omega (noise free)
};

/// Smooth truth maps squeezed into a sub-box of half-width `half_width`
/// (fraction of each box width) inside the margin-shrunk box. The centre is
/// picked on a grid of `centres` per coordinate as the one leaving the fewest
/// pixels with more than half their noise-free channels below omega; first
/// candidate wins ties.
inline PlacedTruth place_smooth_truth(std::size_t rows, std::size_t cols, const PolynomialSurrogate& fm,
                                      const ValidityBox& box, double omega, double half_width, std::uint64_t seed,
                                      double margin = 0.15, int centres = 9) {
  const std::size_t D = box.dim(), L = fm.channels();
  if (fm.dim() != D) throw ConfigError("truth placement: surrogate/box dimension mismatch");
  if (!(half_width > 0.0 && half_width <= 0.5 - margin)) throw ConfigError("truth placement: half width out of range");
  if (!(omega > 0.0)) throw DomainError("truth placement: omega must be positive");
  const Field unit = smooth_bump_maps(rows, cols, D, seed);
  const double log_omega = std::log(omega);
  std::size_t cells = 1;
  for (std::size_t d = 1; d < D; ++d) cells *= static_cast<std::size_t>(centres);

  PlacedTruth best;
  best.heavy = std::numeric_limits<std::size_t>::max();
  ValidityBox sub = box;
  Field t = unit;
  std::vector<double> z(L);
  for (std::size_t ci = 0; ci < cells; ++ci) {
    std::size_t r = ci;
    for (std::size_t d = 1; d < D; ++d) {
      const double h = half_width * box.width(d), lo = box.lower[d] + margin * box.width(d) + h,
                   hi = box.upper[d] - margin * box.width(d) - h;
      const double c = lo + (centres > 1 ? static_cast<double>(r % centres) / (centres - 1) : 0.5) * (hi - lo);
      sub.lower[d] = c - h;
      sub.upper[d] = c + h;
      r /= static_cast<std::size_t>(centres);
    }
    std::size_t heavy = 0;
    for (std::size_t n = 0; n < t.pixels() && heavy < best.heavy; ++n) {
      for (std::size_t d = 1; d < D; ++d) t(n, d) = sub.lower[d] + unit(n, d) * sub.width(d);
      fm.evaluate_values(t.row(n), z);
      std::size_t dark = 0;
      for (double v : z) dark += v < log_omega;
      heavy += 2 * dark > L;
    }
    if (heavy < best.heavy) {
      best.heavy = heavy;
      best.region = sub;
    }
  }
  best.truth = unit;
  for (std::size_t d = 1; d < D; ++d)
    for (std::size_t n = 0; n < unit.pixels(); ++n)
      best.truth(n, d) = best.region.lower[d] + unit(n, d) * best.region.width(d);
  return best;
}

class AstroPosterior {
 public:
  AstroPosterior(ObservationSet obs, PolynomialSurrogate fm, LikelihoodBlend blend, PriorConfig prior,
                 ValidityBox box)
      : obs_(std::move(obs)), fm_(std::move(fm)), blend_(std::move(blend)), prior_(std::move(prior)),
        box_(std::move(box)) {
    obs_.noise.validate();
    if (obs_.channels != fm_.channels()) throw ConfigError("astro: observation/surrogate channel mismatch");
    if (box_.dim() != fm_.dim()) throw ConfigError("astro: box/surrogate dimension mismatch");
    blend_.validate(fm_.channels());
    prior_.validate(obs_.pixels, fm_.dim());
  }

  std::size_t pixels() const { return obs_.pixels; }
  std::size_t dim() const { return fm_.dim(); }
  const NeighborGraph& graph() const { return prior_.graph; }
  const ObservationSet& observations() const { return obs_; }
  const PolynomialSurrogate& surrogate() const { return fm_; }
  const LikelihoodBlend& blend() const { return blend_; }
  const PriorConfig& prior() const { return prior_; }
  const ValidityBox& box() const { return box_; }

  void set_threads(std::size_t t) { threads_ = std::max<std::size_t>(t, 1); }
  /// Use central differences of the analytic gradient for the likelihood Hessian diagonal.
  void set_finite_difference_hessian(bool on) { fd_hessian_ = on; }

  /// log-likelihood of pixel n at x, value only.
  double pixel_log_likelihood(std::size_t n, std::span<const double> x) const {
    thread_local std::vector<double> z;
    z.resize(fm_.channels());
    fm_.evaluate_values(x, z);
    const auto y = obs_.y_row(n);
    const auto c = obs_.c_row(n);
    double s = 0.0;
    for (std::size_t l = 0; l < z.size(); ++l) {
      s += channel_log_likelihood_value(y[l], c[l] != 0, z[l], obs_.noise, blend_.a[l]);
      if (s == -kInf) return s;
    }
    return s;
  }

  /// log-likelihood of pixel n at x with gradient and diagonal Hessian (overwritten).
  double pixel_log_likelihood(std::size_t n, std::span<const double> x, std::span<double> grad,
                              std::span<double> hess) const {
    const LikelihoodTerm t = log_likelihood_total(x, obs_.y_row(n), obs_.c_row(n), fm_, obs_.noise, blend_);
    std::copy(t.grad.begin(), t.grad.end(), grad.begin());
    if (fd_hessian_ && t.finite) {
      finite_difference_hessian_diag(
          x,
          [&](std::span<const double> p, std::span<double> out) {
            const LikelihoodTerm u = log_likelihood_total(p, obs_.y_row(n), obs_.c_row(n), fm_, obs_.noise, blend_);
            std::copy(u.grad.begin(), u.grad.end(), out.begin());
          },
          hess);
    } else {
      std::copy(t.hess_diag.begin(), t.hess_diag.end(), hess.begin());
    }
    return t.value;
  }

  double neg_log_posterior(const Field& th, Field* grad, Field* hess) const {
    const std::size_t N = pixels(), D = dim();
    std::vector<double> ll(N);
    Field gl(N, D), hl(N, D);
    const bool derivs = grad || hess;
    parallel_for(N, threads_, [&](std::size_t n) {
      ll[n] = derivs ? pixel_log_likelihood(n, th.row(n), gl.row(n), hl.row(n)) : pixel_log_likelihood(n, th.row(n));
    });
    const FieldTerm lp = log_prior(th, prior_, box_);
    double g = -lp.value;
    for (double v : ll) g -= v;
    if (grad)
      for (std::size_t i = 0; i < th.size(); ++i) (*grad)[i] = -gl[i] - lp.grad[i];
    if (hess)
      for (std::size_t i = 0; i < th.size(); ++i) (*hess)[i] = -hl[i] - lp.hess_diag[i];
    return g;
  }

  /// Local spatial terms of pixel n at x: 2 sum_d tau_d sum_{i in V_n} (x_d - theta_id)^2.
  double local_laplacian(const Field& th, std::size_t n, std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t d = 0; d < dim(); ++d) {
      if (prior_.tau[d] == 0.0) continue;
      double acc = 0.0;
      for (std::size_t i : prior_.graph.neighbors(n)) {
        const double diff = x[d] - th(i, d);
        acc += diff * diff;
      }
      s += 2.0 * prior_.tau[d] * acc;
    }
    return s;
  }

  double conditional_log_density(const Field& th, std::size_t n, std::span<const double> x) const {
    const double ll = pixel_log_likelihood(n, x);
    if (ll == -kInf) return ll;
    return ll - prior_.delta * quartic_penalty_value(x, box_) - local_laplacian(th, n, x);
  }

  void pixel_gradient(const Field& th, std::size_t n, std::span<double> out) const {
    const std::size_t D = dim();
    std::vector<double> g(D), h(D), qg(D, 0.0), qh(D, 0.0);
    pixel_log_likelihood(n, th.row(n), g, h);
    accumulate_quartic(th.row(n), box_, 1.0, qg, qh);
    for (std::size_t d = 0; d < D; ++d) {
      double lap = 0.0;
      for (std::size_t i : prior_.graph.neighbors(n)) lap += th(n, d) - th(i, d);
      out[d] = -g[d] + prior_.delta * qg[d] + 4.0 * prior_.tau[d] * lap;
    }
  }

 private:
  ObservationSet obs_;
  PolynomialSurrogate fm_;
  LikelihoodBlend blend_;
  PriorConfig prior_;
  ValidityBox box_;
  std::size_t threads_ = 1;
  bool fd_hessian_ = false;
};

static_assert(PosteriorModel<AstroPosterior>);

/// Signal-to-noise ratio 10 log10(f / sigma_a) range over all pixels and channels.
template <ForwardModel FM>
std::pair<double, double> snr_range_db(const Field& theta, const FM& fm, double sigma_a) {
  std::vector<double> z(fm.channels());
  double lo = kInf, hi = -kInf;
  for (std::size_t n = 0; n < theta.pixels(); ++n) {
    fm.evaluate_values(theta.row(n), z);
    for (double v : z) {
      const double db = 10.0 * (v - std::log(sigma_a)) / std::numbers::ln10;
      lo = std::min(lo, db);
      hi = std::max(hi, db);
    }
  }
  return {lo, hi};
}

}  // namespace mixnoise
