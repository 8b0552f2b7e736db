#pragma once

// Surrogate likelihood for censored observations under mixed additive and
// multiplicative noise. Each channel blends a moment-matched Gaussian
// (additive regime) and a moment-matched lognormal (multiplicative regime)
// geometrically with a C2 weight lambda(z), z = log f(theta).

#include <cmath>
#include <span>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"

namespace mixnoise {

struct NoiseModel {
  double sigma_a = 1.0;  // additive std, observation units
  double sigma_m = 0.1;  // lognormal log-scale std
  double omega = -kInf;  // censorship level

  void validate() const {
    if (!(sigma_a > 0.0) || !(sigma_m > 0.0)) throw ConfigError("noise: sigma_a and sigma_m must be positive");
    if (std::isnan(omega) || omega == kInf) throw ConfigError("noise: omega must be finite or -inf");
  }
  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

/// Transition thresholds of lambda, in log-forward-model space.
struct BlendPair {
  double a0 = 0.0;
  double a1 = 1.0;
  friend bool operator==(const BlendPair&, const BlendPair&) = default;
};

struct LikelihoodBlend {
  std::vector<BlendPair> a;

  void validate(std::size_t channels) const {
    if (a.size() != channels) throw ConfigError("blend: one (a0, a1) pair per channel required");
    for (const auto& p : a)
      if (!(p.a0 < p.a1)) throw ConfigError("blend: a0 < a1 required");
  }
  friend bool operator==(const LikelihoodBlend&, const LikelihoodBlend&) = default;
};

struct AdditiveMoments {
  double m_a;
  double s_a2;
};
struct MultiplicativeMoments {
  double m_m;
  double s_m2;
};

inline AdditiveMoments additive_moments(double f, const NoiseModel& noise) {
  if (!std::isfinite(f)) throw DomainError("additive_moments: forward value must be finite");
  const double sm2 = noise.sigma_m * noise.sigma_m;
  return {0.0, f * f * std::expm1(sm2) + noise.sigma_a * noise.sigma_a};
}

inline MultiplicativeMoments multiplicative_moments(double f, const NoiseModel& noise) {
  if (!(f > 0.0) || !std::isfinite(f)) throw DomainError("multiplicative_moments: forward value must be positive");
  const double sm2 = noise.sigma_m * noise.sigma_m;
  const double ratio = noise.sigma_a * noise.sigma_a / (f * f * std::exp(sm2));
  const double m = -0.5 * (sm2 + std::log1p(ratio));
  return {m, -2.0 * m};
}

/// Quintic smoothstep u^3 (6u^2 - 15u + 10).
inline double smoothstep(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("smoothstep: argument outside [0, 1]");
  return u * u * u * (u * (6.0 * u - 15.0) + 10.0);
}

struct BlendWeight {
  double lambda;
  double dlambda_dz;
  double d2lambda_dz2;
};

inline BlendWeight blend_weight(double z, double a0, double a1) {
  if (!(a0 < a1)) throw ConfigError("blend_weight: a0 < a1 required");
  if (z <= a0) return {0.0, 0.0, 0.0};
  if (z >= a1) return {1.0, 0.0, 0.0};
  const double w = a1 - a0;
  const double u = (z - a0) / w;
  const double um1 = u - 1.0;
  return {smoothstep(u), 30.0 * u * u * um1 * um1 / w, 60.0 * u * um1 * (2.0 * u - 1.0) / (w * w)};
}

/// Channel log-likelihood as a function of z = log f, with dz and dz^2 derivatives.
struct ChannelEval {
  Jet value;  // in z
  double lambda = 0.0;
  bool finite = true;
};

namespace detail {

inline Jet log_additive(double y, bool censored, Jet z, const NoiseModel& noise) {
  const Jet f = exp(z);
  const Jet s = exp(2.0 * z) * std::expm1(noise.sigma_m * noise.sigma_m) + noise.sigma_a * noise.sigma_a;
  if (!(s.v > 0.0)) throw NumericalError("additive variance is not positive");
  if (censored) return log_ndtr((noise.omega - f) / sqrt(s));
  const Jet r = y - f;
  return -kLogSqrt2Pi - 0.5 * log(s) - square(r) / (2.0 * s);
}

// Sets finite=false when the bound (y, or omega if censored) is not positive.
inline Jet log_multiplicative(double y, bool censored, Jet z, const NoiseModel& noise, bool& finite) {
  const double sm2 = noise.sigma_m * noise.sigma_m;
  const double c = noise.sigma_a * noise.sigma_a / std::exp(sm2);
  const Jet m = -0.5 * (log1p(c * exp(-2.0 * z)) + sm2);
  const Jet s = -2.0 * m;
  if (!(s.v > 0.0)) throw NumericalError("multiplicative variance is not positive");
  const double bound = censored ? noise.omega : y;
  if (!(bound > 0.0)) {
    finite = false;
    return Jet::constant(-kInf);
  }
  const double ly = std::log(bound);
  if (censored) return log_ndtr((ly - z - m) / sqrt(s));
  return -ly - kLogSqrt2Pi - 0.5 * log(s) - square(ly - z - m) / (2.0 * s);
}

}  // namespace detail

inline ChannelEval channel_log_likelihood(double y, bool censored, double z, const NoiseModel& noise,
                                          BlendPair a) {
  const auto bw = blend_weight(z, a.a0, a.a1);
  const Jet zj = Jet::variable(z);
  ChannelEval out;
  out.lambda = bw.lambda;
  if (bw.lambda == 0.0) {
    out.value = detail::log_additive(y, censored, zj, noise);
    return out;
  }
  const Jet lm = detail::log_multiplicative(y, censored, zj, noise, out.finite);
  if (!out.finite) {
    out.value = Jet::constant(-kInf);
    return out;
  }
  if (bw.lambda == 1.0) {
    out.value = lm;
    return out;
  }
  const Jet la = detail::log_additive(y, censored, zj, noise);
  const Jet lam{bw.lambda, bw.dlambda_dz, bw.d2lambda_dz2};
  out.value = (1.0 - lam) * la + lam * lm;
  return out;
}

/// Value-only path used by per-pixel conditionals.
inline double channel_log_likelihood_value(double y, bool censored, double z, const NoiseModel& noise,
                                           BlendPair a) {
  return channel_log_likelihood(y, censored, z, noise, a).value.v;
}

struct LikelihoodTerm {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> hess_diag;
  bool finite = true;
};

/// Adds the theta-space derivatives of one channel into grad/hess; returns the value.
inline double accumulate_channel(double y, bool censored, double log_f, std::span<const double> dlog_f,
                                 std::span<const double> d2log_f, const NoiseModel& noise, BlendPair a,
                                 std::span<double> grad, std::span<double> hess, bool* finite = nullptr) {
  const ChannelEval ce = channel_log_likelihood(y, censored, log_f, noise, a);
  if (!ce.finite) {
    if (finite) *finite = false;
    return -kInf;
  }
  for (std::size_t i = 0; i < dlog_f.size(); ++i) {
    grad[i] += ce.value.d * dlog_f[i];
    hess[i] += ce.value.dd * dlog_f[i] * dlog_f[i] + ce.value.d * d2log_f[i];
  }
  return ce.value.v;
}

inline LikelihoodTerm log_likelihood_channel(double y, bool censored, double log_f, std::span<const double> dlog_f,
                                             std::span<const double> d2log_f, const NoiseModel& noise,
                                             BlendPair a) {
  LikelihoodTerm t;
  t.grad.assign(dlog_f.size(), 0.0);
  t.hess_diag.assign(dlog_f.size(), 0.0);
  t.value = accumulate_channel(y, censored, log_f, dlog_f, d2log_f, noise, a, t.grad, t.hess_diag, &t.finite);
  if (!t.finite) {
    std::fill(t.grad.begin(), t.grad.end(), 0.0);
    std::fill(t.hess_diag.begin(), t.hess_diag.end(), 0.0);
  }
  return t;
}

/// Sum over channels of one pixel. y and censored have one entry per channel.
template <ForwardModel FM>
LikelihoodTerm log_likelihood_total(std::span<const double> theta, std::span<const double> y,
                                    std::span<const std::uint8_t> censored, const FM& fm, const NoiseModel& noise,
                                    const LikelihoodBlend& blend) {
  const std::size_t L = fm.channels(), D = fm.dim();
  ForwardEval fe;
  fm.evaluate(theta, fe);
  LikelihoodTerm t;
  t.grad.assign(D, 0.0);
  t.hess_diag.assign(D, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    t.value += accumulate_channel(y[l], censored[l] != 0, fe.log_f[l], std::span(fe.grad).subspan(l * D, D),
                                  std::span(fe.hess_diag).subspan(l * D, D), noise, blend.a[l], t.grad,
                                  t.hess_diag, &t.finite);
    if (!t.finite) break;
  }
  if (!t.finite) {
    t.value = -kInf;
    std::fill(t.grad.begin(), t.grad.end(), 0.0);
    std::fill(t.hess_diag.begin(), t.hess_diag.end(), 0.0);
  }
  return t;
}

/// Diagonal Hessian by central differences of an analytic gradient, for
/// forward models without second derivatives. grad_fn(x, out) writes D values.
template <class GradFn>
void finite_difference_hessian_diag(std::span<const double> theta, GradFn&& grad_fn, std::span<double> out) {
  const std::size_t D = theta.size();
  std::vector<double> x(theta.begin(), theta.end()), gp(D), gm(D);
  for (std::size_t i = 0; i < D; ++i) {
    const double h = 1e-5 * (1.0 + std::abs(theta[i]));
    x[i] = theta[i] + h;
    grad_fn(std::span<const double>(x), std::span<double>(gp));
    x[i] = theta[i] - h;
    grad_fn(std::span<const double>(x), std::span<double>(gm));
    x[i] = theta[i];
    out[i] = (gp[i] - gm[i]) / (2.0 * h);
  }
}

}  // namespace mixnoise
