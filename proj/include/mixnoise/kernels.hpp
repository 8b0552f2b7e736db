#pragma once

// Transition kernels: RMSProp-preconditioned MALA with the position-dependent
// drift correction, Gibbs-decomposed independent multiple-try Metropolis, and
// their random mixture.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/parallel.hpp"
#include "mixnoise/priors.hpp"
#include "mixnoise/targets.hpp"

namespace mixnoise {

inline constexpr double kVarianceFloor = 1e-30;

struct PmalaConfig {
  double epsilon = 0.5;
  double alpha = 0.99;
  double eta = 1e-5;
  bool drift_correction = true;

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("pmala: epsilon must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("pmala: alpha must lie in (0, 1)");
    if (!(eta > 0.0)) throw ConfigError("pmala: eta must be positive");
  }
};

/// Cached g, gradient and Hessian diagonal at the current iterate.
struct PointEval {
  double g = kInf;
  Field grad;
  Field hess;
};

struct SamplerState {
  Field theta;
  Field v;                       // RMSProp second moment, N x D
  std::vector<std::uint64_t> j;  // steps since last accept, per pixel

  PointEval eval;
  bool eval_valid = false;
};

// ---------------------------------------------------------------------------
// RMSProp preconditioner and drift terms (elementwise over the flat N*D view)

inline void rmsprop_update(std::span<const double> v_prev, std::span<const double> grad, double alpha,
                           std::span<double> v_out) {
  for (std::size_t i = 0; i < v_prev.size(); ++i)
    v_out[i] = std::max(alpha * v_prev[i] + (1.0 - alpha) * grad[i] * grad[i], kVarianceFloor);
}

inline std::vector<double> rmsprop_update(std::span<const double> v_prev, std::span<const double> grad, double alpha) {
  std::vector<double> out(v_prev.size());
  rmsprop_update(v_prev, grad, alpha, out);
  return out;
}

inline double preconditioner(double v, double eta) { return 1.0 / (eta + std::sqrt(v)); }

inline std::vector<double> preconditioner(std::span<const double> v, double eta) {
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) g[i] = preconditioner(v[i], eta);
  return g;
}

/// Half the derivative of the diagonal preconditioner with respect to its own
/// coordinate, when the iterate's squared gradient entered v `age` steps ago.
inline double drift_term(double grad, double hess, double v, std::uint64_t age, double alpha, double eta) {
  const double sv = std::sqrt(std::max(v, kVarianceFloor));
  const double den = eta + sv;
  return -(1.0 - alpha) * std::pow(alpha, static_cast<double>(age)) * grad * hess / (2.0 * sv * den * den);
}

/// Drift at the current iterate. j holds one counter per pixel; dim is D.
inline std::vector<double> drift_iterate(std::span<const double> grad, std::span<const double> hess,
                                         std::span<const double> v, std::span<const std::uint64_t> j, std::size_t dim,
                                         double alpha, double eta) {
  std::vector<double> out(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = drift_term(grad[i], hess[i], v[i], j[i / dim], alpha, eta);
  return out;
}

/// Drift at a fresh candidate (age 0), v_new already including its gradient.
inline std::vector<double> drift_candidate(std::span<const double> grad, std::span<const double> hess,
                                           std::span<const double> v_new, double alpha, double eta) {
  std::vector<double> out(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = drift_term(grad[i], hess[i], v_new[i], 0, alpha, eta);
  return out;
}

/// log N(x | mu, diag(var)).
inline double diag_gaussian_log_density(std::span<const double> x, std::span<const double> mu,
                                        std::span<const double> var) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = x[i] - mu[i];
    s += -0.5 * r * r / var[i] - 0.5 * std::log(var[i]) - kLogSqrt2Pi;
  }
  return s;
}

/// Mean and variance of the PMALA proposal from a point.
struct LangevinProposal {
  std::vector<double> mean;
  std::vector<double> var;
};

inline LangevinProposal langevin_proposal(std::span<const double> theta, std::span<const double> grad,
                                          std::span<const double> v, std::span<const double> drift,
                                          const PmalaConfig& cfg) {
  LangevinProposal p{std::vector<double>(theta.size()), std::vector<double>(theta.size())};
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double G = preconditioner(v[i], cfg.eta);
    p.mean[i] = theta[i] - 0.5 * cfg.epsilon * G * grad[i] + (cfg.drift_correction ? cfg.epsilon * drift[i] : 0.0);
    p.var[i] = cfg.epsilon * G;
  }
  return p;
}

/// log q(theta_prev | theta_c) recomputed from scratch.
inline double pmala_reverse_log_density(std::span<const double> theta_prev, std::span<const double> theta_c,
                                        std::span<const double> grad_c, std::span<const double> hess_c,
                                        std::span<const double> v_prev, const PmalaConfig& cfg) {
  const auto v_new = rmsprop_update(v_prev, grad_c, cfg.alpha);
  const auto gamma_c = drift_candidate(grad_c, hess_c, v_new, cfg.alpha, cfg.eta);
  const auto q = langevin_proposal(theta_c, grad_c, v_new, gamma_c, cfg);
  return diag_gaussian_log_density(theta_prev, q.mean, q.var);
}

struct PmalaStepInfo {
  bool accepted = false;
  double log_ratio = -kInf;
  double log_q_forward = 0.0;
  double log_q_reverse = 0.0;
  Field candidate;
};

template <PosteriorModel M>
void ensure_eval(const M& model, SamplerState& s) {
  if (s.eval_valid) return;
  s.eval.grad = Field(s.theta.pixels(), s.theta.dim());
  s.eval.hess = Field(s.theta.pixels(), s.theta.dim());
  s.eval.g = model.neg_log_posterior(s.theta, &s.eval.grad, &s.eval.hess);
  s.eval_valid = true;
}

/// One PMALA transition on the full field.
template <PosteriorModel M>
PmalaStepInfo pmala_step(SamplerState& s, const M& model, const PmalaConfig& cfg, Engine& rng) {
  ensure_eval(model, s);
  const std::size_t N = s.theta.pixels(), D = s.theta.dim();
  const auto gamma = drift_iterate(s.eval.grad.flat(), s.eval.hess.flat(), s.v.flat(), s.j, D, cfg.alpha, cfg.eta);
  const auto fwd = langevin_proposal(s.theta.flat(), s.eval.grad.flat(), s.v.flat(), gamma, cfg);

  PmalaStepInfo info;
  info.candidate = Field(N, D);
  for (std::size_t i = 0; i < s.theta.size(); ++i)
    info.candidate[i] = fwd.mean[i] + std::sqrt(fwd.var[i]) * std_normal(rng);
  const double u = uniform01(rng);

  PointEval ce{0.0, Field(N, D), Field(N, D)};
  ce.g = model.neg_log_posterior(info.candidate, &ce.grad, &ce.hess);
  bool finite = std::isfinite(ce.g);
  for (std::size_t i = 0; finite && i < ce.grad.size(); ++i) finite = std::isfinite(ce.grad[i]) && std::isfinite(ce.hess[i]);
  if (!finite) {
    for (auto& c : s.j) ++c;
    return info;
  }

  Field v_new(N, D);
  rmsprop_update(s.v.flat(), ce.grad.flat(), cfg.alpha, v_new.flat());
  const auto gamma_c = drift_candidate(ce.grad.flat(), ce.hess.flat(), v_new.flat(), cfg.alpha, cfg.eta);
  const auto rev = langevin_proposal(info.candidate.flat(), ce.grad.flat(), v_new.flat(), gamma_c, cfg);

  info.log_q_forward = diag_gaussian_log_density(info.candidate.flat(), fwd.mean, fwd.var);
  info.log_q_reverse = diag_gaussian_log_density(s.theta.flat(), rev.mean, rev.var);
  info.log_ratio = -ce.g + s.eval.g + info.log_q_reverse - info.log_q_forward;
  info.accepted = std::log(u) <= info.log_ratio;

  s.v = std::move(v_new);
  if (info.accepted) {
    s.theta = info.candidate;
    s.eval = std::move(ce);
    std::fill(s.j.begin(), s.j.end(), 0);
  } else {
    for (auto& c : s.j) ++c;
  }
  return info;
}

// ---------------------------------------------------------------------------
// MTM proposals q(theta_n | Theta_-n)

/// Independent smoothed-indicator draws on the validity box.
struct SmoothUniformProposal {
  ValidityBox box;
  double delta = 1e4;

  struct Local {
    const SmoothUniformProposal* p;
    void draw(Engine& rng, std::span<double> out) const { sample_smooth_box(p->delta, p->box, rng, out); }
    double log_density(std::span<const double> x) const { return smooth_box_log_density(x, p->delta, p->box); }
  };
  Local local(const Field&, std::size_t) const { return {this}; }
};

/// Per-dimension Gaussian mixture over all nonempty subsets V of the pixel's
/// neighbours: component V has mean avg_{i in V} theta_id, variance
/// 1 / (4 tau_d |V|), and weight proportional to its integral
/// exp(-2 tau_d [sum theta_id^2 - (sum theta_id)^2 / |V|]) sqrt(pi / (2 tau_d |V|)).
struct NeighborSubsetProposal {
  std::vector<double> tau;
  NeighborGraph graph;

  struct Component {
    double log_weight;  // normalized
    double mean;
    double sd;
  };
  struct Local {
    std::vector<std::vector<Component>> dims;

    void draw(Engine& rng, std::span<double> out) const {
      for (std::size_t d = 0; d < dims.size(); ++d) {
        const auto& comps = dims[d];
        double u = uniform01(rng), acc = 0.0;
        std::size_t k = comps.size() - 1;
        for (std::size_t c = 0; c < comps.size(); ++c) {
          acc += std::exp(comps[c].log_weight);
          if (u < acc) {
            k = c;
            break;
          }
        }
        out[d] = comps[k].mean + comps[k].sd * std_normal(rng);
      }
    }
    double log_density(std::span<const double> x) const {
      double s = 0.0;
      thread_local std::vector<double> terms;
      for (std::size_t d = 0; d < dims.size(); ++d) {
        terms.clear();
        for (const auto& c : dims[d]) {
          const double r = (x[d] - c.mean) / c.sd;
          terms.push_back(c.log_weight - 0.5 * r * r - std::log(c.sd) - kLogSqrt2Pi);
        }
        s += log_sum_exp(terms);
      }
      return s;
    }
  };

  Local local(const Field& th, std::size_t n) const {
    const auto nb = graph.neighbors(n);
    if (nb.empty()) throw ConfigError("neighbor-subset proposal: pixel without neighbours");
    if (nb.size() > 16) throw ConfigError("neighbor-subset proposal: too many neighbours for subset enumeration");
    Local loc;
    loc.dims.resize(th.dim());
    const std::size_t subsets = (std::size_t{1} << nb.size()) - 1;
    for (std::size_t d = 0; d < th.dim(); ++d) {
      const double t = tau[d];
      if (!(t > 0.0)) throw ConfigError("neighbor-subset proposal: tau_d must be positive");
      auto& comps = loc.dims[d];
      comps.reserve(subsets);
      for (std::size_t mask = 1; mask <= subsets; ++mask) {
        double s1 = 0.0, s2 = 0.0, k = 0.0;
        for (std::size_t b = 0; b < nb.size(); ++b)
          if (mask & (std::size_t{1} << b)) {
            const double v = th(nb[b], d);
            s1 += v;
            s2 += v * v;
            k += 1.0;
          }
        const double lw = -2.0 * t * (s2 - s1 * s1 / k) + 0.5 * std::log(std::numbers::pi / (2.0 * t * k));
        comps.push_back({lw, s1 / k, 1.0 / std::sqrt(4.0 * t * k)});
      }
      std::vector<double> lws(comps.size());
      for (std::size_t c = 0; c < comps.size(); ++c) lws[c] = comps[c].log_weight;
      const double z = log_sum_exp(lws);
      for (auto& c : comps) c.log_weight -= z;
    }
    return loc;
  }
};

using MtmProposal = std::variant<SmoothUniformProposal, NeighborSubsetProposal>;

struct MtmConfig {
  std::size_t K = 50;
  MtmProposal proposal;

  void validate() const {
    if (K < 1) throw ConfigError("mtm: K must be >= 1");
  }
};

struct MtmWeights {
  std::vector<double> log_w;
  std::vector<double> probs;
  bool any_valid = false;
};

/// Importance log-weights log pi - log q and their softmax.
inline MtmWeights mtm_weights(std::span<const double> log_target, std::span<const double> log_proposal) {
  MtmWeights w;
  w.log_w.resize(log_target.size());
  for (std::size_t k = 0; k < log_target.size(); ++k) w.log_w[k] = log_target[k] - log_proposal[k];
  double m = -kInf;
  for (double x : w.log_w)
    if (!std::isnan(x)) m = std::max(m, x);
  w.probs.assign(w.log_w.size(), 0.0);
  if (m == -kInf) return w;
  w.any_valid = true;
  double s = 0.0;
  for (std::size_t k = 0; k < w.log_w.size(); ++k) {
    w.probs[k] = std::isnan(w.log_w[k]) ? 0.0 : std::exp(w.log_w[k] - m);
    s += w.probs[k];
  }
  for (double& p : w.probs) p /= s;
  return w;
}

struct MtmPixelResult {
  bool accepted = false;
  std::vector<double> value;
};

/// One I-MTM update of pixel n given the rest of theta.
template <PosteriorModel M, class LocalProposal>
MtmPixelResult mtm_update_pixel(const Field& th, std::size_t n, const M& model, const LocalProposal& q,
                                std::size_t K, Engine& rng) {
  const std::size_t D = th.dim();
  std::vector<double> cand(K * D), lt(K), lq(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::span<double> x(cand.data() + k * D, D);
    q.draw(rng, x);
    lq[k] = q.log_density(x);
    lt[k] = model.conditional_log_density(th, n, x);
  }
  const MtmWeights w = mtm_weights(lt, lq);
  const double u_select = uniform01(rng);
  const double u_accept = uniform01(rng);
  MtmPixelResult r;
  if (!w.any_valid) return r;

  std::size_t sel = K - 1;
  double acc = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    acc += w.probs[k];
    if (u_select < acc) {
      sel = k;
      break;
    }
  }

  const auto old = th.row(n);
  const double lq_old = q.log_density(old);
  if (lq_old == -kInf) return r;
  const double lw_old = model.conditional_log_density(th, n, old) - lq_old;

  const double log_num = log_sum_exp(w.log_w);
  std::vector<double> rest;
  rest.reserve(K);
  rest.push_back(lw_old);
  for (std::size_t k = 0; k < K; ++k)
    if (k != sel) rest.push_back(w.log_w[k]);
  const double log_den = log_sum_exp(rest);
  if (log_den == -kInf || std::log(u_accept) <= log_num - log_den) {
    r.accepted = true;
    r.value.assign(cand.begin() + static_cast<std::ptrdiff_t>(sel * D),
                   cand.begin() + static_cast<std::ptrdiff_t>((sel + 1) * D));
  }
  return r;
}

/// Greedy colouring in index order; every class is an independent set.
/// On raster-ordered grids this is the checkerboard.
inline std::vector<std::vector<std::size_t>> chromatic_schedule(const NeighborGraph& g) {
  const std::size_t N = g.size();
  std::vector<std::size_t> color(N, 0);
  std::size_t ncolors = 0;
  std::vector<char> used;
  for (std::size_t n = 0; n < N; ++n) {
    used.assign(ncolors + 1, 0);
    for (std::size_t i : g.neighbors(n))
      if (i < n) used[color[i]] = 1;
    std::size_t c = 0;
    while (used[c]) ++c;
    color[n] = c;
    ncolors = std::max(ncolors, c + 1);
  }
  std::vector<std::vector<std::size_t>> classes(ncolors);
  for (std::size_t n = 0; n < N; ++n) classes[color[n]].push_back(n);
  return classes;
}

struct MtmStepInfo {
  std::vector<std::uint8_t> accepted;  // per pixel
  std::size_t accepted_count = 0;
};

/// One Gibbs sweep of I-MTM updates, colour class by colour class. Pixel n at
/// iteration t draws from the stream keyed (seed, t, n), so the result does
/// not depend on the worker count.
template <PosteriorModel M>
MtmStepInfo mtm_step(SamplerState& s, const M& model, const MtmConfig& cfg, double alpha, std::uint64_t seed,
                     std::uint64_t iteration, const std::vector<std::vector<std::size_t>>& classes,
                     std::size_t threads = 1) {
  const std::size_t N = s.theta.pixels(), D = s.theta.dim();
  MtmStepInfo info;
  info.accepted.assign(N, 0);
  for (const auto& cls : classes) {
    std::vector<MtmPixelResult> results(cls.size());
    parallel_for(cls.size(), threads, [&](std::size_t idx) {
      const std::size_t n = cls[idx];
      Engine rng = keyed_engine(seed, iteration, n);
      results[idx] = std::visit(
          [&](const auto& prop) { return mtm_update_pixel(s.theta, n, model, prop.local(s.theta, n), cfg.K, rng); },
          cfg.proposal);
    });
    for (std::size_t idx = 0; idx < cls.size(); ++idx) {
      if (!results[idx].accepted) continue;
      const std::size_t n = cls[idx];
      std::copy(results[idx].value.begin(), results[idx].value.end(), s.theta.row(n).begin());
      info.accepted[n] = 1;
      ++info.accepted_count;
    }
  }
  if (info.accepted_count > 0) {
    s.eval_valid = false;
    std::vector<double> g(D);
    for (std::size_t n = 0; n < N; ++n) {
      if (!info.accepted[n]) continue;
      model.pixel_gradient(s.theta, n, g);
      auto vn = s.v.row(n);
      for (std::size_t d = 0; d < D; ++d) vn[d] = std::max(alpha * vn[d] + (1.0 - alpha) * g[d] * g[d], kVarianceFloor);
      s.j[n] = 0;
    }
  }
  return info;
}

// ---------------------------------------------------------------------------
// Hybrid sampler

struct HybridConfig {
  double p = 0.5;  // probability of the MTM kernel
  PmalaConfig pmala;
  MtmConfig mtm;
  std::size_t T = 10000;
  std::size_t burn_in = 0;
  bool adapt_epsilon = false;  // dual averaging during burn-in only
  double target_accept = 0.574;
  std::size_t threads = 1;

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("hybrid: p must lie in [0, 1]");
    if (!(burn_in < T)) throw ConfigError("hybrid: burn_in must be smaller than T");
    pmala.validate();
    mtm.validate();
  }
};

enum class Kernel : std::uint8_t { kPmala = 0, kMtm = 1 };

struct IterationEvent {
  std::uint64_t iteration = 0;
  Kernel kernel = Kernel::kPmala;
  std::size_t accepted = 0;  // accepted blocks (PMALA: 0/1, MTM: pixels)
  std::size_t attempts = 0;
};

/// Dual-averaging state for log epsilon.
struct StepSizeAdapter {
  double mu = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  std::uint64_t m = 0;

  static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

  void start(double eps) {
    mu = std::log(10.0 * eps);
    log_eps_bar = std::log(eps);
    h_bar = 0.0;
    m = 0;
  }
  double update(double accept_prob, double target) {
    ++m;
    const double md = static_cast<double>(m);
    const double w = 1.0 / (md + kT0);
    h_bar = (1.0 - w) * h_bar + w * (target - accept_prob);
    const double log_eps = mu - std::sqrt(md) / kGamma * h_bar;
    const double k = std::pow(md, -kKappa);
    log_eps_bar = k * log_eps + (1.0 - k) * log_eps_bar;
    return std::exp(log_eps);
  }
};

/// Resumable snapshot: with counter-keyed streams, (seed, iteration) is the
/// complete random state.
struct Checkpoint {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  Field theta;
  Field v;
  std::vector<std::uint64_t> j;
  double epsilon = 0.0;
  StepSizeAdapter adapter;
};

template <PosteriorModel M>
class HybridSampler {
 public:
  HybridSampler(const M& model, HybridConfig cfg, std::uint64_t seed)
      : model_(&model), cfg_(std::move(cfg)), seed_(seed), classes_(chromatic_schedule(model.graph())) {
    cfg_.validate();
    epsilon_ = cfg_.pmala.epsilon;
    adapter_.start(epsilon_);
  }

  /// v = (dg/dtheta)^2 at theta0 (floored), j = 0.
  void initialize(const Field& theta0) {
    if (theta0.pixels() != model_->pixels() || theta0.dim() != model_->dim())
      throw ConfigError("hybrid: initial field shape mismatch");
    for (std::size_t i = 0; i < theta0.size(); ++i)
      if (!std::isfinite(theta0[i])) throw DomainError("hybrid: initial field must be finite");
    s_ = SamplerState{};
    s_.theta = theta0;
    s_.j.assign(theta0.pixels(), 0);
    ensure_eval(*model_, s_);
    s_.v = Field(theta0.pixels(), theta0.dim());
    for (std::size_t i = 0; i < theta0.size(); ++i)
      s_.v[i] = std::max(s_.eval.grad[i] * s_.eval.grad[i], kVarianceFloor);
    t_ = 0;
  }

  void restore(const Checkpoint& c) {
    if (c.seed != seed_) throw ConfigError("checkpoint seed does not match sampler seed");
    s_ = SamplerState{};
    s_.theta = c.theta;
    s_.v = c.v;
    s_.j = c.j;
    t_ = c.iteration;
    epsilon_ = c.epsilon;
    adapter_ = c.adapter;
  }

  Checkpoint checkpoint() const { return {seed_, t_, s_.theta, s_.v, s_.j, epsilon_, adapter_}; }

  IterationEvent step() {
    ++t_;
    IterationEvent ev;
    ev.iteration = t_;
    Engine sel = keyed_engine(seed_, t_, Stream::kSelect);
    const double zeta = uniform01(sel);
    if (zeta > cfg_.p) {
      ev.kernel = Kernel::kPmala;
      Engine rng = keyed_engine(seed_, t_, Stream::kPmala);
      PmalaConfig pc = cfg_.pmala;
      pc.epsilon = epsilon_;
      const PmalaStepInfo info = pmala_step(s_, *model_, pc, rng);
      ev.accepted = info.accepted ? 1 : 0;
      ev.attempts = 1;
      ++pmala_steps_;
      pmala_accepts_ += ev.accepted;
      if (cfg_.adapt_epsilon && t_ <= cfg_.burn_in) {
        const double a = std::isfinite(info.log_ratio) ? std::exp(std::min(0.0, info.log_ratio)) : 0.0;
        epsilon_ = adapter_.update(a, cfg_.target_accept);
      }
    } else {
      ev.kernel = Kernel::kMtm;
      const MtmStepInfo info = mtm_step(s_, *model_, cfg_.mtm, cfg_.pmala.alpha, seed_, t_, classes_, cfg_.threads);
      ev.accepted = info.accepted_count;
      ev.attempts = s_.theta.pixels();
    }
    if (cfg_.adapt_epsilon && t_ == cfg_.burn_in && adapter_.m > 0) epsilon_ = std::exp(adapter_.log_eps_bar);
    return ev;
  }

  const SamplerState& state() const { return s_; }
  std::uint64_t iteration() const { return t_; }
  double epsilon() const { return epsilon_; }
  const HybridConfig& config() const { return cfg_; }
  const std::vector<std::vector<std::size_t>>& color_classes() const { return classes_; }

 private:
  const M* model_;
  HybridConfig cfg_;
  std::uint64_t seed_;
  std::vector<std::vector<std::size_t>> classes_;
  SamplerState s_;
  std::uint64_t t_ = 0;
  double epsilon_ = 0.0;
  StepSizeAdapter adapter_;
  std::uint64_t pmala_steps_ = 0;
  std::uint64_t pmala_accepts_ = 0;
};

/// Iterates plus per-iteration kernel choice and acceptance.
struct ChainRecord {
  std::size_t pixels = 0;
  std::size_t dim = 0;
  std::vector<double> samples;  // T x (N*D), row t is the iterate after step t+1
  std::vector<IterationEvent> events;
  double final_epsilon = 0.0;
  double seconds = 0.0;

  std::size_t length() const { return events.size(); }
  std::size_t width() const { return pixels * dim; }
  double at(std::size_t t, std::size_t n, std::size_t d) const { return samples[t * width() + n * dim + d]; }
  void push(const Field& theta, const IterationEvent& ev) {
    samples.insert(samples.end(), theta.flat().begin(), theta.flat().end());
    events.push_back(ev);
  }
  std::vector<double> coordinate(std::size_t i, std::size_t from = 0) const {
    std::vector<double> out;
    out.reserve(length() - from);
    for (std::size_t t = from; t < length(); ++t) out.push_back(samples[t * width() + i]);
    return out;
  }

  /// Accepted / attempted blocks over iterations of one kernel, optionally after burn-in.
  double acceptance_rate(Kernel k, std::size_t from = 0) const {
    double a = 0.0, n = 0.0;
    for (std::size_t t = from; t < events.size(); ++t)
      if (events[t].kernel == k) {
        a += static_cast<double>(events[t].accepted);
        n += static_cast<double>(events[t].attempts);
      }
    return n > 0.0 ? a / n : 0.0;
  }
  double kernel_fraction(Kernel k) const {
    double c = 0.0;
    for (const auto& e : events) c += e.kernel == k ? 1.0 : 0.0;
    return events.empty() ? 0.0 : c / static_cast<double>(events.size());
  }
};

template <PosteriorModel M>
ChainRecord hybrid_sampler(const M& model, const HybridConfig& cfg, const Field& theta0, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  HybridSampler<M> sampler(model, cfg, seed);
  sampler.initialize(theta0);
  ChainRecord rec;
  rec.pixels = model.pixels();
  rec.dim = model.dim();
  rec.samples.reserve(cfg.T * rec.width());
  rec.events.reserve(cfg.T);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    const IterationEvent ev = sampler.step();
    rec.push(sampler.state().theta, ev);
  }
  rec.final_epsilon = sampler.epsilon();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace mixnoise
