#pragma once

// Target posteriors pi(Theta) ~ exp(-g(Theta)) consumed by the samplers, and
// the analytic Gaussian / Gaussian-mixture targets.

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"
#include "mixnoise/priors.hpp"

namespace mixnoise {

/// What the hybrid sampler needs from a posterior.
///  - neg_log_posterior: g(Theta), optionally its gradient and diagonal Hessian.
///  - conditional_log_density: log pi(theta_n = x | Theta_-n) up to a constant
///    in x; reads only pixel n's neighbours from theta.
///  - pixel_gradient: dg/dtheta_n at theta.
///  - graph: conditional dependence graph between pixels.
template <class M>
concept PosteriorModel = requires(const M& m, const Field& th, Field* g, std::size_t n, std::span<const double> x,
                                  std::span<double> out) {
  { m.pixels() } -> std::convertible_to<std::size_t>;
  { m.dim() } -> std::convertible_to<std::size_t>;
  { m.neg_log_posterior(th, g, g) } -> std::convertible_to<double>;
  { m.conditional_log_density(th, n, x) } -> std::convertible_to<double>;
  { m.pixel_gradient(th, n, out) };
  { m.graph() } -> std::convertible_to<const NeighborGraph&>;
};

/// Multivariate Gaussian N(mean, cov) as a single-pixel target.
class GaussianTarget {
 public:
  GaussianTarget(std::vector<double> mean, const Eigen::MatrixXd& cov) : mean_(std::move(mean)), graph_(1) {
    const std::size_t D = mean_.size();
    if (static_cast<std::size_t>(cov.rows()) != D || static_cast<std::size_t>(cov.cols()) != D)
      throw ConfigError("gaussian target: covariance shape mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("gaussian target: covariance must be SPD");
    prec_ = llt.solve(Eigen::MatrixXd::Identity(D, D));
    cov_ = cov;
  }
  static GaussianTarget standard(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), Eigen::MatrixXd::Identity(dim, dim)};
  }

  std::size_t pixels() const { return 1; }
  std::size_t dim() const { return mean_.size(); }
  const NeighborGraph& graph() const { return graph_; }
  const std::vector<double>& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }

  double neg_log_posterior(const Field& th, Field* grad, Field* hess) const {
    const Eigen::VectorXd r = residual(th.row(0));
    const Eigen::VectorXd pr = prec_ * r;
    if (grad)
      for (std::size_t d = 0; d < dim(); ++d) (*grad)(0, d) = pr[d];
    if (hess)
      for (std::size_t d = 0; d < dim(); ++d) (*hess)(0, d) = prec_(d, d);
    return 0.5 * r.dot(pr);
  }
  double conditional_log_density(const Field&, std::size_t, std::span<const double> x) const {
    const Eigen::VectorXd r = residual(x);
    return -0.5 * r.dot(prec_ * r);
  }
  void pixel_gradient(const Field& th, std::size_t, std::span<double> out) const {
    const Eigen::VectorXd pr = prec_ * residual(th.row(0));
    for (std::size_t d = 0; d < dim(); ++d) out[d] = pr[d];
  }

 private:
  Eigen::VectorXd residual(std::span<const double> x) const {
    Eigen::VectorXd r(dim());
    for (std::size_t d = 0; d < dim(); ++d) r[d] = x[d] - mean_[d];
    return r;
  }

  std::vector<double> mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd prec_;
  NeighborGraph graph_;
};

// ---------------------------------------------------------------------------
// Equal-weight 2D Gaussian mixture restricted to a smoothed box.

struct GmmMode {
  std::array<double, 2> mean;
  std::array<double, 3> cov;  // (s11, s12, s22)
};

struct GmmTarget {
  std::vector<GmmMode> modes;
  ValidityBox box = ValidityBox::cube(2, -15.0, 15.0);
  double delta = 1e4;
};

/// Means uniform in [-span, span]^2 with a minimum pairwise separation,
/// covariances R diag(e1, e2) R^T with eigenvalues in [eig_lo, eig_hi].
inline GmmTarget make_gmm_target(std::uint64_t seed, std::size_t count = 15, double span = 12.0,
                                 double min_separation = 4.0, double eig_lo = 0.1, double eig_hi = 1.0) {
  Engine rng = keyed_engine(seed, 0, Stream::kLayout);
  std::uniform_real_distribution<double> pos(-span, span), eig(eig_lo, eig_hi), ang(0.0, std::numbers::pi);
  GmmTarget t;
  int attempts = 0;
  while (t.modes.size() < count) {
    if (++attempts > 100000) throw ConfigError("gmm layout: separation constraint cannot be met");
    const std::array<double, 2> m{pos(rng), pos(rng)};
    bool ok = true;
    for (const auto& o : t.modes)
      if (std::hypot(o.mean[0] - m[0], o.mean[1] - m[1]) < min_separation) ok = false;
    if (!ok) continue;
    const double e1 = eig(rng), e2 = eig(rng), a = ang(rng);
    const double c = std::cos(a), s = std::sin(a);
    t.modes.push_back({m, {e1 * c * c + e2 * s * s, (e1 - e2) * c * s, e1 * s * s + e2 * c * c}});
  }
  return t;
}

/// Value, gradient and diagonal Hessian of log pi for a single point.
struct PointTerm {
  double value = 0.0;
  std::array<double, 2> grad{};
  std::array<double, 2> hess_diag{};
};

inline double gmm_mixture_log_density(std::span<const double> x, const GmmTarget& t) {
  const double k = static_cast<double>(t.modes.size());
  double acc = -kInf;
  for (const auto& m : t.modes) {
    const double det = m.cov[0] * m.cov[2] - m.cov[1] * m.cov[1];
    const double r0 = x[0] - m.mean[0], r1 = x[1] - m.mean[1];
    const double q = (m.cov[2] * r0 * r0 - 2.0 * m.cov[1] * r0 * r1 + m.cov[0] * r1 * r1) / det;
    acc = log_add(acc, -0.5 * q - 0.5 * std::log(det) - 2.0 * kLogSqrt2Pi);
  }
  return acc - std::log(k);
}

/// log of [sum_i N(x | mu_i, Sigma_i) / K] - delta * quartic(x).
inline PointTerm gmm_log_density(std::span<const double> x, const GmmTarget& t) {
  const std::size_t K = t.modes.size();
  std::vector<double> logc(K);
  std::vector<std::array<double, 2>> gc(K);
  std::vector<std::array<double, 2>> hc(K);
  for (std::size_t i = 0; i < K; ++i) {
    const auto& m = t.modes[i];
    const double det = m.cov[0] * m.cov[2] - m.cov[1] * m.cov[1];
    const double p00 = m.cov[2] / det, p01 = -m.cov[1] / det, p11 = m.cov[0] / det;
    const double r0 = x[0] - m.mean[0], r1 = x[1] - m.mean[1];
    const double pr0 = p00 * r0 + p01 * r1, pr1 = p01 * r0 + p11 * r1;
    logc[i] = -0.5 * (r0 * pr0 + r1 * pr1) - 0.5 * std::log(det) - 2.0 * kLogSqrt2Pi;
    gc[i] = {-pr0, -pr1};
    hc[i] = {-p00, -p11};
  }
  const double lse = log_sum_exp(logc);
  PointTerm out;
  out.value = lse - std::log(static_cast<double>(K));
  for (std::size_t i = 0; i < K; ++i) {
    const double w = std::exp(logc[i] - lse);
    for (int d = 0; d < 2; ++d) {
      out.grad[d] += w * gc[i][d];
      out.hess_diag[d] += w * (hc[i][d] + gc[i][d] * gc[i][d]);
    }
  }
  for (int d = 0; d < 2; ++d) out.hess_diag[d] -= out.grad[d] * out.grad[d];
  std::array<double, 2> qg{}, qh{};
  out.value -= t.delta * accumulate_quartic(x, t.box, 1.0, qg, qh);
  for (int d = 0; d < 2; ++d) {
    out.grad[d] -= t.delta * qg[d];
    out.hess_diag[d] -= t.delta * qh[d];
  }
  return out;
}

/// Mean of the truncated-by-penalty mixture is close to the plain mixture mean
/// when all modes sit well inside the box.
inline std::array<double, 2> gmm_mixture_mean(const GmmTarget& t) {
  std::array<double, 2> m{};
  for (const auto& mode : t.modes) {
    m[0] += mode.mean[0];
    m[1] += mode.mean[1];
  }
  m[0] /= static_cast<double>(t.modes.size());
  m[1] /= static_cast<double>(t.modes.size());
  return m;
}

class GmmPosterior {
 public:
  explicit GmmPosterior(GmmTarget t) : t_(std::move(t)), graph_(1) {}

  std::size_t pixels() const { return 1; }
  std::size_t dim() const { return 2; }
  const NeighborGraph& graph() const { return graph_; }
  const GmmTarget& target() const { return t_; }

  double neg_log_posterior(const Field& th, Field* grad, Field* hess) const {
    const PointTerm p = gmm_log_density(th.row(0), t_);
    for (std::size_t d = 0; d < 2; ++d) {
      if (grad) (*grad)(0, d) = -p.grad[d];
      if (hess) (*hess)(0, d) = -p.hess_diag[d];
    }
    return -p.value;
  }
  double conditional_log_density(const Field&, std::size_t, std::span<const double> x) const {
    std::array<double, 2> g{}, h{};
    return gmm_mixture_log_density(x, t_) - t_.delta * accumulate_quartic(x, t_.box, 1.0, g, h);
  }
  void pixel_gradient(const Field& th, std::size_t, std::span<double> out) const {
    const PointTerm p = gmm_log_density(th.row(0), t_);
    out[0] = -p.grad[0];
    out[1] = -p.grad[1];
  }

 private:
  GmmTarget t_;
  NeighborGraph graph_;
};

static_assert(PosteriorModel<GaussianTarget>);
static_assert(PosteriorModel<GmmPosterior>);

}  // namespace mixnoise
