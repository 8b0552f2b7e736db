#pragma once

// Sensor network localization: N unknown sensors, A anchors, noisy pairwise
// distances observed with probability exp(-d^2 / (2 R^2)), censored otherwise.

#include <array>
#include <cmath>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/priors.hpp"
#include "mixnoise/targets.hpp"

namespace mixnoise {

struct SensorScene {
  Field truth;    // N x 2 unknown positions
  Field anchors;  // A x 2 known positions
  double R = 0.3;
  double sigma_eps = 0.02;
  ValidityBox box = ValidityBox::cube(2, -0.35, 1.2);
  double delta = 1e4;
  std::vector<double> y;             // N x L, L = N + A
  std::vector<std::uint8_t> censored;  // N x L

  std::size_t unknowns() const { return truth.pixels(); }
  std::size_t channels() const { return truth.pixels() + anchors.pixels(); }
};

/// Positions uniform in [0,1]^2, one communication draw and one noise draw per
/// ordered pair (n, l). Self pairs are stored as censored zeros.
inline SensorScene make_sensor_scene(std::uint64_t seed, std::size_t unknowns = 8, std::size_t anchor_count = 3) {
  SensorScene s;
  s.truth = Field(unknowns, 2);
  s.anchors = Field(anchor_count, 2);
  Engine layout = keyed_engine(seed, 0, Stream::kLayout);
  for (std::size_t i = 0; i < s.truth.size(); ++i) s.truth[i] = uniform01(layout);
  for (std::size_t i = 0; i < s.anchors.size(); ++i) s.anchors[i] = uniform01(layout);
  const std::size_t L = s.channels();
  s.y.assign(unknowns * L, 0.0);
  s.censored.assign(unknowns * L, 1);
  for (std::size_t n = 0; n < unknowns; ++n) {
    Engine rng = keyed_engine(seed, n, Stream::kData);
    for (std::size_t l = 0; l < L; ++l) {
      if (l == n) continue;
      const auto p = l < unknowns ? s.truth.row(l) : s.anchors.row(l - unknowns);
      const double d = std::hypot(s.truth(n, 0) - p[0], s.truth(n, 1) - p[1]);
      const bool seen = uniform01(rng) < std::exp(-d * d / (2.0 * s.R * s.R));
      const double noise = std_normal(rng);
      if (seen) {
        s.y[n * L + l] = d + s.sigma_eps * noise;
        s.censored[n * L + l] = 0;
      }
    }
  }
  return s;
}

class SensorPosterior {
 public:
  static constexpr double kDistanceFloor = 1e-12;

  explicit SensorPosterior(SensorScene scene)
      : s_(std::move(scene)), graph_(NeighborGraph::complete(s_.unknowns())) {}

  std::size_t pixels() const { return s_.unknowns(); }
  std::size_t dim() const { return 2; }
  const NeighborGraph& graph() const { return graph_; }
  const SensorScene& scene() const { return s_; }

  /// Negative log-likelihood contribution of pair (n, l) as a function of distance.
  Jet pair_term(std::size_t n, std::size_t l, Jet d) const {
    const std::size_t L = s_.channels();
    const double r2 = 2.0 * s_.R * s_.R;
    if (s_.censored[n * L + l]) {
      // -log(1 - exp(-d^2 / 2R^2))
      const Jet x = square(d) / r2;
      const double em1 = -std::expm1(-x.v);
      const double e = std::exp(-x.v);
      // d/dx -log(1 - e^-x) = -e^-x / (1 - e^-x); second derivative e^-x / (1 - e^-x)^2.
      return chain(x, -std::log(em1), -e / em1, e / (em1 * em1));
    }
    const double y = s_.y[n * L + l];
    return square(d - y) / (2.0 * s_.sigma_eps * s_.sigma_eps) + square(d) / r2;
  }

  std::span<const double> position(const Field& th, std::size_t l) const {
    return l < s_.unknowns() ? th.row(l) : s_.anchors.row(l - s_.unknowns());
  }

  double neg_log_posterior(const Field& th, Field* grad, Field* hess) const {
    const std::size_t N = s_.unknowns(), L = s_.channels();
    if (grad) grad->fill(0.0);
    if (hess) hess->fill(0.0);
    Field gbuf(N, 2), hbuf(N, 2);
    double g = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t l = 0; l < L; ++l) {
        if (l == n) continue;
        const auto p = position(th, l);
        const double dx = th(n, 0) - p[0], dy = th(n, 1) - p[1];
        const double d = std::max(std::hypot(dx, dy), kDistanceFloor);
        const Jet t = pair_term(n, l, Jet::variable(d));
        g += t.v;
        const std::array<double, 2> u{dx / d, dy / d};
        for (std::size_t k = 0; k < 2; ++k) {
          const double dk = u[k], dkk = (1.0 - u[k] * u[k]) / d;
          gbuf(n, k) += t.d * dk;
          hbuf(n, k) += t.dd * dk * dk + t.d * dkk;
          if (l < N) {
            gbuf(l, k) -= t.d * dk;
            hbuf(l, k) += t.dd * dk * dk + t.d * dkk;
          }
        }
      }
      std::array<double, 2> qg{}, qh{};
      g += s_.delta * accumulate_quartic(th.row(n), s_.box, 1.0, qg, qh);
      for (std::size_t k = 0; k < 2; ++k) {
        gbuf(n, k) += s_.delta * qg[k];
        hbuf(n, k) += s_.delta * qh[k];
      }
    }
    if (grad) *grad = gbuf;
    if (hess) *hess = hbuf;
    return g;
  }

  double conditional_log_density(const Field& th, std::size_t n, std::span<const double> x) const {
    const std::size_t N = s_.unknowns(), L = s_.channels();
    double g = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      if (l == n) continue;
      const auto p = position(th, l);
      const double d = std::max(std::hypot(x[0] - p[0], x[1] - p[1]), kDistanceFloor);
      g += pair_term(n, l, Jet::constant(d)).v;
      if (l < N) g += pair_term(l, n, Jet::constant(d)).v;
    }
    std::array<double, 2> qg{}, qh{};
    g += s_.delta * accumulate_quartic(x, s_.box, 1.0, qg, qh);
    return -g;
  }

  void pixel_gradient(const Field& th, std::size_t n, std::span<double> out) const {
    const std::size_t N = s_.unknowns(), L = s_.channels();
    out[0] = out[1] = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      if (l == n) continue;
      const auto p = position(th, l);
      const double dx = th(n, 0) - p[0], dy = th(n, 1) - p[1];
      const double d = std::max(std::hypot(dx, dy), kDistanceFloor);
      double dphi = pair_term(n, l, Jet::variable(d)).d;
      if (l < N) dphi += pair_term(l, n, Jet::variable(d)).d;
      out[0] += dphi * dx / d;
      out[1] += dphi * dy / d;
    }
    std::array<double, 2> qh{};
    std::array<double, 2> qg{};
    accumulate_quartic(th.row(n), s_.box, 1.0, qg, qh);
    out[0] += s_.delta * qg[0];
    out[1] += s_.delta * qg[1];
  }

 private:
  SensorScene s_;
  NeighborGraph graph_;
};

static_assert(PosteriorModel<SensorPosterior>);

}  // namespace mixnoise
