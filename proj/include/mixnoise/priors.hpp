#pragma once

// Smooth uniform prior (quartic penalty on the validity box), the spatial
// Laplacian regularizer, their combination, and exact sampling from the
// smoothed box indicator.

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"

namespace mixnoise {

/// Symmetric adjacency over pixels (the sets V_n).
struct NeighborGraph {
  std::vector<std::vector<std::size_t>> adj;

  NeighborGraph() = default;
  explicit NeighborGraph(std::size_t n) : adj(n) {}

  std::size_t size() const { return adj.size(); }
  std::span<const std::size_t> neighbors(std::size_t n) const { return adj[n]; }

  void add_edge(std::size_t a, std::size_t b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  /// 4-neighbour (5-point stencil) graph of a rows x cols image, raster order,
  /// truncated at the borders.
  static NeighborGraph grid(std::size_t rows, std::size_t cols) {
    NeighborGraph g(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        auto& v = g.adj[r * cols + c];
        if (r > 0) v.push_back((r - 1) * cols + c);
        if (c > 0) v.push_back(r * cols + c - 1);
        if (c + 1 < cols) v.push_back(r * cols + c + 1);
        if (r + 1 < rows) v.push_back((r + 1) * cols + c);
      }
    return g;
  }

  static NeighborGraph complete(std::size_t n) {
    NeighborGraph g(n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (a != b) g.adj[a].push_back(b);
    return g;
  }

  bool symmetric() const {
    for (std::size_t n = 0; n < adj.size(); ++n)
      for (std::size_t i : adj[n]) {
        if (i >= adj.size()) return false;
        if (std::find(adj[i].begin(), adj[i].end(), n) == adj[i].end()) return false;
      }
    return true;
  }
};

struct PriorConfig {
  double delta = 1e4;
  std::vector<double> tau;  // one per parameter map, >= 0
  NeighborGraph graph;

  void validate(std::size_t pixels, std::size_t dim) const {
    if (!(delta > 0.0)) throw ConfigError("prior: delta must be positive");
    if (tau.size() != dim) throw ConfigError("prior: tau needs one entry per parameter map");
    for (double t : tau)
      if (!(t >= 0.0)) throw ConfigError("prior: tau must be nonnegative");
    if (graph.size() != pixels) throw ConfigError("prior: neighbour graph size mismatch");
    if (!graph.symmetric()) throw ConfigError("prior: neighbour graph must be symmetric");
  }
};

/// Value with gradient and diagonal second derivatives over an N x D field.
struct FieldTerm {
  double value = 0.0;
  Field grad;
  Field hess_diag;
};

/// Outside distance max(0, x - u, l - x) with its sign (+1 above, -1 below).
inline std::pair<double, double> box_excess(double x, double l, double u) {
  if (x > u) return {x - u, 1.0};
  if (x < l) return {l - x, -1.0};
  return {0.0, 0.0};
}

inline double quartic_penalty_value(std::span<const double> x, const ValidityBox& box) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double m = box_excess(x[d], box.lower[d], box.upper[d]).first;
    const double m2 = m * m;
    s += m2 * m2;
  }
  return s;
}

/// Adds scale * derivatives of the quartic penalty of one pixel.
inline double accumulate_quartic(std::span<const double> x, const ValidityBox& box, double scale,
                                 std::span<double> grad, std::span<double> hess) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const auto [m, sign] = box_excess(x[d], box.lower[d], box.upper[d]);
    if (m == 0.0) continue;
    s += m * m * m * m;
    grad[d] += scale * 4.0 * m * m * m * sign;
    hess[d] += scale * 12.0 * m * m;
  }
  return s;
}

inline FieldTerm quartic_penalty(const Field& theta, const ValidityBox& box) {
  FieldTerm t{0.0, Field(theta.pixels(), theta.dim()), Field(theta.pixels(), theta.dim())};
  for (std::size_t n = 0; n < theta.pixels(); ++n)
    t.value += accumulate_quartic(theta.row(n), box, 1.0, t.grad.row(n), t.hess_diag.row(n));
  return t;
}

struct MapTerm {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> hess_diag;
};

/// h(x) = sum_n sum_{i in V_n} (x_n - x_i)^2, every edge counted from both ends.
inline MapTerm laplacian_penalty(std::span<const double> map, const NeighborGraph& graph) {
  MapTerm t{0.0, std::vector<double>(map.size(), 0.0), std::vector<double>(map.size(), 0.0)};
  for (std::size_t n = 0; n < map.size(); ++n)
    for (std::size_t i : graph.neighbors(n)) {
      const double diff = map[n] - map[i];
      t.value += diff * diff;
      // x_n appears in (n,i) and (i,n).
      t.grad[n] += 4.0 * diff;
      t.hess_diag[n] += 4.0;
    }
  return t;
}

/// log prior up to a constant: -delta * quartic - sum_d tau_d h(theta_.d).
inline FieldTerm log_prior(const Field& theta, const PriorConfig& cfg, const ValidityBox& box) {
  const std::size_t N = theta.pixels(), D = theta.dim();
  FieldTerm t{0.0, Field(N, D), Field(N, D)};
  for (std::size_t n = 0; n < N; ++n)
    t.value -= cfg.delta * accumulate_quartic(theta.row(n), box, -cfg.delta, t.grad.row(n), t.hess_diag.row(n));
  std::vector<double> map(N);
  for (std::size_t d = 0; d < D; ++d) {
    if (cfg.tau[d] == 0.0) continue;
    for (std::size_t n = 0; n < N; ++n) map[n] = theta(n, d);
    const MapTerm h = laplacian_penalty(map, cfg.graph);
    t.value -= cfg.tau[d] * h.value;
    for (std::size_t n = 0; n < N; ++n) {
      t.grad(n, d) -= cfg.tau[d] * h.grad[n];
      t.hess_diag(n, d) -= cfg.tau[d] * h.hess_diag[n];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Smoothed indicator distribution pi(x) ~ exp(-delta max(0, x-u, l-x)^4)

inline const double kGammaQuarter = std::tgamma(0.25);

/// Probability mass of the flat section [l, u].
inline double smooth_indicator_uniform_weight(double delta, double l, double u) {
  if (!(u > l)) throw DomainError("smooth indicator: u > l required");
  if (!(delta > 0.0)) throw DomainError("smooth indicator: delta must be positive");
  return 1.0 / (1.0 + kGammaQuarter / (2.0 * std::pow(delta, 0.25) * (u - l)));
}

inline double smooth_indicator_log_density(double x, double delta, double l, double u) {
  const double m = box_excess(x, l, u).first;
  const double norm = (u - l) + kGammaQuarter / (2.0 * std::pow(delta, 0.25));
  return -delta * m * m * m * m - std::log(norm);
}

/// Joint log density of independent per-dimension smoothed indicators.
inline double smooth_box_log_density(std::span<const double> x, double delta, const ValidityBox& box) {
  double s = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) s += smooth_indicator_log_density(x[d], delta, box.lower[d], box.upper[d]);
  return s;
}

/// Exact draw from the density proportional to exp(-delta x^4):
/// |x| = (G / delta)^(1/4), G ~ Gamma(1/4, 1), with a uniform random sign.
inline double sample_generalized_normal_quartic(double delta, Engine& rng) {
  if (!(delta > 0.0)) throw DomainError("generalized normal: delta must be positive");
  const double g = std::gamma_distribution<double>(0.25, 1.0)(rng);
  const double mag = std::pow(g / delta, 0.25);
  return uniform01(rng) < 0.5 ? -mag : mag;
}

inline double sample_smooth_indicator_1d(double delta, double l, double u, Engine& rng) {
  const double w = smooth_indicator_uniform_weight(delta, l, u);
  if (uniform01(rng) < w) return std::uniform_real_distribution<double>(l, u)(rng);
  const double x = sample_generalized_normal_quartic(delta, rng);
  return x < 0.0 ? x + l : x + u;
}

inline void sample_smooth_box(double delta, const ValidityBox& box, Engine& rng, std::span<double> out) {
  for (std::size_t d = 0; d < box.dim(); ++d) out[d] = sample_smooth_indicator_1d(delta, box.lower[d], box.upper[d], rng);
}

}  // namespace mixnoise
