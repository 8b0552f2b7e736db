#include <catch_amalgamated.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include "mixnoise/priors.hpp"
#include "support.hpp"

using namespace mixnoise;
using Catch::Approx;
using testsupport::rel_close;

namespace {

// Two-sided KS statistic of sorted samples against a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

TEST_CASE("quartic penalty") {
  const ValidityBox box = ValidityBox::cube(2, -1.0, 1.0);
  Field th(3, 2, 0.5);
  auto t = quartic_penalty(th, box);
  CHECK(t.value == 0.0);
  for (std::size_t i = 0; i < th.size(); ++i) CHECK((t.grad[i] == 0.0 && t.hess_diag[i] == 0.0));

  th(0, 0) = 2.0;
  t = quartic_penalty(th, box);
  CHECK(t.value == 1.0);
  CHECK(t.grad(0, 0) == 4.0);
  CHECK(t.hess_diag(0, 0) == 12.0);
  th(0, 0) = -2.5;
  t = quartic_penalty(th, box);
  CHECK(t.grad(0, 0) == Approx(-4.0 * 1.5 * 1.5 * 1.5));

  Engine rng = keyed_engine(1, 0, 0);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int rep = 0; rep < 50; ++rep) {
    Field x(2, 2);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = u(rng);
    const auto q = quartic_penalty(x, box);
    const auto fd = testsupport::fd_gradient(
        [&](std::span<const double> p) {
          Field y(2, 2);
          std::copy(p.begin(), p.end(), y.flat().begin());
          return quartic_penalty(y, box).value;
        },
        x.flat());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(rel_close(q.grad[i], fd[i], 1e-6, 1e-3));
  }
}

TEST_CASE("laplacian penalty") {
  NeighborGraph two(2);
  two.add_edge(0, 1);
  const std::vector<double> m{0.0, 1.0};
  const auto t = laplacian_penalty(m, two);
  CHECK(t.value == 2.0);

  const auto g = NeighborGraph::grid(3, 4);
  CHECK(g.symmetric());
  const std::vector<double> flat(12, 0.7);
  const auto c = laplacian_penalty(flat, g);
  CHECK(c.value == 0.0);
  for (std::size_t n = 0; n < 12; ++n) {
    CHECK(c.grad[n] == 0.0);
    CHECK(c.hess_diag[n] > 0.0);
  }

  Engine rng = keyed_engine(2, 0, 0);
  std::vector<double> x(12);
  for (auto& v : x) v = std_normal(rng);
  const auto l = laplacian_penalty(x, g);
  const auto fd = testsupport::fd_gradient([&](std::span<const double> p) { return laplacian_penalty(p, g).value; }, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(rel_close(l.grad[i], fd[i], 1e-6, 1e-6));
  // Corner pixels have 2 neighbours, edges 3, interior 4.
  CHECK(g.neighbors(0).size() == 2);
  CHECK(g.neighbors(1).size() == 3);
  CHECK(g.neighbors(5).size() == 4);
}

TEST_CASE("log prior is the sum of its parts and differentiates correctly") {
  const std::size_t rows = 3, cols = 3, D = 2;
  const ValidityBox box = ValidityBox::cube(D, 0.0, 1.0);
  PriorConfig cfg{1e4, {0.0, 0.0}, NeighborGraph::grid(rows, cols)};
  Field inside(rows * cols, D, 0.5);
  CHECK(log_prior(inside, cfg, box).value == 0.0);

  cfg.tau = {2.0, 0.5};
  Engine rng = keyed_engine(3, 0, 0);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  Field th(rows * cols, D);
  for (std::size_t i = 0; i < th.size(); ++i) th[i] = u(rng);
  const auto lp = log_prior(th, cfg, box);
  double parts = -cfg.delta * quartic_penalty(th, box).value;
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> m(rows * cols);
    for (std::size_t n = 0; n < m.size(); ++n) m[n] = th(n, d);
    parts -= cfg.tau[d] * laplacian_penalty(m, cfg.graph).value;
  }
  CHECK(lp.value == Approx(parts).epsilon(1e-14));

  const auto value = [&](std::span<const double> p) {
    Field y(rows * cols, D);
    std::copy(p.begin(), p.end(), y.flat().begin());
    return log_prior(y, cfg, box).value;
  };
  const auto grad = [&](std::span<const double> p) {
    Field y(rows * cols, D);
    std::copy(p.begin(), p.end(), y.flat().begin());
    const auto t = log_prior(y, cfg, box);
    return std::vector<double>(t.grad.flat().begin(), t.grad.flat().end());
  };
  const auto g_fd = testsupport::fd_gradient(value, th.flat());
  const auto h_fd = testsupport::fd_diagonal(grad, th.flat());
  for (std::size_t i = 0; i < th.size(); ++i) {
    CHECK(rel_close(lp.grad[i], g_fd[i], 1e-4, 1e-3));
    CHECK(rel_close(lp.hess_diag[i], h_fd[i], 1e-3, 1e-3));
  }
}

TEST_CASE("log prior is C2 across the box boundary") {
  const ValidityBox box = ValidityBox::cube(1, 0.0, 1.0);
  PriorConfig cfg{1e4, {0.0}, NeighborGraph(1)};
  auto second = [&](double x) {
    const double h = 1e-4;
    auto v = [&](double p) { return log_prior(Field(1, 1, p), cfg, box).value; };
    return (v(x + h) - 2.0 * v(x) + v(x - h)) / (h * h);
  };
  for (double edge : {0.0, 1.0}) {
    CHECK(std::abs(second(edge - 1e-8) - second(edge + 1e-8)) < 1e-4);
    const auto a = log_prior(Field(1, 1, edge - 1e-8), cfg, box);
    const auto b = log_prior(Field(1, 1, edge + 1e-8), cfg, box);
    CHECK(std::abs(a.hess_diag[0] - b.hess_diag[0]) < 1e-4);
    CHECK(std::abs(a.grad[0] - b.grad[0]) < 1e-4);
  }
}

TEST_CASE("smooth indicator uniform weight") {
  CHECK(smooth_indicator_uniform_weight(1e4, 0.0, 1.0) == Approx(0.8466).epsilon(1e-4));
  CHECK(smooth_indicator_uniform_weight(1e4, 0.0, 1.0) == Approx(1.0 / (1.0 + 3.625609908221908 / 20.0)).epsilon(1e-12));
  CHECK(smooth_indicator_uniform_weight(1e40, 0.0, 1.0) > 0.999999);
  CHECK_THROWS_AS(smooth_indicator_uniform_weight(1e4, 1.0, 1.0), DomainError);

  Engine rng = keyed_engine(4, 0, 0);
  const std::size_t n = 1'000'000;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sample_smooth_indicator_1d(1e4, 0.0, 1.0, rng);
    inside += (x >= 0.0 && x <= 1.0);
  }
  const double w = smooth_indicator_uniform_weight(1e4, 0.0, 1.0);
  const double se = std::sqrt(w * (1 - w) / n);
  CHECK(std::abs(static_cast<double>(inside) / n - w) < 3.0 * se);
}

TEST_CASE("quartic generalized normal: symmetry, fourth moment, CDF") {
  const double delta = 1e4;
  Engine rng = keyed_engine(5, 0, 0);
  const std::size_t n = 1'000'000;
  std::vector<double> xs(n), x4(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = sample_generalized_normal_quartic(delta, rng);
    x4[i] = std::pow(xs[i], 4);
  }
  const auto m = testsupport::moments(xs);
  CHECK(std::abs(m.mean) < 3.0 * m.se_mean);
  // E[x^4] = Gamma(5/4) / (Gamma(1/4) delta) = 1 / (4 delta).
  const double exact = std::tgamma(1.25) / (std::tgamma(0.25) * delta);
  CHECK(exact == Approx(0.25 / delta).epsilon(1e-14));
  const auto m4 = testsupport::moments(x4);
  CHECK(std::abs(m4.mean - exact) < 3.0 * m4.se_mean);

  xs.resize(100'000);
  const double d = ks_statistic(xs, [&](double t) {
    const double p = boost::math::gamma_p(0.25, delta * t * t * t * t);
    return t < 0.0 ? 0.5 - 0.5 * p : 0.5 + 0.5 * p;
  });
  CHECK(d < 1.628 / std::sqrt(1e5));  // alpha = 0.01
}

TEST_CASE("smooth indicator sampler matches its density in total variation") {
  const double delta = 1e4, l = 0.0, u = 1.0;
  const double lo = -0.5, hi = 1.5;
  const int bins = 100;
  const double bw = (hi - lo) / bins;
  std::vector<double> prob(bins);
  double mass = 0.0;
  for (int b = 0; b < bins; ++b) {
    // Simpson on 200 panels per bin.
    const int m = 200;
    const double h = bw / m;
    double s = 0.0;
    for (int k = 0; k <= m; ++k) {
      const double x = lo + b * bw + k * h;
      const double w = (k == 0 || k == m) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      s += w * std::exp(smooth_indicator_log_density(x, delta, l, u));
    }
    prob[b] = s * h / 3.0;
    mass += prob[b];
  }
  CHECK(mass == Approx(1.0).epsilon(1e-6));

  Engine rng = keyed_engine(6, 0, 0);
  const std::size_t n = 1'000'000;
  std::vector<double> hist(bins, 0.0);
  double outside = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sample_smooth_indicator_1d(delta, l, u, rng);
    const int b = static_cast<int>(std::floor((x - lo) / bw));
    if (b < 0 || b >= bins)
      outside += 1.0;
    else
      hist[b] += 1.0;
  }
  double tv = outside / n;
  for (int b = 0; b < bins; ++b) tv += std::abs(hist[b] / n - prob[b]);
  tv *= 0.5;
  CHECK(tv < 0.01);
}

TEST_CASE("smooth box density is the sum of 1D densities") {
  ValidityBox box({0.0, -2.0, 5.0}, {1.0, 2.0, 5.5});
  const std::vector<double> x{0.3, 2.1, 4.9};
  double s = 0.0;
  for (std::size_t d = 0; d < 3; ++d) s += smooth_indicator_log_density(x[d], 1e4, box.lower[d], box.upper[d]);
  CHECK(smooth_box_log_density(x, 1e4, box) == s);
}

TEST_CASE("prior config validation") {
  PriorConfig cfg{1e4, {1.0}, NeighborGraph::grid(2, 2)};
  CHECK_NOTHROW(cfg.validate(4, 1));
  CHECK_THROWS_AS(cfg.validate(5, 1), ConfigError);
  cfg.tau = {-1.0};
  CHECK_THROWS_AS(cfg.validate(4, 1), ConfigError);
  cfg.tau = {1.0};
  cfg.graph.adj[0].push_back(3);  // one-directional edge
  CHECK_THROWS_AS(cfg.validate(4, 1), ConfigError);
}
