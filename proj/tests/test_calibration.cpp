#include <catch_amalgamated.hpp>

#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>

#include "mixnoise/calibration.hpp"
#include "support.hpp"

using namespace mixnoise;
using Catch::Approx;

namespace {

NoiseModel channel_noise() {
  // Equal-variance point at z = 0.
  const double sm = std::log(1.1);
  return {std::sqrt(std::expm1(sm * sm)), sm, -kInf};
}

CalibrationConfig small_config(std::size_t M, std::size_t S, std::size_t G, std::uint64_t seed) {
  std::vector<double> zs(4000);
  Engine rng = keyed_engine(seed, 0, Stream::kKde);
  for (auto& z : zs) z = -4.0 + 8.0 * uniform01(rng);
  return make_calibration_config(zs, M, S, G, seed);
}

}  // namespace

TEST_CASE("empirical cdf") {
  const auto one = empirical_cdf({0.0});
  CHECK(one(-1e-12) == 0.0);
  CHECK(one(0.0) == 1.0);
  const auto two = empirical_cdf({0.0, 1.0});
  CHECK(two(0.5) == 0.5);
  CHECK(two(1.0) == 1.0);
  CHECK_THROWS_AS(empirical_cdf({1.0, 0.0}), DomainError);

  // DKW: P(sup |F_M - F| > 1.36 / sqrt(M)) <= 0.05.
  const std::size_t M = 1000, trials = 200;
  std::size_t exceed = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Engine rng = keyed_engine(1, t, 0);
    std::vector<double> xs(M);
    for (auto& x : xs) x = std_normal(rng);
    std::sort(xs.begin(), xs.end());
    const auto F = empirical_cdf(xs);
    double d = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      const double p = normal_cdf(xs[i]);
      d = std::max({d, std::abs(F(xs[i]) - p), std::abs(static_cast<double>(i) / M - p)});
    }
    exceed += d > 1.36 / std::sqrt(static_cast<double>(M));
  }
  CHECK(exceed <= 10 + 3 * 3.1);
}

TEST_CASE("surrogate cdf in the pure regimes matches closed forms") {
  const NoiseModel noise{0.3, 0.2, -kInf};
  for (double z : {-2.0, 0.0, 1.5}) {
    const double f = std::exp(z);
    const auto am = additive_moments(f, noise);
    const auto mm = multiplicative_moments(f, noise);
    const boost::math::normal_distribution<double> g(f, std::sqrt(am.s_a2));
    const boost::math::lognormal_distribution<double> ln(z + mm.m_m, std::sqrt(mm.s_m2));
    const SurrogateCdf add(z, {z + 1.0, z + 2.0}, noise);
    const SurrogateCdf mul(z, {z - 2.0, z - 1.0}, noise);
    CHECK(add.lambda() == 0.0);
    CHECK(mul.lambda() == 1.0);
    double worst_a = 0.0, worst_m = 0.0;
    for (int k = -600; k <= 600; ++k) {
      const double y = f + k * 0.01 * std::sqrt(am.s_a2);
      worst_a = std::max(worst_a, std::abs(add(y) - cdf(g, y)));
      if (y > 0.0) worst_m = std::max(worst_m, std::abs(mul(y) - cdf(ln, y)));
    }
    INFO("z = " << z);
    CHECK(worst_a < 1e-6);
    CHECK(worst_m < 1e-6);
  }
}

TEST_CASE("surrogate cdf is a CDF for blended weights") {
  const NoiseModel noise{1.0, 0.1, -kInf};
  for (double z : {-3.0, 0.0, 0.5, 4.0}) {
    const SurrogateCdf F(z, {-1.0, 2.0}, noise);
    double prev = 0.0;
    const double f = std::exp(z);
    const double sd = std::sqrt(additive_moments(f, noise).s_a2);
    for (int k = -2000; k <= 2000; ++k) {
      const double v = F(f + k * 0.01 * sd);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(F(-1e300) == 0.0);
    CHECK(F(1e300) == 1.0);
  }
  // Low SNR with a lognormal factor needs the log-space tabulation.
  const SurrogateCdf wide(-9.0, {-12.0, -10.0}, noise);
  CHECK(wide(1e30) == 1.0);
  CHECK(surrogate_cdf(std::exp(-9.0), -9.0, {-12.0, -10.0}, noise) > 0.0);
}

TEST_CASE("ks distance against the generating model") {
  // sigma_m -> 0 with lambda = 0: the surrogate is the exact N(f, sa^2).
  const NoiseModel noise{0.5, 1e-7, -kInf};
  const std::size_t M = 2000, trials = 300;
  std::size_t exceed = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    Engine rng = keyed_engine(2, t, 0);
    const double d = ks_distance_at_z(0.3, {5.0, 6.0}, noise, M, rng);
    CHECK((d >= 0.0 && d <= 1.0));
    exceed += d > 1.63 / std::sqrt(static_cast<double>(M));
  }
  // Binomial(300, 0.01): mean 3, sd 1.72.
  CHECK(exceed <= 3 + 3 * 1.73);

  // At high SNR the lognormal surrogate beats a Gaussian forced onto it.
  const NoiseModel hi{0.01, 0.4, -kInf};
  Engine a = keyed_engine(3, 0, 0), b = keyed_engine(3, 0, 0);
  const double d_add = ks_distance_at_z(3.0, {10.0, 11.0}, hi, 20000, a);
  const double d_mul = ks_distance_at_z(3.0, {0.0, 1.0}, hi, 20000, b);
  CHECK(d_add > 3.0 * d_mul);
}

TEST_CASE("ks estimator spread shrinks like one over root M") {
  const NoiseModel noise = channel_noise();
  auto spread = [&](std::size_t M) {
    std::vector<double> ds;
    for (std::size_t t = 0; t < 200; ++t) {
      Engine rng = keyed_engine(4, t, M);
      ds.push_back(ks_distance_at_z(0.0, {-1.0, 1.0}, noise, M, rng));
    }
    return std::sqrt(testsupport::moments(ds).var);
  };
  const double ratio = spread(1000) / spread(16000);
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("kde weights and bandwidth") {
  Engine rng = keyed_engine(5, 0, 0);
  std::vector<double> xs(20000);
  for (auto& x : xs) x = std_normal(rng);
  const double h = silverman_bandwidth(xs);
  CHECK(h == Approx(0.9 * std::pow(20000.0, -0.2)).epsilon(0.05));
  std::vector<double> grid(81);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = -4.0 + 0.1 * i;
  const auto w = kde_weights(xs, grid);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i] >= 0.0);
    s += w[i];
    // Normalized weights approximate phi(x) dx.
    CHECK(w[i] == Approx(0.1 * std::exp(-0.5 * grid[i] * grid[i]) / std::sqrt(2 * std::numbers::pi)).margin(2e-3));
  }
  CHECK(s == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("expected ks reductions") {
  const NoiseModel noise = channel_noise();
  CalibrationConfig cfg;
  cfg.M = 3000;
  cfg.z_grid = {0.7};
  cfg.z_density = {1.0};
  const BlendPair a{-1.0, 2.0};
  Engine rng = keyed_engine(9, 0, Stream::kCalibration);
  CHECK(expected_ks(a, cfg, noise, 9) == ks_distance_at_z(0.7, a, noise, cfg.M, rng));

  // Same sample at every bin with uniform weights: the constant comes back.
  cfg.z_grid.assign(5, 0.7);
  cfg.z_density.assign(5, 0.2);
  const auto one = calibration_samples(cfg, noise, 9);
  const std::vector<std::vector<double>> same(5, one[0]);
  CHECK(expected_ks(a, cfg, noise, same) == Approx(expected_ks(a, CalibrationConfig{3000, 1, 20, {0.7}, {1.0}, {}, 9, 1}, noise, 9)).epsilon(1e-12));

  const auto full = small_config(2000, 12, 6, 3);
  CHECK(expected_ks(a, full, noise, 77) == expected_ks(a, full, noise, 77));
}

TEST_CASE("calibration config validation and grid corners") {
  auto cfg = small_config(1000, 10, 8, 1);
  CHECK_NOTHROW(cfg.validate());
  bool add_corner = false, mul_corner = false;
  for (const auto& p : cfg.a_grid) {
    CHECK(p.a0 < p.a1);
    add_corner |= p.a0 > cfg.z_grid.back();
    mul_corner |= p.a1 < cfg.z_grid.front();
  }
  CHECK(add_corner);
  CHECK(mul_corner);
  CHECK(cfg.a_grid.size() == 8 * 7 / 2);

  auto bad = cfg;
  bad.M = 999;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.a_grid.clear();
  CHECK_THROWS_AS(calibrate_channel(bad, channel_noise()), ConfigError);
  bad = cfg;
  bad.z_density[0] += 0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.a_grid[0] = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("calibrate channel: single cell, ties, corners, equal-variance point") {
  const NoiseModel noise = channel_noise();
  auto cfg = small_config(4000, 20, 12, 11);

  auto single = cfg;
  single.a_grid = {{-0.5, 0.5}};
  const auto s = calibrate_channel(single, noise);
  CHECK(s.a == BlendPair{-0.5, 0.5});

  // Both cells lie above the z range, so both are the pure-additive surrogate.
  auto tie = cfg;
  tie.a_grid = {{10.0, 13.0}, {11.0, 12.0}, {10.0, 11.0}};
  const auto t = calibrate_channel(tie, noise);
  CHECK(t.phi_grid[0] == t.phi_grid[1]);
  CHECK(t.a == BlendPair{10.0, 11.0});

  const auto r = calibrate_channel(cfg, noise);
  const double zmax = cfg.z_grid.back(), zmin = cfg.z_grid.front();
  double phi_add = kInf, phi_mul = kInf;
  for (std::size_t c = 0; c < cfg.a_grid.size(); ++c) {
    if (cfg.a_grid[c].a0 > zmax) phi_add = std::min(phi_add, r.phi_grid[c]);
    if (cfg.a_grid[c].a1 < zmin) phi_mul = std::min(phi_mul, r.phi_grid[c]);
  }
  CHECK(r.phi <= phi_add);
  CHECK(r.phi <= phi_mul);

  const auto vals = threshold_values(zmin, zmax, cfg.grid_resolution);
  const double step = vals[1] - vals[0];
  const double mid = 0.5 * (r.a.a0 + r.a.a1);
  INFO("selected (" << r.a.a0 << ", " << r.a.a1 << "), equal-variance z " << equal_variance_z(noise));
  CHECK(std::abs(equal_variance_z(noise)) < 1e-12);
  CHECK(std::abs(mid - equal_variance_z(noise)) <= 2.0 * step);
}
