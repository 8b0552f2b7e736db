#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mixnoise/core.hpp"
#include "mixnoise/forward_model.hpp"
#include "mixnoise/likelihood.hpp"

namespace mixnoise {

/// N x L observations with censor flags.
struct ObservationSet {
  std::size_t pixels = 0;
  std::size_t channels = 0;
  std::vector<double> y;             // N x L
  std::vector<std::uint8_t> censored;  // N x L, 1 = censored
  NoiseModel noise;

  std::span<const double> y_row(std::size_t n) const { return {y.data() + n * channels, channels}; }
  std::span<const std::uint8_t> c_row(std::size_t n) const { return {censored.data() + n * channels, channels}; }

  double censored_fraction(std::size_t n) const {
    double c = 0.0;
    for (auto v : c_row(n)) c += v;
    return c / static_cast<double>(channels);
  }
  friend bool operator==(const ObservationSet&, const ObservationSet&) = default;
};

/// Single draw of max(omega, eps_m f + eps_a), eps_a ~ N(0, sa^2), eps_m ~ logN(-sm^2/2, sm^2).
inline std::pair<double, bool> draw_observation(double f, const NoiseModel& noise, Engine& rng) {
  const double sm = noise.sigma_m;
  const double eps_m = sm > 0.0 ? std::exp(-0.5 * sm * sm + sm * std_normal(rng)) : 1.0;
  const double eps_a = noise.sigma_a > 0.0 ? noise.sigma_a * std_normal(rng) : 0.0;
  const double v = eps_m * f + eps_a;
  if (v <= noise.omega) return {noise.omega, true};
  return {v, false};
}

/// Observations under the mixed-noise censored model, one keyed stream per pixel.
template <ForwardModel FM>
ObservationSet generate_observations(const Field& theta_true, const FM& fm, const NoiseModel& noise,
                                     std::uint64_t seed) {
  ObservationSet obs;
  obs.pixels = theta_true.pixels();
  obs.channels = fm.channels();
  obs.noise = noise;
  obs.y.resize(obs.pixels * obs.channels);
  obs.censored.resize(obs.pixels * obs.channels);
  std::vector<double> z(obs.channels);
  for (std::size_t n = 0; n < obs.pixels; ++n) {
    Engine rng = keyed_engine(seed, n, Stream::kData);
    fm.evaluate_values(theta_true.row(n), z);
    for (std::size_t l = 0; l < obs.channels; ++l) {
      const auto [y, c] = draw_observation(std::exp(z[l]), noise, rng);
      obs.y[n * obs.channels + l] = y;
      obs.censored[n * obs.channels + l] = c ? 1 : 0;
    }
  }
  return obs;
}

}  // namespace mixnoise
