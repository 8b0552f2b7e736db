#pragma once

// Experiment configuration, presets and the generate / calibrate / sample /
// diagnose pipeline. Every stage reads its inputs from the files written by
// the previous one.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixnoise/astro.hpp"
#include "mixnoise/calibration.hpp"
#include "mixnoise/diagnostics.hpp"
#include "mixnoise/io.hpp"
#include "mixnoise/kernels.hpp"
#include "mixnoise/sensors.hpp"
#include "mixnoise/targets.hpp"

namespace mixnoise {

namespace fs = std::filesystem;
using nlohmann::json;

struct ExperimentConfig {
  std::string experiment = "custom";  // gmm | sensors | astro | custom
  std::string scale = "desk";         // desk | paper
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string data_dir;  // empty: <out>/data
  std::size_t threads = 0;  // 0: MIXNOISE_THREADS

  struct Data {
    std::uint64_t scene_seed = 1;  // mode layout, sensor scene, surrogate and truth maps
    std::size_t modes = 15;
    std::size_t unknowns = 8;
    std::size_t anchors = 3;
    std::size_t rows = 16, cols = 16, dim = 4, channels = 10;
    double decade_lo = -18.0, decade_hi = -2.0;
    double box_half_width = 1.7320508075688772;  // sqrt(3): unit-variance uniform
    double line_correlation = 0.8;  // shared linear trend across surrogate channels
    double truth_half_width = 0.25;  // truth sub-box, fraction of box width; 0: whole inner box
    friend bool operator==(const Data&, const Data&) = default;
  } data;

  struct Noise {
    double sigma_a = 1.38715e-10;
    double sigma_m = 0.09531017980432493;  // log(1.1)
    double censor_sigmas = 3.0;            // omega = censor_sigmas * sigma_a
    friend bool operator==(const Noise&, const Noise&) = default;
  } noise;

  struct Prior {
    double delta = 1e4;
    std::vector<double> tau{10.0, 2.0, 3.0, 4.0};
    friend bool operator==(const Prior&, const Prior&) = default;
  } prior;

  struct Blend {
    bool calibrate = true;
    std::vector<double> a0, a1;  // used when calibrate is false
    friend bool operator==(const Blend&, const Blend&) = default;
  } blend;

  struct Calibration {
    std::size_t M = 20000, S = 50, grid_resolution = 20, kde_samples = 20000;
    friend bool operator==(const Calibration&, const Calibration&) = default;
  } calibration;

  struct Sampler {
    std::vector<double> p{0.5};
    std::size_t T = 10000, burn_in = 1500;
    double epsilon = 1e-6, alpha = 0.99, eta = 1e-5;
    bool drift_correction = true;
    bool adapt_epsilon = false;
    double target_accept = 0.574;
    std::size_t K = 50;
    std::string proposal = "neighbor_subset";  // neighbor_subset | smooth_uniform
    std::size_t thin = 1;
    std::size_t checkpoint_every = 1000;
    std::string chain_layout = "wide";  // wide | long
    friend bool operator==(const Sampler&, const Sampler&) = default;
  } sampler;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  fs::path root() const { return fs::path(out); }
  fs::path data_path() const { return data_dir.empty() ? root() / "data" : fs::path(data_dir); }
  fs::path calibration_path() const { return root() / "calibration.json"; }
  fs::path run_path(double p) const { return root() / "runs" / ("p" + io::fmt(p)); }
  fs::path tables_path() const { return root() / "tables"; }

  bool astro_like() const { return experiment == "astro" || experiment == "custom"; }

  std::size_t effective_threads() const {
    const std::size_t cap = env_thread_cap();
    if (threads == 0) return cap;
    return std::getenv("MIXNOISE_THREADS") ? std::min(threads, cap) : threads;
  }

  NoiseModel noise_model() const {
    return {noise.sigma_a, noise.sigma_m, noise.censor_sigmas * noise.sigma_a};
  }
  ValidityBox astro_box() const {
    return ValidityBox::cube(data.dim, -data.box_half_width, data.box_half_width);
  }

  void validate() const {
    if (experiment != "gmm" && experiment != "sensors" && experiment != "astro" && experiment != "custom")
      throw ConfigError("experiment must be gmm, sensors, astro or custom");
    if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper");
    if (sampler.p.empty()) throw ConfigError("sampler.p needs at least one value");
    for (double p : sampler.p)
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sampler.p values must lie in [0, 1]");
    if (!(sampler.burn_in < sampler.T)) throw ConfigError("sampler.burn_in must be smaller than sampler.T");
    if (sampler.thin == 0) throw ConfigError("sampler.thin must be positive");
    if (sampler.checkpoint_every == 0) throw ConfigError("sampler.checkpoint_every must be positive");
    if (sampler.chain_layout != "wide" && sampler.chain_layout != "long")
      throw ConfigError("sampler.chain_layout must be wide or long");
    if (sampler.proposal != "neighbor_subset" && sampler.proposal != "smooth_uniform")
      throw ConfigError("sampler.proposal must be neighbor_subset or smooth_uniform");
    if (astro_like()) {
      if (prior.tau.size() != data.dim) throw ConfigError("prior.tau needs one entry per parameter map");
      if (!blend.calibrate && (blend.a0.size() != data.channels || blend.a1.size() != data.channels))
        throw ConfigError("blend.a0 / blend.a1 need one entry per channel when calibrate is false");
      if (!(noise.censor_sigmas > -kInf)) throw ConfigError("noise.censor_sigmas must be finite");
      if (!(data.line_correlation >= 0.0 && data.line_correlation <= 1.0))
        throw ConfigError("data.line_correlation must lie in [0, 1]");
      if (!(data.truth_half_width >= 0.0 && data.truth_half_width <= 0.35))
        throw ConfigError("data.truth_half_width must lie in [0, 0.35]");
    }
  }
};

// ---------------------------------------------------------------------------
// JSON round trip

inline json to_json(const ExperimentConfig& c) {
  return {
      {"experiment", c.experiment},
      {"scale", c.scale},
      {"seed", c.seed},
      {"out", c.out},
      {"data_dir", c.data_dir},
      {"threads", c.threads},
      {"data",
       {{"scene_seed", c.data.scene_seed},
        {"modes", c.data.modes},
        {"unknowns", c.data.unknowns},
        {"anchors", c.data.anchors},
        {"rows", c.data.rows},
        {"cols", c.data.cols},
        {"dim", c.data.dim},
        {"channels", c.data.channels},
        {"decade_lo", c.data.decade_lo},
        {"decade_hi", c.data.decade_hi},
        {"box_half_width", c.data.box_half_width},
        {"line_correlation", c.data.line_correlation},
        {"truth_half_width", c.data.truth_half_width}}},
      {"noise", {{"sigma_a", c.noise.sigma_a}, {"sigma_m", c.noise.sigma_m}, {"censor_sigmas", c.noise.censor_sigmas}}},
      {"prior", {{"delta", c.prior.delta}, {"tau", c.prior.tau}}},
      {"blend", {{"calibrate", c.blend.calibrate}, {"a0", c.blend.a0}, {"a1", c.blend.a1}}},
      {"calibration",
       {{"M", c.calibration.M},
        {"S", c.calibration.S},
        {"grid_resolution", c.calibration.grid_resolution},
        {"kde_samples", c.calibration.kde_samples}}},
      {"sampler",
       {{"p", c.sampler.p},
        {"T", c.sampler.T},
        {"burn_in", c.sampler.burn_in},
        {"epsilon", c.sampler.epsilon},
        {"alpha", c.sampler.alpha},
        {"eta", c.sampler.eta},
        {"drift_correction", c.sampler.drift_correction},
        {"adapt_epsilon", c.sampler.adapt_epsilon},
        {"target_accept", c.sampler.target_accept},
        {"K", c.sampler.K},
        {"proposal", c.sampler.proposal},
        {"thin", c.sampler.thin},
        {"checkpoint_every", c.sampler.checkpoint_every},
        {"chain_layout", c.sampler.chain_layout}}},
  };
}

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known |= k == key;
    if (!known) throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + k + "'");
  }
}

}  // namespace detail

/// Fields absent from j keep the values already in c.
inline void apply_json(ExperimentConfig& c, const json& j) {
  using detail::read_opt;
  detail::check_keys(j, {"experiment", "scale", "seed", "out", "data_dir", "threads", "data", "noise", "prior", "blend",
                         "calibration", "sampler"},
                     "");
  read_opt(j, "experiment", c.experiment);
  read_opt(j, "scale", c.scale);
  read_opt(j, "seed", c.seed);
  read_opt(j, "out", c.out);
  read_opt(j, "data_dir", c.data_dir);
  read_opt(j, "threads", c.threads);
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::check_keys(d, {"scene_seed", "modes", "unknowns", "anchors", "rows", "cols", "dim", "channels", "decade_lo",
                           "decade_hi", "box_half_width", "line_correlation", "truth_half_width"},
                       "data");
    read_opt(d, "scene_seed", c.data.scene_seed);
    read_opt(d, "modes", c.data.modes);
    read_opt(d, "unknowns", c.data.unknowns);
    read_opt(d, "anchors", c.data.anchors);
    read_opt(d, "rows", c.data.rows);
    read_opt(d, "cols", c.data.cols);
    read_opt(d, "dim", c.data.dim);
    read_opt(d, "channels", c.data.channels);
    read_opt(d, "decade_lo", c.data.decade_lo);
    read_opt(d, "decade_hi", c.data.decade_hi);
    read_opt(d, "box_half_width", c.data.box_half_width);
    read_opt(d, "line_correlation", c.data.line_correlation);
    read_opt(d, "truth_half_width", c.data.truth_half_width);
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    detail::check_keys(n, {"sigma_a", "sigma_m", "censor_sigmas"}, "noise");
    read_opt(n, "sigma_a", c.noise.sigma_a);
    read_opt(n, "sigma_m", c.noise.sigma_m);
    read_opt(n, "censor_sigmas", c.noise.censor_sigmas);
  }
  if (j.contains("prior")) {
    const auto& p = j["prior"];
    detail::check_keys(p, {"delta", "tau"}, "prior");
    read_opt(p, "delta", c.prior.delta);
    read_opt(p, "tau", c.prior.tau);
  }
  if (j.contains("blend")) {
    const auto& b = j["blend"];
    detail::check_keys(b, {"calibrate", "a0", "a1"}, "blend");
    read_opt(b, "calibrate", c.blend.calibrate);
    read_opt(b, "a0", c.blend.a0);
    read_opt(b, "a1", c.blend.a1);
  }
  if (j.contains("calibration")) {
    const auto& k = j["calibration"];
    detail::check_keys(k, {"M", "S", "grid_resolution", "kde_samples"}, "calibration");
    read_opt(k, "M", c.calibration.M);
    read_opt(k, "S", c.calibration.S);
    read_opt(k, "grid_resolution", c.calibration.grid_resolution);
    read_opt(k, "kde_samples", c.calibration.kde_samples);
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    detail::check_keys(s, {"p", "T", "burn_in", "epsilon", "alpha", "eta", "drift_correction", "adapt_epsilon",
                           "target_accept", "K", "proposal", "thin", "checkpoint_every", "chain_layout"},
                       "sampler");
    if (s.contains("p") && s["p"].is_number()) {
      c.sampler.p = {s["p"].get<double>()};
    } else {
      read_opt(s, "p", c.sampler.p);
    }
    read_opt(s, "T", c.sampler.T);
    read_opt(s, "burn_in", c.sampler.burn_in);
    read_opt(s, "epsilon", c.sampler.epsilon);
    read_opt(s, "alpha", c.sampler.alpha);
    read_opt(s, "eta", c.sampler.eta);
    read_opt(s, "drift_correction", c.sampler.drift_correction);
    read_opt(s, "adapt_epsilon", c.sampler.adapt_epsilon);
    read_opt(s, "target_accept", c.sampler.target_accept);
    read_opt(s, "K", c.sampler.K);
    read_opt(s, "proposal", c.sampler.proposal);
    read_opt(s, "thin", c.sampler.thin);
    read_opt(s, "checkpoint_every", c.sampler.checkpoint_every);
    read_opt(s, "chain_layout", c.sampler.chain_layout);
  }
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  apply_json(c, j);
  return c;
}

/// "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
inline json override_patch(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json patch = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (part.empty()) throw ConfigError("--set: empty path component in '" + key + "'");
    patch = json{{part, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  return patch;
}

inline void apply_override(ExperimentConfig& c, const std::string& assignment) { apply_json(c, override_patch(assignment)); }

// ---------------------------------------------------------------------------
// Presets

inline ExperimentConfig preset(const std::string& experiment, const std::string& scale = "desk") {
  ExperimentConfig c;
  c.experiment = experiment;
  c.scale = scale;
  c.out = "out/" + experiment;
  auto& s = c.sampler;
  if (experiment == "gmm") {
    c.data.scene_seed = 1;
    s.p = {0.1, 0.9};
    s.T = 10000;
    s.burn_in = 100;
    s.epsilon = 0.5;
    s.K = 50;
    s.proposal = "smooth_uniform";
    c.blend.calibrate = false;
  } else if (experiment == "sensors") {
    c.data.scene_seed = 1770;  // several sensors with reflection-ambiguous positions
    s.p = {0.1, 0.9};
    s.T = 30000;
    s.burn_in = 5000;
    s.epsilon = 3e-3;
    s.K = 1000;
    s.proposal = "smooth_uniform";
    c.blend.calibrate = false;
  } else if (experiment == "astro" || experiment == "custom") {
    s.p = {0.5};
    s.T = 10000;
    s.burn_in = 1500;
    s.epsilon = 1e-6;
    s.K = 50;
    s.proposal = "neighbor_subset";
    s.thin = 10;
    if (scale == "paper") {
      c.data.rows = c.data.cols = 64;
      c.calibration = {250000, 100, 20, 810000};
    }
  } else {
    throw ConfigError("unknown experiment '" + experiment + "'");
  }
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper");
  return c;
}

// ---------------------------------------------------------------------------
// Stage helpers

struct GeneratedData {
  std::optional<GmmTarget> gmm;
  std::optional<SensorScene> sensors;
  std::optional<ObservationSet> obs;
  std::optional<PolynomialSurrogate> surrogate;
  Field truth;
};

inline void write_gmm_modes(const fs::path& p, const GmmTarget& t) {
  auto os = io::open_out(p);
  os << "k,mean_1,mean_2,s11,s12,s22\n";
  for (std::size_t k = 0; k < t.modes.size(); ++k) {
    const auto& m = t.modes[k];
    os << k << "," << io::fmt(m.mean[0]) << "," << io::fmt(m.mean[1]) << "," << io::fmt(m.cov[0]) << ","
       << io::fmt(m.cov[1]) << "," << io::fmt(m.cov[2]) << "\n";
  }
}

inline std::vector<GmmMode> read_gmm_modes(const fs::path& p) {
  const auto t = io::read_csv(p);
  std::vector<GmmMode> modes;
  for (const auto& r : t.rows)
    modes.push_back({{io::parse_double(r[t.column("mean_1")]), io::parse_double(r[t.column("mean_2")])},
                     {io::parse_double(r[t.column("s11")]), io::parse_double(r[t.column("s12")]),
                      io::parse_double(r[t.column("s22")])}});
  return modes;
}

inline json box_json(const ValidityBox& b) { return {{"lower", b.lower}, {"upper", b.upper}}; }
inline ValidityBox box_from_json(const json& j) {
  return {j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>()};
}

/// Writes the data files of the configured experiment and returns what was written.
inline GeneratedData cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = cfg.data_path();
  GeneratedData g;
  json meta{{"experiment", cfg.experiment}, {"scene_seed", cfg.data.scene_seed}, {"seed", cfg.seed}};
  if (cfg.experiment == "gmm") {
    g.gmm = make_gmm_target(cfg.data.scene_seed, cfg.data.modes);
    const auto m = gmm_mixture_mean(*g.gmm);
    g.truth = Field(1, 2);
    g.truth(0, 0) = m[0];
    g.truth(0, 1) = m[1];
    write_gmm_modes(dir / "modes.csv", *g.gmm);
    io::write_field(dir / "truth.csv", g.truth);
    meta["box"] = box_json(g.gmm->box);
    meta["delta"] = g.gmm->delta;
  } else if (cfg.experiment == "sensors") {
    g.sensors = make_sensor_scene(cfg.data.scene_seed, cfg.data.unknowns, cfg.data.anchors);
    const auto& s = *g.sensors;
    g.truth = s.truth;
    ObservationSet obs;
    obs.pixels = s.unknowns();
    obs.channels = s.channels();
    obs.y = s.y;
    obs.censored = s.censored;
    io::write_observations(dir / "observations.csv", obs);
    io::write_field(dir / "truth.csv", s.truth);
    io::write_field(dir / "anchors.csv", s.anchors, "a");
    meta["box"] = box_json(s.box);
    meta["delta"] = s.delta;
    meta["R"] = s.R;
    meta["sigma_eps"] = s.sigma_eps;
    meta["pixels"] = obs.pixels;
    meta["channels"] = obs.channels;
  } else if (cfg.experiment == "astro") {
    const ValidityBox box = cfg.astro_box();
    const NoiseModel noise = cfg.noise_model();
    g.surrogate = make_synthetic_surrogate(cfg.data.dim, cfg.data.channels, {cfg.data.decade_lo, cfg.data.decade_hi},
                                           box, cfg.data.scene_seed, 0.25, PolynomialSurrogate::kMaxDegree,
                                           cfg.data.line_correlation);
    if (cfg.data.truth_half_width > 0.0) {
      auto placed = place_smooth_truth(cfg.data.rows, cfg.data.cols, *g.surrogate, box, noise.omega,
                                       cfg.data.truth_half_width, cfg.data.scene_seed);
      g.truth = std::move(placed.truth);
      meta["truth_box"] = box_json(placed.region);
    } else {
      g.truth = make_smooth_truth(cfg.data.rows, cfg.data.cols, box, cfg.data.scene_seed);
    }
    g.obs = generate_observations(g.truth, *g.surrogate, noise, cfg.seed);
    io::write_surrogate(dir / "surrogate.csv", *g.surrogate);
    io::write_field(dir / "truth.csv", g.truth);
    io::write_observations(dir / "observations.csv", *g.obs);
    const auto [lo, hi] = snr_range_db(g.truth, *g.surrogate, noise.sigma_a);
    std::size_t heavy = 0;
    for (std::size_t n = 0; n < g.obs->pixels; ++n) heavy += g.obs->censored_fraction(n) > 0.5;
    meta["box"] = box_json(box);
    meta["rows"] = cfg.data.rows;
    meta["cols"] = cfg.data.cols;
    meta["pixels"] = g.obs->pixels;
    meta["channels"] = g.obs->channels;
    meta["noise"] = {{"sigma_a", noise.sigma_a}, {"sigma_m", noise.sigma_m}, {"omega", noise.omega}};
    meta["snr_db"] = {lo, hi};
    meta["pixels_over_half_censored"] = heavy;
  } else {
    throw ConfigError("generate: custom experiments read existing data files");
  }
  io::write_json(dir / "metadata.json", meta);
  return g;
}

struct ChannelCalibration {
  BlendPair a;
  double phi = 0.0;
  double phi_additive = 0.0;        // best cell with a0 above the z range
  double phi_multiplicative = 0.0;  // best cell with a1 below the z range
  std::uint64_t seed = 0;
};

/// Prior draws of z_l = P_l(theta), theta smooth-uniform on the box.
inline std::vector<std::vector<double>> prior_log_forward_samples(const PolynomialSurrogate& fm, const ValidityBox& box,
                                                                  double delta, std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<double>> zs(fm.channels(), std::vector<double>(count));
  Engine rng = keyed_engine(seed, 0, Stream::kKde);
  std::vector<double> x(fm.dim()), z(fm.channels());
  for (std::size_t i = 0; i < count; ++i) {
    sample_smooth_box(delta, box, rng, x);
    fm.evaluate_values(x, z);
    for (std::size_t l = 0; l < z.size(); ++l) zs[l][i] = z[l];
  }
  return zs;
}

inline CalibrationConfig channel_calibration_config(const ExperimentConfig& cfg, std::span<const double> z_samples,
                                                    std::size_t channel) {
  auto c = make_calibration_config(z_samples, cfg.calibration.M, cfg.calibration.S, cfg.calibration.grid_resolution,
                                   splitmix64(cfg.seed + channel));
  c.threads = cfg.effective_threads();
  return c;
}

inline ChannelCalibration calibrate_one(const CalibrationConfig& c, const NoiseModel& noise) {
  const auto r = calibrate_channel(c, noise);
  ChannelCalibration out{r.a, r.phi, kInf, kInf, c.seed};
  for (std::size_t k = 0; k < c.a_grid.size(); ++k) {
    if (c.a_grid[k].a0 > c.z_grid.back()) out.phi_additive = std::min(out.phi_additive, r.phi_grid[k]);
    if (c.a_grid[k].a1 < c.z_grid.front()) out.phi_multiplicative = std::min(out.phi_multiplicative, r.phi_grid[k]);
  }
  return out;
}

/// Per-channel thresholds; returns nothing (and writes nothing) for gmm and sensors.
inline std::optional<std::vector<ChannelCalibration>> cmd_calibrate(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.astro_like()) return std::nullopt;
  const auto fm = io::read_surrogate(cfg.data_path() / "surrogate.csv");
  const ValidityBox box = cfg.astro_box();
  if (fm.dim() != box.dim()) throw ConfigError("calibrate: surrogate dimension does not match data.dim");
  const auto zs = prior_log_forward_samples(fm, box, cfg.prior.delta, cfg.calibration.kde_samples, cfg.seed);
  const NoiseModel noise = cfg.noise_model();
  std::vector<ChannelCalibration> out;
  json j{{"channels", json::array()}};
  for (std::size_t l = 0; l < fm.channels(); ++l) {
    const auto c = channel_calibration_config(cfg, zs[l], l);
    out.push_back(calibrate_one(c, noise));
    const auto& r = out.back();
    j["channels"].push_back({{"a0", r.a.a0},
                             {"a1", r.a.a1},
                             {"phi", r.phi},
                             {"phi_additive", r.phi_additive},
                             {"phi_multiplicative", r.phi_multiplicative},
                             {"grid_resolution", c.grid_resolution},
                             {"M", c.M},
                             {"S", c.S},
                             {"seed", c.seed}});
  }
  io::write_json(cfg.calibration_path(), j);
  return out;
}

inline LikelihoodBlend load_blend(const ExperimentConfig& cfg, std::size_t channels) {
  LikelihoodBlend b;
  if (cfg.blend.calibrate) {
    const json j = io::read_json(cfg.calibration_path());
    for (const auto& ch : j.at("channels")) b.a.push_back({ch.at("a0").get<double>(), ch.at("a1").get<double>()});
  } else {
    for (std::size_t l = 0; l < cfg.blend.a0.size(); ++l) b.a.push_back({cfg.blend.a0[l], cfg.blend.a1[l]});
  }
  b.validate(channels);
  return b;
}

inline GmmPosterior load_gmm(const ExperimentConfig& cfg) {
  const json meta = io::read_json(cfg.data_path() / "metadata.json");
  GmmTarget t;
  t.modes = read_gmm_modes(cfg.data_path() / "modes.csv");
  t.box = box_from_json(meta.at("box"));
  t.delta = meta.at("delta").get<double>();
  return GmmPosterior(std::move(t));
}

inline SensorPosterior load_sensors(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.data_path();
  const json meta = io::read_json(dir / "metadata.json");
  SensorScene s;
  s.truth = io::read_field(dir / "truth.csv");
  s.anchors = io::read_field(dir / "anchors.csv");
  s.box = box_from_json(meta.at("box"));
  s.delta = meta.at("delta").get<double>();
  s.R = meta.at("R").get<double>();
  s.sigma_eps = meta.at("sigma_eps").get<double>();
  const auto obs = io::read_observations(dir / "observations.csv", NoiseModel{});
  if (obs.pixels != s.unknowns() || obs.channels != s.channels())
    throw IoError("sensor observations do not match the scene shape");
  s.y = obs.y;
  s.censored = obs.censored;
  return SensorPosterior(std::move(s));
}

inline AstroPosterior load_astro(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.data_path();
  auto fm = io::read_surrogate(dir / "surrogate.csv");
  auto obs = io::read_observations(dir / "observations.csv", cfg.noise_model());
  const ValidityBox box = cfg.astro_box();
  if (obs.pixels != cfg.data.rows * cfg.data.cols) throw ConfigError("observations do not match data.rows x data.cols");
  auto blend = load_blend(cfg, fm.channels());
  PriorConfig prior{cfg.prior.delta, cfg.prior.tau, NeighborGraph::grid(cfg.data.rows, cfg.data.cols)};
  AstroPosterior m(std::move(obs), std::move(fm), std::move(blend), std::move(prior), box);
  m.set_threads(cfg.effective_threads());
  return m;
}

inline HybridConfig hybrid_config(const ExperimentConfig& cfg, double p, const MtmProposal& proposal) {
  HybridConfig h;
  h.p = p;
  h.pmala = {cfg.sampler.epsilon, cfg.sampler.alpha, cfg.sampler.eta, cfg.sampler.drift_correction};
  h.mtm = {cfg.sampler.K, proposal};
  h.T = cfg.sampler.T;
  h.burn_in = cfg.sampler.burn_in;
  h.adapt_epsilon = cfg.sampler.adapt_epsilon;
  h.target_accept = cfg.sampler.target_accept;
  h.threads = cfg.effective_threads();
  return h;
}

/// Independent smooth-uniform draws per pixel.
inline Field initial_field(std::size_t pixels, const ValidityBox& box, double delta, std::uint64_t seed) {
  Field f(pixels, box.dim());
  Engine rng = keyed_engine(seed, 0, Stream::kInit);
  for (std::size_t n = 0; n < pixels; ++n) sample_smooth_box(delta, box, rng, f.row(n));
  return f;
}

struct RunSummary {
  double p = 0.0;
  std::uint64_t iterations = 0;
  double final_epsilon = 0.0;
  double seconds = 0.0;
  bool resumed = false;
};

/// Runs one chain into dir, checkpointing every cfg.sampler.checkpoint_every
/// iterations. With resume, continues from dir/checkpoint.json and drops any
/// rows written after it.
template <PosteriorModel M>
RunSummary run_chain(const ExperimentConfig& cfg, const M& model, const HybridConfig& h, const Field& theta0,
                     const fs::path& dir, bool resume, std::uint64_t stop_after = 0) {
  const auto start = std::chrono::steady_clock::now();
  HybridSampler<M> sampler(model, h, cfg.seed);
  RunSummary rs;
  rs.p = h.p;
  const fs::path cp_path = dir / "checkpoint.json";
  const bool from_cp = resume && fs::exists(cp_path);
  if (from_cp) {
    const Checkpoint cp = io::checkpoint_from_json(io::read_json(cp_path));
    sampler.restore(cp);
    io::truncate_after(dir / "chain.csv", cp.iteration);
    io::truncate_after(dir / "events.csv", cp.iteration);
    rs.resumed = true;
  } else {
    sampler.initialize(theta0);
  }
  io::ChainWriter writer(dir, model.pixels(), model.dim(), cfg.sampler.chain_layout, from_cp);
  while (sampler.iteration() < h.T) {
    const IterationEvent ev = sampler.step();
    writer.event(ev);
    if (ev.iteration % cfg.sampler.thin == 0) writer.sample(ev.iteration, sampler.state().theta);
    if (ev.iteration % cfg.sampler.checkpoint_every == 0 || ev.iteration == h.T) {
      writer.flush();
      io::write_json(cp_path, io::to_json(sampler.checkpoint()));
    }
    if (stop_after && ev.iteration >= stop_after) break;
  }
  writer.flush();
  rs.iterations = sampler.iteration();
  rs.final_epsilon = sampler.epsilon();
  rs.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json meta{{"config", to_json(cfg)}, {"p", h.p}, {"seed", cfg.seed}, {"iterations", rs.iterations},
            {"final_epsilon", rs.final_epsilon}, {"pixels", model.pixels()}, {"dim", model.dim()}};
  io::write_json(dir / "meta.json", meta);
  json timing{{"seconds", rs.seconds}, {"resumed", rs.resumed}, {"threads", h.threads}};
  io::write_json(dir / "timing.json", timing);
  return rs;
}

/// Samples every configured p. stop_after > 0 interrupts each chain after
/// that many iterations (used to exercise resume).
inline std::vector<RunSummary> cmd_sample(const ExperimentConfig& cfg, bool resume = false,
                                          std::uint64_t stop_after = 0) {
  cfg.validate();
  std::vector<RunSummary> out;
  const auto run_all = [&](const auto& model, const MtmProposal& q, const ValidityBox& box, double delta) {
    const Field init = initial_field(model.pixels(), box, delta, cfg.seed);
    for (double p : cfg.sampler.p)
      out.push_back(run_chain(cfg, model, hybrid_config(cfg, p, q), init, cfg.run_path(p), resume, stop_after));
  };
  if (cfg.experiment == "gmm") {
    const GmmPosterior model = load_gmm(cfg);
    const auto& t = model.target();
    if (cfg.sampler.proposal != "smooth_uniform") throw ConfigError("gmm: only the smooth_uniform proposal applies");
    run_all(model, SmoothUniformProposal{t.box, t.delta}, t.box, t.delta);
  } else if (cfg.experiment == "sensors") {
    const SensorPosterior model = load_sensors(cfg);
    const auto& s = model.scene();
    MtmProposal q = SmoothUniformProposal{s.box, s.delta};
    if (cfg.sampler.proposal == "neighbor_subset") throw ConfigError("sensors: only the smooth_uniform proposal applies");
    run_all(model, q, s.box, s.delta);
  } else {
    const AstroPosterior model = load_astro(cfg);
    MtmProposal q = cfg.sampler.proposal == "neighbor_subset"
                        ? MtmProposal{NeighborSubsetProposal{cfg.prior.tau, model.graph()}}
                        : MtmProposal{SmoothUniformProposal{model.box(), cfg.prior.delta}};
    run_all(model, q, model.box(), cfg.prior.delta);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnose

struct RunDiagnostics {
  double p = 0.0;
  ChainStats stats;
  double mtm_acceptance = 0.0, pmala_acceptance = 0.0, mtm_fraction = 0.0;
  std::optional<ModeOccupancy> occupancy;       // gmm
  std::vector<std::size_t> mode_counts;         // sensors, one per unknown
  std::vector<double> censored_fraction;        // astro, one per pixel
};

inline double kernel_acceptance(const std::vector<IterationEvent>& ev, Kernel k, std::uint64_t burn_in) {
  double a = 0.0, n = 0.0;
  for (const auto& e : ev)
    if (e.iteration > burn_in && e.kernel == k) {
      a += static_cast<double>(e.accepted);
      n += static_cast<double>(e.attempts);
    }
  return n > 0.0 ? a / n : 0.0;
}

/// Mode radius for occupancy: three standard deviations along the widest axis.
inline double gmm_mode_radius(const GmmTarget& t) {
  double r = 0.0;
  for (const auto& m : t.modes) {
    const double tr = m.cov[0] + m.cov[2], det = m.cov[0] * m.cov[2] - m.cov[1] * m.cov[1];
    const double lmax = 0.5 * tr + std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
    r = std::max(r, 3.0 * std::sqrt(lmax));
  }
  return r;
}

inline std::vector<RunDiagnostics> cmd_diagnose(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir = cfg.data_path();
  const Field truth = io::read_field(dir / "truth.csv");
  std::vector<RunDiagnostics> out;
  std::vector<SamplerRow> rows;
  const std::size_t threads = cfg.effective_threads();

  ValidityBox box;
  std::optional<GmmTarget> gmm;
  std::vector<double> cens;
  if (cfg.experiment == "gmm") {
    gmm = load_gmm(cfg).target();
    box = gmm->box;
  } else if (cfg.experiment == "sensors") {
    box = box_from_json(io::read_json(dir / "metadata.json").at("box"));
  } else {
    box = cfg.astro_box();
    const auto obs = io::read_observations(dir / "observations.csv", cfg.noise_model());
    for (std::size_t n = 0; n < obs.pixels; ++n) cens.push_back(obs.censored_fraction(n));
  }

  for (double p : cfg.sampler.p) {
    const fs::path rd = cfg.run_path(p);
    const auto loaded = io::read_chain(rd, truth.pixels(), truth.dim());
    const ChainRecord rec = io::recorded_after(loaded, cfg.sampler.burn_in);
    if (rec.length() == 0) throw ConfigError("diagnose: no recorded samples after burn-in in " + rd.string());
    RunDiagnostics d;
    d.p = p;
    d.stats = summarize(rec, truth, box, 0, cens, threads);
    d.mtm_acceptance = kernel_acceptance(loaded.record.events, Kernel::kMtm, cfg.sampler.burn_in);
    d.pmala_acceptance = kernel_acceptance(loaded.record.events, Kernel::kPmala, cfg.sampler.burn_in);
    d.mtm_fraction = loaded.record.kernel_fraction(Kernel::kMtm);
    d.censored_fraction = cens;
    json j = to_json(d.stats);
    j["p"] = p;
    j["acceptance"] = {{"mtm", d.mtm_acceptance}, {"pmala", d.pmala_acceptance}, {"mtm_fraction", d.mtm_fraction}};
    if (gmm) {
      std::vector<std::vector<double>> centers;
      for (const auto& m : gmm->modes) centers.push_back({m.mean[0], m.mean[1]});
      d.occupancy = mode_occupancy(rec, centers, gmm_mode_radius(*gmm));
      j["mode_occupancy"] = {{"fractions", d.occupancy->fractions},
                             {"unassigned", d.occupancy->unassigned},
                             {"radius", gmm_mode_radius(*gmm)}};
    }
    if (cfg.experiment == "sensors") {
      for (std::size_t n = 0; n < rec.pixels; ++n) {
        const auto xs = rec.coordinate(2 * n), ys = rec.coordinate(2 * n + 1);
        d.mode_counts.push_back(
            count_modes_2d(xs, ys, {box.lower[0], box.lower[1]}, {box.upper[0], box.upper[1]}));
      }
      j["mode_counts"] = d.mode_counts;
    }
    io::write_json(rd / "stats.json", j);
    rows.push_back({"p=" + io::fmt(p), d.stats});
    out.push_back(std::move(d));
  }

  if (cfg.experiment == "gmm") {
    auto os = io::open_out(cfg.tables_path() / "table_bias_ess.csv");
    write_bias_ess_table(os, rows);
  } else if (cfg.experiment == "sensors") {
    auto os = io::open_out(cfg.tables_path() / "table_ess_range.csv");
    write_ess_range_table(os, rows);
  } else {
    for (const auto& r : rows) {
      auto os = io::open_out(cfg.tables_path() / ("table_maps_" + r.label.substr(2) + ".csv"));
      write_map_table(os, r.stats);
    }
  }
  return out;
}

/// generate, calibrate (astro only), sample, diagnose.
inline std::vector<RunDiagnostics> reproduce(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  const auto say = [&](const std::string& s) {
    if (log) *log << s << std::endl;
  };
  say("generate -> " + cfg.data_path().string());
  cmd_generate(cfg);
  if (cfg.astro_like() && cfg.blend.calibrate) {
    say("calibrate -> " + cfg.calibration_path().string());
    cmd_calibrate(cfg);
  }
  say("sample -> " + (cfg.root() / "runs").string());
  cmd_sample(cfg);
  say("diagnose -> " + cfg.tables_path().string());
  return cmd_diagnose(cfg);
}

}  // namespace mixnoise
