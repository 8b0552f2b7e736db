// mixnoise: generate / calibrate / sample / diagnose / reproduce.
//
// Exit codes: 0 ok, 1 configuration error, 2 numerical or domain error, 3 I/O error.

#include <CLI11.hpp>
#include <iostream>

#include "mixnoise/experiment.hpp"

using namespace mixnoise;

namespace {

struct Common {
  std::string config_path, experiment, scale, out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool resume = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--scale", c.scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  app->add_option("--set", c.sets, "dotted override, e.g. sampler.T=5000 (repeatable)");
}

ExperimentConfig build_config(const Common& c) {
  ExperimentConfig cfg;
  const std::string scale = c.scale.empty() ? "desk" : c.scale;
  if (!c.config_path.empty()) {
    const json j = io::read_json(c.config_path);
    const std::string e = c.experiment.empty() ? j.value("experiment", std::string("custom")) : c.experiment;
    cfg = preset(e, j.value("scale", scale));
    apply_json(cfg, j);
  } else {
    cfg = preset(c.experiment.empty() ? "custom" : c.experiment, scale);
  }
  if (!c.experiment.empty()) cfg.experiment = c.experiment;
  if (!c.scale.empty()) cfg.scale = c.scale;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  for (const auto& s : c.sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

void print_diagnostics(const std::vector<RunDiagnostics>& ds) {
  for (const auto& d : ds) {
    std::cout << "p=" << d.p << "  samples " << d.stats.samples << "  ESS min/mean/max " << d.stats.ess_min() << " / "
              << d.stats.ess_mean() << " / " << d.stats.ess_max() << "  acceptance mtm " << d.mtm_acceptance
              << " pmala " << d.pmala_acceptance;
    if (d.stats.bias) std::cout << "  bias " << *d.stats.bias;
    std::cout << "\n";
    for (std::size_t m = 0; m < d.stats.maps.size() && !d.censored_fraction.empty(); ++m) {
      const auto& s = d.stats.maps[m];
      std::cout << "  map " << m + 1 << ": mse " << s.mse;
      if (s.rsnr_db_low_censor) std::cout << "  R-SNR(<50% censored) " << *s.rsnr_db_low_censor << " dB";
      std::cout << "  CI% " << s.ci_width_mean << "\n";
    }
    if (!d.mode_counts.empty()) {
      std::cout << "  modes per sensor:";
      for (auto k : d.mode_counts) std::cout << " " << k;
      std::cout << "\n";
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid MTM / PMALA sampling under mixed additive-multiplicative noise"};
  app.require_subcommand(1);
  Common c;

  auto* gen = app.add_subcommand("generate", "write synthetic data files");
  auto* cal = app.add_subcommand("calibrate", "select likelihood blend thresholds per channel");
  auto* smp = app.add_subcommand("sample", "run the hybrid sampler for each configured p");
  auto* dia = app.add_subcommand("diagnose", "summaries and tables from recorded chains");
  auto* rep = app.add_subcommand("reproduce", "generate, calibrate, sample and diagnose one experiment");
  for (auto* s : {gen, cal, smp, dia, rep}) add_common(s, c);
  for (auto* s : {gen, cal, smp, dia})
    s->add_option("--experiment", c.experiment, "gmm, sensors, astro or custom")
        ->check(CLI::IsMember({"gmm", "sensors", "astro", "custom"}));
  smp->add_flag("--resume", c.resume, "continue from the last checkpoint");
  rep->add_option("experiment", c.experiment, "gmm, sensors or astro")
      ->required()
      ->check(CLI::IsMember({"gmm", "sensors", "astro"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig cfg = build_config(c);
    if (*gen) {
      cmd_generate(cfg);
      std::cout << "data written to " << cfg.data_path() << "\n";
    } else if (*cal) {
      const auto r = cmd_calibrate(cfg);
      if (!r) {
        std::cout << "no calibration needed for " << cfg.experiment << "\n";
      } else {
        for (std::size_t l = 0; l < r->size(); ++l)
          std::cout << "channel " << l + 1 << ": a0 " << (*r)[l].a.a0 << "  a1 " << (*r)[l].a.a1 << "  phi "
                    << (*r)[l].phi << "\n";
      }
    } else if (*smp) {
      for (const auto& s : cmd_sample(cfg, c.resume))
        std::cout << "p=" << s.p << ": " << s.iterations << " iterations in " << s.seconds << " s"
                  << (s.resumed ? " (resumed)" : "") << "\n";
    } else if (*dia) {
      print_diagnostics(cmd_diagnose(cfg));
    } else if (*rep) {
      print_diagnostics(reproduce(cfg, &std::cout));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
