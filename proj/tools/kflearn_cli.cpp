// Command-line front end. Uses only the C interface of libkflearn.
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kflearn/kflearn.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitUsage = 64;

struct CommonOptions {
  std::string config;
  std::string preset = "mass_spring";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  bool quiet = false;
  std::optional<std::size_t> workers;
};

int exit_code(kfl_status s) {
  switch (s) {
    case KFL_OK: return kExitOk;
    case KFL_ERR_CONFIG:
    case KFL_ERR_IO:
    case KFL_ERR_INVALID_ARGUMENT: return kExitConfig;
    default: return kExitNumerical;
  }
}

int report(kfl_status s, const char* what) {
  if (s != KFL_OK) std::cerr << "kflearn-cli: " << what << " failed: " << kfl_last_error() << "\n";
  return exit_code(s);
}

void add_common(CLI::App* sub, CommonOptions& opt) {
  sub->add_option("--config", opt.config, "YAML experiment config (default: embedded preset)");
  sub->add_option("--preset", opt.preset, "embedded preset used without --config")->check(CLI::IsMember({"mass_spring"}));
  sub->add_option("--seed", opt.seed, "replace the configured seed set by this seed");
  sub->add_option("--out", opt.out, "output directory");
  sub->add_option("--format", opt.format, "output format")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--workers", opt.workers, "worker threads (0 = all cores)");
  sub->add_flag("--quiet", opt.quiet, "suppress stdout output");
}

struct ConfigHandle {
  kfl_config* ptr = nullptr;
  ~ConfigHandle() { kfl_config_free(ptr); }
};

struct Text {
  char* ptr = nullptr;
  ~Text() { kfl_string_free(ptr); }
};

kfl_format format_of(const std::string& f) {
  if (f == "csv") return KFL_FORMAT_CSV;
  if (f == "json") return KFL_FORMAT_JSON;
  return KFL_FORMAT_CONFIG;
}

kfl_status open_config(const CommonOptions& opt, ConfigHandle& cfg) {
  kfl_status s = opt.config.empty() ? kfl_config_preset(opt.preset.c_str(), &cfg.ptr)
                                    : kfl_config_load(opt.config.c_str(), &cfg.ptr);
  if (s != KFL_OK) return s;
  if (opt.seed) s = kfl_config_set_seed(cfg.ptr, *opt.seed);
  if (s == KFL_OK && opt.workers) s = kfl_config_set_workers(cfg.ptr, *opt.workers);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn the steady-state Kalman gain by stochastic gradient descent"};
  app.set_version_flag("--version", std::string(kfl_version()));
  app.require_subcommand(1, 1);

  CommonOptions opt;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> horizon;
  bool timing = false;

  CLI::App* oracle = app.add_subcommand("oracle", "steady-state gain from the Riccati recursion (JSON)");
  CLI::App* learn = app.add_subcommand("learn", "run the SGD experiment sweep and write CSV/JSON artifacts");
  CLI::App* diag = app.add_subcommand("diagnose", "truncation, concentration and certificate checks");
  CLI::App* duality = app.add_subcommand("duality-check", "estimation/control duality cross-check");
  for (CLI::App* sub : {oracle, learn, diag, duality}) add_common(sub, opt);
  learn->add_flag("--timing", timing, "record wall-clock time in the wall_ms column");
  duality->add_option("--samples", samples, "Monte-Carlo trajectories")->check(CLI::Range(std::size_t{2}, SIZE_MAX));
  duality->add_option("--horizon", horizon, "trajectory length T")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "kflearn-cli: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  ConfigHandle cfg;
  if (kfl_status s = open_config(opt, cfg); s != KFL_OK) return report(s, "config");
  const char* out_dir = opt.out.empty() ? nullptr : opt.out.c_str();
  const kfl_format format = format_of(opt.format);
  Text text;
  kfl_status s = KFL_OK;

  if (oracle->parsed()) {
    s = kfl_oracle(cfg.ptr, format, out_dir, &text.ptr);
    if (s != KFL_OK) return report(s, "oracle");
    if (!opt.quiet) std::cout << text.ptr;
  } else if (duality->parsed()) {
    if (samples) s = kfl_config_set_samples(cfg.ptr, *samples);
    if (s == KFL_OK && horizon) s = kfl_config_set_horizon(cfg.ptr, *horizon);
    if (s == KFL_OK) s = kfl_duality(cfg.ptr, format, out_dir, &text.ptr);
    if (s != KFL_OK) return report(s, "duality-check");
    if (!opt.quiet) std::cout << text.ptr;
  } else if (diag->parsed()) {
    s = kfl_diagnose(cfg.ptr, format, out_dir, &text.ptr);
    if (text.ptr && !opt.quiet) std::cout << text.ptr;
    if (s != KFL_OK) return report(s, "diagnose");
  } else if (learn->parsed()) {
    if (timing) s = kfl_config_set_timing(cfg.ptr, 1);
    if (s == KFL_OK) s = kfl_learn(cfg.ptr, format, out_dir, &text.ptr);
    if (text.ptr && !opt.quiet) std::cout << text.ptr;
    if (s != KFL_OK) return report(s, "learn");
  }
  return kExitOk;
}
