#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kflearn/learner.hpp"
#include "kflearn/linalg.hpp"
#include "kflearn/system_model.hpp"

namespace kflearn {

struct ModelSpec {
  std::optional<std::string> preset;  // "mass_spring"
  MassSpringParameters mass_spring;
  // Explicit matrices; override the preset entry by entry.
  std::optional<Matrix> a, h, q, r, p0;
  std::optional<Vector> m0;
};

struct NoiseSpec {
  NoiseFamily family = NoiseFamily::truncated_gaussian;
  std::optional<double> kappa_xi;     // empty means auto
  std::optional<double> kappa_omega;  // empty means auto
  double sigmas = 6.0;
};

enum class LearnMethod { sgd, gd };

std::string to_string(LearnMethod method);

struct LearnerSpec {
  LearnMethod method = LearnMethod::sgd;
  SgdConfig sgd;  // batch_size/horizon/seed are taken from the sweep per run
  InitOptions init;
  GdOptions gd;
};

struct SweepSpec {
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> horizons;
  std::vector<std::uint64_t> seeds;
};

struct OutputSpec {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
  bool timing = false;              // wall_ms is written as 0 unless set
  std::size_t trajectory_horizon = 0;  // > 0 exports one trajectory CSV per seed
};

struct DiagnoseSpec {
  std::vector<std::string> checks{"epsilon", "truncation", "concentration", "power_bound", "sample_sizes"};
  std::vector<std::string> gains{"initial", "midpoint", "optimal"};
  std::vector<std::size_t> truncation_horizons{5, 10, 20, 40, 80};
  bool truncation_monte_carlo = false;
  std::vector<std::size_t> batch_sizes{16, 64, 256};
  std::size_t concentration_horizon = 50;
  std::size_t reps = 50;
  std::size_t epsilon_instances = 100;
  std::size_t epsilon_horizon = 20;
  std::size_t k_max = 50;
  std::uint64_t seed = 0;
};

struct DualitySpec {
  std::size_t horizon = 50;
  std::size_t samples = 100000;
  std::optional<Matrix> gain;  // defaults to the initial gain
  std::uint64_t seed = 0;
};

/// Fully resolved experiment description. Every field has a value after
/// parsing; defaults are those of the embedded mass_spring preset.
struct ExperimentConfig {
  ModelSpec model;
  NoiseSpec noise;
  LearnerSpec learner;
  SweepSpec sweep;
  OutputSpec output;
  DiagnoseSpec diagnose;
  DualitySpec duality;
  std::size_t workers = 1;
  std::string source = "<preset>";

  SystemModel system_model() const;
  NoiseConfig noise_config() const;
  GainMatrix initial_gain() const;
};

/// Parses YAML text. Unknown keys, wrong types and invalid values raise
/// ErrorCode::config with a "source:line:col: message" description.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::string& path);

/// Names accepted by preset_config; currently only "mass_spring".
std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);
/// YAML text of an embedded preset.
const std::string& preset_text(const std::string& name);

/// Replaces the seed set with a single seed (also used for duality and diagnose).
void override_seed(ExperimentConfig& cfg, std::uint64_t seed);

/// Canonical JSON of the resolved config (sorted keys, round-trip numbers).
std::string canonical_json(const ExperimentConfig& cfg);
/// FNV-1a 64 of canonical_json, as 16 lowercase hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace kflearn
