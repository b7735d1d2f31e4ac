#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kflearn/config.hpp"
#include "kflearn/filtering.hpp"
#include "kflearn/objective.hpp"

namespace kflearn {

struct OracleReport {
  Matrix l_star;
  Matrix p_inf;
  double rho = 0.0;
  double j_star = 0.0;
  std::size_t iterations = 0;
};

OracleReport oracle_report(const ExperimentConfig& cfg);
/// {"L_star", "P_inf", "rho", "J_star", "riccati_iterations"}.
std::string to_json(const OracleReport& report);
/// Rows `quantity,row,col,value`.
std::string to_csv(const OracleReport& report);

/// duality_check at cfg.duality (gain defaults to the configured initial gain).
DualityReport run_duality(const ExperimentConfig& cfg);
std::string to_json(const DualityReport& report, const Matrix& gain);
std::string to_csv(const DualityReport& report);

struct ArtifactOptions {
  std::string directory;
  bool csv = true;
  bool json = true;
};

/// Takes directory and formats from cfg.output.
ArtifactOptions artifact_options(const ExperimentConfig& cfg);

struct RunSummary {
  std::size_t batch_size = 0;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;    // accepted iterations
  std::size_t rejections = 0;    // safeguard rejections over the run
  std::size_t unstable_iterates = 0;
  double final_gap_normalized = 0.0;
  Matrix final_gain;
  std::string error;  // empty on success
};

struct CellSummary {
  std::size_t batch_size = 0;
  std::size_t horizon = 0;
  std::vector<double> mean_gap;    // normalized gap averaged over seeds, per iteration
  std::vector<double> stderr_gap;
  std::vector<std::size_t> runs;   // seeds contributing at each iteration
  double plateau = 0.0;            // mean of mean_gap over the last 20% of iterations
};

struct ExperimentResult {
  Matrix l_star;
  double j_star = 0.0;
  Matrix l0;
  double j0 = 0.0;
  std::vector<CellSummary> cells;
  std::vector<RunSummary> runs;
  std::vector<std::string> files;
  std::size_t failures = 0;
  std::string metadata_json;
};

/// Runs every (M, T, seed) of the sweep (or one exact-gradient run when the
/// method is gd) and writes, under options.directory:
///   run_M{M}_T{T}_seed{S}.{csv,json}   iter, J, J_gap, J_gap_normalized, grad_norm,
///                                      rho, eta_effective, safeguard_flag, wall_ms
///   aggregate_M{M}_T{T}.{csv,json}     iter, mean_gap_normalized, stderr_gap_normalized, runs
///   metadata.json
/// Runs execute on cfg.workers threads; each writes its own files and the
/// aggregates are written after all runs finish. A run that stalls or fails
/// numerically keeps its partial file and is counted in `failures`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ArtifactOptions& options);

struct DiagnoseResult {
  std::string report_json;
  std::vector<std::string> files;
  bool passed = true;
};

/// Runs cfg.diagnose.checks at the representative gains and writes
/// diagnose.json plus CSV curves into options.directory (when non-empty).
/// A check that is inconclusive is reported without failing.
DiagnoseResult diagnose(const ExperimentConfig& cfg, const ArtifactOptions& options);

/// printf %.17g.
std::string format_double(double value);

}  // namespace kflearn
