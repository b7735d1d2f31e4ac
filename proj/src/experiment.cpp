#include "kflearn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "kflearn/diagnostics.hpp"
#include "kflearn/errors.hpp"
#include "kflearn/learner.hpp"
#include "kflearn/parallel.hpp"
#include "kflearn/rng.hpp"

namespace kflearn {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json numbers_json(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number_json(x));
  return out;
}

std::filesystem::path ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) fail(ErrorCode::io, "cannot create output directory '" + dir + "'");
  return std::filesystem::path(dir);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) fail(ErrorCode::io, "write failed for '" + path.string() + "'");
}

// Column-oriented table written as CSV or as a JSON object of arrays.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<bool> integral;

  std::string csv() const {
    std::string out;
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ",";
        if (integral[c]) {
          out += std::to_string(static_cast<long long>(row[c]));
        } else {
          out += format_double(row[c]);
        }
      }
      out += "\n";
    }
    return out;
  }

  json as_json() const {
    json out = json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      json col = json::array();
      for (const auto& row : rows) {
        if (integral[c]) {
          col.push_back(static_cast<long long>(row[c]));
        } else {
          col.push_back(number_json(row[c]));
        }
      }
      out[columns[c]] = col;
    }
    return out;
  }
};

std::vector<std::string> write_table(const std::filesystem::path& dir, const std::string& stem, const Table& table,
                                     const ArtifactOptions& options, const json& extra = json::object()) {
  std::vector<std::string> files;
  if (options.csv) {
    const auto path = dir / (stem + ".csv");
    write_file(path, table.csv());
    files.push_back(path.string());
  }
  if (options.json) {
    json j = extra;
    j["columns"] = table.columns;
    j["data"] = table.as_json();
    const auto path = dir / (stem + ".json");
    write_file(path, j.dump(2) + "\n");
    files.push_back(path.string());
  }
  return files;
}

std::string run_stem(std::size_t batch, std::size_t horizon, std::uint64_t seed) {
  return "run_M" + std::to_string(batch) + "_T" + std::to_string(horizon) + "_seed" + std::to_string(seed);
}

std::string cell_stem(std::size_t batch, std::size_t horizon) {
  return "aggregate_M" + std::to_string(batch) + "_T" + std::to_string(horizon);
}

Table run_table(const RunRecord& rec, double j_star, double j0, bool timing) {
  Table t;
  t.columns = {"iter", "J", "J_gap", "J_gap_normalized", "grad_norm", "rho", "eta_effective", "safeguard_flag", "wall_ms"};
  t.integral = {true, false, false, false, false, false, false, true, false};
  const double denom = j0 - j_star;
  for (std::size_t k = 0; k < rec.size(); ++k) {
    const double gap = rec.costs[k] - j_star;
    const double wall = timing ? std::chrono::duration<double, std::milli>(rec.wall_times[k]).count() : 0.0;
    t.rows.push_back({static_cast<double>(k), rec.costs[k], gap, gap / denom, rec.grad_norms[k], rec.rhos[k],
                      rec.step_sizes[k], rec.rejections[k] > 0 ? 1.0 : 0.0, wall});
  }
  return t;
}

std::vector<double> normalized_gaps(const RunRecord& rec, double j_star, double j0) {
  std::vector<double> out;
  for (double c : rec.costs) out.push_back((c - j_star) / (j0 - j_star));
  return out;
}

CellSummary aggregate(std::size_t batch, std::size_t horizon, const std::vector<std::vector<double>>& gaps,
                      std::size_t length) {
  CellSummary cell;
  cell.batch_size = batch;
  cell.horizon = horizon;
  for (std::size_t k = 0; k < length; ++k) {
    std::vector<double> values;
    for (const auto& g : gaps) {
      if (k < g.size()) values.push_back(g[k]);
    }
    const double n = static_cast<double>(values.size());
    double mean = kNaN;
    double se = kNaN;
    if (!values.empty()) {
      mean = pairwise_sum(std::span<const double>(values)) / n;
      if (values.size() > 1) {
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        se = std::sqrt(var / (n - 1.0) / n);
      }
    }
    cell.mean_gap.push_back(mean);
    cell.stderr_gap.push_back(se);
    cell.runs.push_back(values.size());
  }
  const std::size_t start = length - std::max<std::size_t>(1, length / 5);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = start; k < length; ++k) {
    if (std::isfinite(cell.mean_gap[k])) {
      sum += cell.mean_gap[k];
      ++count;
    }
  }
  cell.plateau = count ? sum / static_cast<double>(count) : kNaN;
  return cell;
}

Table cell_table(const CellSummary& cell) {
  Table t;
  t.columns = {"iter", "mean_gap_normalized", "stderr_gap_normalized", "runs"};
  t.integral = {true, false, false, true};
  for (std::size_t k = 0; k < cell.mean_gap.size(); ++k) {
    t.rows.push_back({static_cast<double>(k), cell.mean_gap[k], cell.stderr_gap[k], static_cast<double>(cell.runs[k])});
  }
  return t;
}

}  // namespace

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

OracleReport oracle_report(const ExperimentConfig& cfg) {
  const SystemModel model = cfg.system_model();
  const SteadyStateSolution sol = steady_state_gain(model);
  OracleReport out;
  out.l_star = sol.gain.gain();
  out.p_inf = sol.p_inf;
  out.rho = sol.gain.rho();
  out.j_star = cost_J(model, sol.gain);
  out.iterations = sol.iterations;
  return out;
}

std::string to_json(const OracleReport& report) {
  json j;
  j["L_star"] = matrix_json(report.l_star);
  j["P_inf"] = matrix_json(report.p_inf);
  j["rho"] = report.rho;
  j["J_star"] = report.j_star;
  j["riccati_iterations"] = report.iterations;
  return j.dump(2) + "\n";
}

std::string to_csv(const OracleReport& report) {
  std::string out = "quantity,row,col,value\n";
  auto emit = [&](const std::string& name, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        out += name + "," + std::to_string(i) + "," + std::to_string(j) + "," + format_double(m(i, j)) + "\n";
      }
    }
  };
  emit("L_star", report.l_star);
  emit("P_inf", report.p_inf);
  out += "rho,0,0," + format_double(report.rho) + "\n";
  out += "J_star,0,0," + format_double(report.j_star) + "\n";
  return out;
}

DualityReport run_duality(const ExperimentConfig& cfg) {
  const SystemModel model = cfg.system_model();
  const GainMatrix gain =
      cfg.duality.gain ? GainMatrix(model.A(), model.H(), *cfg.duality.gain) : cfg.initial_gain();
  return duality_check(model, cfg.noise_config(), gain, cfg.duality.horizon, cfg.duality.samples, cfg.duality.seed,
                       cfg.workers);
}

std::string to_json(const DualityReport& report, const Matrix& gain) {
  json j;
  j["gain"] = matrix_json(gain);
  j["horizon"] = report.horizon;
  j["samples"] = report.samples;
  j["lhs"] = report.lhs;
  j["lhs_stderr"] = report.lhs_stderr;
  j["adjoint_cost_sum"] = report.adjoint_cost_sum;
  j["rhs"] = report.rhs;
  j["truncated_cost"] = report.truncated_cost;
  j["identity_gap"] = report.identity_gap;
  j["z_score"] = report.lhs_stderr > 0.0 ? (report.lhs - report.rhs) / report.lhs_stderr : 0.0;
  return j.dump(2) + "\n";
}

std::string to_csv(const DualityReport& report) {
  std::string out = "horizon,samples,lhs,lhs_stderr,adjoint_cost_sum,rhs,truncated_cost,identity_gap\n";
  out += std::to_string(report.horizon) + "," + std::to_string(report.samples) + "," + format_double(report.lhs) + "," +
         format_double(report.lhs_stderr) + "," + format_double(report.adjoint_cost_sum) + "," +
         format_double(report.rhs) + "," + format_double(report.truncated_cost) + "," +
         format_double(report.identity_gap) + "\n";
  return out;
}

ArtifactOptions artifact_options(const ExperimentConfig& cfg) {
  return ArtifactOptions{cfg.output.directory, cfg.output.csv, cfg.output.json};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ArtifactOptions& options) {
  const SystemModel model = cfg.system_model();
  const NoiseConfig noise = cfg.noise_config();
  const TrajectorySimulator simulator(model, noise);
  const OracleReport oracle = oracle_report(cfg);
  const GainMatrix l0 = cfg.initial_gain();
  const auto dir = ensure_directory(options.directory);

  ExperimentResult result;
  result.l_star = oracle.l_star;
  result.j_star = oracle.j_star;
  result.l0 = l0.gain();
  result.j0 = cost_J(model, l0);

  struct Job {
    std::size_t batch, horizon;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  if (cfg.learner.method == LearnMethod::sgd) {
    for (std::size_t mb : cfg.sweep.batch_sizes) {
      for (std::size_t t : cfg.sweep.horizons) {
        for (std::uint64_t s : cfg.sweep.seeds) jobs.push_back({mb, t, s});
      }
    }
  } else {
    jobs.push_back({0, 0, 0});
  }

  std::vector<RunSummary> runs(jobs.size());
  std::vector<std::vector<double>> gaps(jobs.size());
  std::vector<std::vector<std::string>> files(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    RunSummary& summary = runs[i];
    summary.batch_size = job.batch;
    summary.horizon = job.horizon;
    summary.seed = job.seed;
    RunRecord rec;
    try {
      if (cfg.learner.method == LearnMethod::sgd) {
        SgdConfig sgd = cfg.learner.sgd;
        sgd.batch_size = job.batch;
        sgd.horizon = job.horizon;
        sgd.seed = job.seed;
        sgd.workers = 1;
        sgd.record_timing = cfg.output.timing;
        rec = sgd_run(simulator, l0, sgd, &model);
      } else {
        rec = gd_run(model, l0, cfg.learner.gd);
      }
    } catch (const StallError& e) {
      rec = e.partial();
      summary.error = e.what();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::io) throw;
      summary.error = e.what();
    }
    if (rec.size() == 0) return;
    summary.iterations = rec.size() - 1;
    for (std::size_t r : rec.rejections) summary.rejections += r;
    for (double rho : rec.rhos) summary.unstable_iterates += rho >= 1.0 ? 1 : 0;
    summary.final_gain = rec.iterates.back().gain();
    gaps[i] = normalized_gaps(rec, oracle.j_star, result.j0);
    summary.final_gap_normalized = gaps[i].back();
    const std::string stem =
        cfg.learner.method == LearnMethod::sgd ? run_stem(job.batch, job.horizon, job.seed) : "run_gd";
    const json extra = {{"batch_size", job.batch}, {"horizon", job.horizon}, {"seed", job.seed}};
    files[i] = write_table(dir, stem, run_table(rec, oracle.j_star, result.j0, cfg.output.timing), options, extra);
  });

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    result.files.insert(result.files.end(), files[i].begin(), files[i].end());
    if (!runs[i].error.empty()) ++result.failures;
  }

  // Aggregates after every run has finished.
  if (cfg.learner.method == LearnMethod::sgd) {
    const std::size_t length = cfg.learner.sgd.max_iters + 1;
    std::size_t i = 0;
    for (std::size_t mb : cfg.sweep.batch_sizes) {
      for (std::size_t t : cfg.sweep.horizons) {
        std::vector<std::vector<double>> cell_gaps;
        for (std::size_t s = 0; s < cfg.sweep.seeds.size(); ++s, ++i) cell_gaps.push_back(gaps[i]);
        CellSummary cell = aggregate(mb, t, cell_gaps, length);
        const auto written = write_table(dir, cell_stem(mb, t), cell_table(cell), options,
                                         {{"batch_size", mb}, {"horizon", t}, {"plateau", number_json(cell.plateau)}});
        result.files.insert(result.files.end(), written.begin(), written.end());
        result.cells.push_back(std::move(cell));
      }
    }
  }

  if (cfg.output.trajectory_horizon > 0) {
    for (std::uint64_t s : cfg.sweep.seeds) {
      std::ostringstream os;
      write_trajectory_csv(os, simulator.run(cfg.output.trajectory_horizon, s, false));
      const auto path = dir / ("trajectory_T" + std::to_string(cfg.output.trajectory_horizon) + "_seed" +
                               std::to_string(s) + ".csv");
      write_file(path, os.str());
      result.files.push_back(path.string());
    }
  }

  json meta;
  meta["version"] = KFLEARN_VERSION_STRING;
  meta["config_hash"] = config_hash(cfg);
  meta["config_source"] = cfg.source;
  meta["method"] = to_string(cfg.learner.method);
  meta["seeds"] = cfg.sweep.seeds;
  meta["batch_sizes"] = cfg.sweep.batch_sizes;
  meta["horizons"] = cfg.sweep.horizons;
  meta["seed_derivation"] = "batch k of a run with seed S uses derive_seed(S, k); trajectory i of that batch uses "
                            "derive_seed(derive_seed(S, k), i); derive_seed(s, i) = splitmix64(s ^ splitmix64(i + "
                            "0x9E3779B97F4A7C15))";
  meta["L_star"] = matrix_json(oracle.l_star);
  meta["J_star"] = oracle.j_star;
  meta["rho_star"] = oracle.rho;
  meta["L0"] = matrix_json(result.l0);
  meta["J0"] = result.j0;
  meta["rho0"] = l0.rho();
  meta["normalized_gap"] = "(J(L_k) - J(L*)) / (J(L0) - J(L*))";
  meta["timing"] = cfg.output.timing;
  json cells = json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"batch_size", c.batch_size},
                     {"horizon", c.horizon},
                     {"plateau", number_json(c.plateau)},
                     {"final_mean_gap", number_json(c.mean_gap.back())}});
  }
  meta["cells"] = cells;
  json run_list = json::array();
  for (const auto& r : runs) {
    run_list.push_back({{"batch_size", r.batch_size},
                        {"horizon", r.horizon},
                        {"seed", r.seed},
                        {"iterations", r.iterations},
                        {"rejections", r.rejections},
                        {"unstable_iterates", r.unstable_iterates},
                        {"final_gap_normalized", number_json(r.final_gap_normalized)},
                        {"final_gain", matrix_json(r.final_gain)},
                        {"error", r.error.empty() ? json(nullptr) : json(r.error)}});
  }
  meta["runs"] = run_list;
  meta["failures"] = result.failures;
  result.metadata_json = meta.dump(2) + "\n";
  const auto meta_path = dir / "metadata.json";
  write_file(meta_path, result.metadata_json);
  result.files.push_back(meta_path.string());
  result.runs = std::move(runs);
  return result;
}

namespace {

json decay_json(const DecayReport& r) {
  json notes = r.notes;
  return {{"x", r.xs},
          {"error", numbers_json(r.errors)},
          {"stderr", numbers_json(r.stderrs)},
          {"fitted_slope", number_json(r.fitted_slope)},
          {"fit_r2", number_json(r.fit_r2)},
          {"reference_slope", number_json(r.reference_slope)},
          {"fit_points", r.fit_points},
          {"floor_reached", r.floor_reached},
          {"bound_constant", number_json(r.bound_constant)},
          {"bound", numbers_json(r.bound_values)},
          {"bound_holds", r.bound_holds},
          {"monotone", r.monotone},
          {"passed", r.passed},
          {"notes", notes}};
}

Table decay_table(const DecayReport& r, const std::string& x_name, const std::string& y_name) {
  Table t;
  t.columns = {x_name, y_name, "stderr", "bound"};
  t.integral = {true, false, false, false};
  for (std::size_t i = 0; i < r.xs.size(); ++i) t.rows.push_back({r.xs[i], r.errors[i], r.stderrs[i], r.bound_values[i]});
  return t;
}

}  // namespace

DiagnoseResult diagnose(const ExperimentConfig& cfg, const ArtifactOptions& options) {
  const SystemModel model = cfg.system_model();
  const NoiseConfig noise = cfg.noise_config();
  const DiagnoseSpec& spec = cfg.diagnose;
  const OracleReport oracle = oracle_report(cfg);
  const GainMatrix l0 = cfg.initial_gain();
  const bool write = !options.directory.empty();
  std::filesystem::path dir;
  if (write) dir = ensure_directory(options.directory);
  ArtifactOptions csv_only = options;
  csv_only.json = false;
  csv_only.csv = true;

  DiagnoseResult result;
  json report;
  report["version"] = KFLEARN_VERSION_STRING;
  report["config_hash"] = config_hash(cfg);
  report["seed"] = spec.seed;

  // Representative gains: the initial gain, the midpoint to L*, and L*.
  std::vector<std::pair<std::string, GainMatrix>> gains;
  json gain_info = json::object();
  for (const auto& name : spec.gains) {
    Matrix g;
    if (name == "initial") {
      g = l0.gain();
    } else if (name == "optimal") {
      g = oracle.l_star;
    } else {
      g = 0.5 * (l0.gain() + oracle.l_star);
    }
    GainMatrix gm(model.A(), model.H(), g);
    if (!gm.is_stabilizing()) {
      gain_info[name] = {{"L", matrix_json(g)}, {"rho", gm.rho()}, {"skipped", "not stabilizing"}};
      continue;
    }
    gain_info[name] = {{"L", matrix_json(g)}, {"rho", gm.rho()}, {"J", cost_J(model, gm)}};
    gains.emplace_back(name, gm);
  }
  report["gains"] = gain_info;

  json checks = json::object();
  auto record_failure = [&](json& slot, const Error& e) {
    if (e.code() == ErrorCode::inconclusive) {
      slot = {{"status", "inconclusive"}, {"message", e.what()}};
    } else {
      slot = {{"status", "failed"}, {"message", e.what()}};
      result.passed = false;
    }
  };
  auto status = [&](bool ok) {
    if (!ok) result.passed = false;
    return ok ? "passed" : "failed";
  };
  std::uint64_t check_index = 0;

  for (const auto& check : spec.checks) {
    const std::uint64_t check_seed = derive_seed(spec.seed, check_index++);
    json out = json::object();
    if (check == "epsilon") {
      const TrajectorySimulator sim(model, noise);
      for (std::size_t g = 0; g < gains.size(); ++g) {
        const auto& [name, gain] = gains[g];
        try {
          double worst = 0.0;
          for (std::size_t i = 0; i < spec.epsilon_instances; ++i) {
            const Trajectory traj = sim.run(spec.epsilon_horizon, derive_seed(derive_seed(check_seed, g), i));
            worst = std::max(worst, epsilon_vector_form(model.A(), model.H(), gain, traj).discrepancy);
          }
          out[name] = {{"instances", spec.epsilon_instances},
                       {"horizon", spec.epsilon_horizon},
                       {"max_discrepancy", worst},
                       {"status", status(true)}};
        } catch (const Error& e) {
          record_failure(out[name], e);
        }
      }
    } else if (check == "truncation") {
      TruncationOptions topt;
      topt.source = spec.truncation_monte_carlo ? GradientSource::monte_carlo : GradientSource::closed_form;
      topt.noise = noise;
      topt.seed = check_seed;
      topt.workers = cfg.workers;
      for (const auto& [name, gain] : gains) {
        try {
          const DecayReport r = truncation_decay(model, gain, spec.truncation_horizons, topt);
          out[name] = decay_json(r);
          out[name]["status"] = status(r.passed);
          if (write) {
            auto f = write_table(dir, "truncation_" + name, decay_table(r, "T", "gap"), csv_only);
            result.files.insert(result.files.end(), f.begin(), f.end());
          }
        } catch (const Error& e) {
          record_failure(out[name], e);
        }
      }
    } else if (check == "concentration") {
      for (std::size_t g = 0; g < gains.size(); ++g) {
        const auto& [name, gain] = gains[g];
        try {
          const DecayReport r = concentration_sweep(model, noise, gain, spec.concentration_horizon, spec.batch_sizes,
                                                    spec.reps, derive_seed(check_seed, g), cfg.workers);
          out[name] = decay_json(r);
          out[name]["status"] = status(r.passed);
          if (write) {
            auto f = write_table(dir, "concentration_" + name, decay_table(r, "M", "deviation"), csv_only);
            result.files.insert(result.files.end(), f.begin(), f.end());
          }
        } catch (const Error& e) {
          record_failure(out[name], e);
        }
      }
    } else if (check == "power_bound") {
      for (const auto& [name, gain] : gains) {
        try {
          const PowerBoundReport r = power_bound_check(gain, spec.k_max);
          out[name] = {{"c_value", r.c_value},     {"radius", r.radius},   {"grid_points", r.grid_points},
                       {"k_max", r.k_max},         {"worst_ratio", r.worst_ratio}, {"worst_k", r.worst_k},
                       {"refined", r.refined},     {"status", status(true)}};
          if (write) {
            Table t;
            t.columns = {"k", "power_norm", "bound"};
            t.integral = {true, false, false};
            Matrix power = Matrix::Identity(gain.closed_loop().rows(), gain.closed_loop().cols());
            for (std::size_t k = 0; k <= spec.k_max; ++k) {
              t.rows.push_back({static_cast<double>(k), spectral_norm(power),
                                r.c_value * std::pow(r.radius, static_cast<double>(k) + 1.0)});
              power = gain.closed_loop() * power;
            }
            auto f = write_table(dir, "power_bound_" + name, t, csv_only);
            result.files.insert(result.files.end(), f.begin(), f.end());
          }
        } catch (const Error& e) {
          record_failure(out[name], e);
        }
      }
    } else if (check == "sample_sizes") {
      try {
        LandscapeConstants constants{0.0, 0.0, 0.0};
        for (const auto& [name, gain] : gains) {
          constants.C = std::max(constants.C, resolvent_constant(gain.closed_loop()).c_value);
          constants.rho = std::max(constants.rho, gain.rho());
          constants.D = std::max(constants.D, spectral_norm(gain.gain()));
        }
        if (gains.empty()) fail(ErrorCode::domain, "no stabilizing representative gain");
        const SampleRequest request;
        const SampleRequirements req = sample_requirements(constants, model.H(), noise.kappa_xi, noise.kappa_omega,
                                                           request, model.n(), model.m());
        out = {{"C", constants.C},
               {"rho", constants.rho},
               {"D", constants.D},
               {"kappa_xi", noise.kappa_xi},
               {"kappa_omega", noise.kappa_omega},
               {"s", request.s},
               {"s0", request.s0},
               {"delta", request.delta},
               {"gamma_bar", req.gamma_bar},
               {"nu", req.nu},
               {"horizon_required", req.horizon_min},
               {"batch_required", req.batch_min},
               {"horizon_configured", cfg.sweep.horizons},
               {"batch_configured", cfg.sweep.batch_sizes},
               {"status", "reported"}};
      } catch (const Error& e) {
        record_failure(out, e);
      }
    }
    checks[check] = out;
  }
  report["checks"] = checks;
  report["passed"] = result.passed;
  result.report_json = report.dump(2) + "\n";
  if (write) {
    const auto path = dir / "diagnose.json";
    write_file(path, result.report_json);
    result.files.push_back(path.string());
  }
  return result;
}

}  // namespace kflearn
