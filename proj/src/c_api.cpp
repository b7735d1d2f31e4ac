#include "kflearn/kflearn.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <new>
#include <string>

#include "kflearn/config.hpp"
#include "kflearn/errors.hpp"
#include "kflearn/experiment.hpp"
#include "kflearn/learner.hpp"
#include "kflearn/objective.hpp"

struct kfl_config {
  kflearn::ExperimentConfig cfg;
};

struct kfl_model {
  kflearn::SystemModel model;
};

struct kfl_run {
  kflearn::RunRecord record;
};

namespace {

thread_local std::string last_error;

kfl_status status_of(kflearn::ErrorCode code) {
  using kflearn::ErrorCode;
  switch (code) {
    case ErrorCode::dimension: return KFL_ERR_DIMENSION;
    case ErrorCode::instability: return KFL_ERR_INSTABILITY;
    case ErrorCode::domain: return KFL_ERR_DOMAIN;
    case ErrorCode::convergence: return KFL_ERR_CONVERGENCE;
    case ErrorCode::stall: return KFL_ERR_STALL;
    case ErrorCode::initialization: return KFL_ERR_INITIALIZATION;
    case ErrorCode::config: return KFL_ERR_CONFIG;
    case ErrorCode::io: return KFL_ERR_IO;
    case ErrorCode::inconclusive: return KFL_ERR_INCONCLUSIVE;
    case ErrorCode::diagnostic: return KFL_ERR_DIAGNOSTIC;
    case ErrorCode::numerical: return KFL_ERR_NUMERICAL;
  }
  return KFL_ERR_INTERNAL;
}

template <class Fn>
kfl_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const kflearn::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return KFL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return KFL_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return KFL_ERR_INTERNAL;
  }
}

kfl_status invalid(const char* message) {
  last_error = message;
  return KFL_ERR_INVALID_ARGUMENT;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

kflearn::Matrix read_matrix(const double* data, std::size_t rows, std::size_t cols) {
  kflearn::Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i * cols + j];
  }
  return out;
}

void write_matrix(const kflearn::Matrix& m, double* data) {
  const auto cols = static_cast<std::size_t>(m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data[static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j)] = m(i, j);
  }
}

kflearn::GainMatrix gain_of(const kfl_model* model, const double* gain) {
  const auto& sm = model->model;
  return kflearn::GainMatrix(sm.A(), sm.H(), read_matrix(gain, sm.n(), sm.m()));
}

void save_text(const char* out_dir, const std::string& name, const std::string& text) {
  if (!out_dir) return;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto path = std::filesystem::path(out_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) kflearn::fail(kflearn::ErrorCode::io, "cannot write '" + path.string() + "'");
  out << text;
}

kflearn::ArtifactOptions artifacts(const kflearn::ExperimentConfig& cfg, kfl_format format, const char* out_dir) {
  kflearn::ArtifactOptions opt = kflearn::artifact_options(cfg);
  if (out_dir) opt.directory = out_dir;
  if (format == KFL_FORMAT_CSV) {
    opt.csv = true;
    opt.json = false;
  } else if (format == KFL_FORMAT_JSON) {
    opt.csv = false;
    opt.json = true;
  }
  return opt;
}

}  // namespace

extern "C" {

const char* kfl_version(void) { return KFLEARN_VERSION_STRING; }

const char* kfl_status_name(kfl_status status) {
  switch (status) {
    case KFL_OK: return "ok";
    case KFL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case KFL_ERR_CONFIG: return "config";
    case KFL_ERR_IO: return "io";
    case KFL_ERR_DIMENSION: return "dimension";
    case KFL_ERR_DOMAIN: return "domain";
    case KFL_ERR_INSTABILITY: return "instability";
    case KFL_ERR_CONVERGENCE: return "convergence";
    case KFL_ERR_STALL: return "stall";
    case KFL_ERR_INITIALIZATION: return "initialization";
    case KFL_ERR_INCONCLUSIVE: return "inconclusive";
    case KFL_ERR_DIAGNOSTIC: return "diagnostic";
    case KFL_ERR_NUMERICAL: return "numerical";
    case KFL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* kfl_last_error(void) { return last_error.c_str(); }

void kfl_string_free(char* text) { std::free(text); }

kfl_status kfl_config_load(const char* path, kfl_config** out) {
  if (!path || !out) return invalid("null argument");
  return guarded([&] {
    *out = new kfl_config{kflearn::load_config(path)};
    return KFL_OK;
  });
}

kfl_status kfl_config_parse(const char* yaml_text, kfl_config** out) {
  if (!yaml_text || !out) return invalid("null argument");
  return guarded([&] {
    *out = new kfl_config{kflearn::parse_config(yaml_text)};
    return KFL_OK;
  });
}

kfl_status kfl_config_preset(const char* name, kfl_config** out) {
  if (!name || !out) return invalid("null argument");
  return guarded([&] {
    *out = new kfl_config{kflearn::preset_config(name)};
    return KFL_OK;
  });
}

void kfl_config_free(kfl_config* cfg) { delete cfg; }

kfl_status kfl_config_set_seed(kfl_config* cfg, uint64_t seed) {
  if (!cfg) return invalid("null config");
  return guarded([&] {
    kflearn::override_seed(cfg->cfg, seed);
    return KFL_OK;
  });
}

kfl_status kfl_config_set_samples(kfl_config* cfg, size_t samples) {
  if (!cfg) return invalid("null config");
  if (samples < 2) return invalid("samples must be at least 2");
  cfg->cfg.duality.samples = samples;
  return KFL_OK;
}

kfl_status kfl_config_set_horizon(kfl_config* cfg, size_t horizon) {
  if (!cfg) return invalid("null config");
  if (horizon < 1) return invalid("horizon must be positive");
  cfg->cfg.duality.horizon = horizon;
  return KFL_OK;
}

kfl_status kfl_config_set_timing(kfl_config* cfg, int enabled) {
  if (!cfg) return invalid("null config");
  cfg->cfg.output.timing = enabled != 0;
  return KFL_OK;
}

kfl_status kfl_config_set_workers(kfl_config* cfg, size_t workers) {
  if (!cfg) return invalid("null config");
  cfg->cfg.workers = workers;
  return KFL_OK;
}

kfl_status kfl_config_output_dir(const kfl_config* cfg, char** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    *out = copy_string(cfg->cfg.output.directory);
    return KFL_OK;
  });
}

kfl_status kfl_config_hash(const kfl_config* cfg, char** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    *out = copy_string(kflearn::config_hash(cfg->cfg));
    return KFL_OK;
  });
}

kfl_status kfl_preset_text(const char* name, char** out) {
  if (!name || !out) return invalid("null argument");
  return guarded([&] {
    *out = copy_string(kflearn::preset_text(name));
    return KFL_OK;
  });
}

kfl_status kfl_model_create(size_t n, size_t m, const double* a, const double* h, const double* q, const double* r,
                            const double* p0, const double* m0, kfl_model** out) {
  if (!a || !h || !q || !r || !p0 || !out) return invalid("null argument");
  if (n == 0 || m == 0) return invalid("dimensions must be positive");
  return guarded([&] {
    std::optional<kflearn::Vector> mean;
    if (m0) mean = read_matrix(m0, n, 1).col(0);
    *out = new kfl_model{kflearn::SystemModel(read_matrix(a, n, n), read_matrix(h, m, n), read_matrix(q, n, n),
                                              read_matrix(r, m, m), read_matrix(p0, n, n), mean)};
    return KFL_OK;
  });
}

kfl_status kfl_model_from_config(const kfl_config* cfg, kfl_model** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    *out = new kfl_model{cfg->cfg.system_model()};
    return KFL_OK;
  });
}

void kfl_model_free(kfl_model* model) { delete model; }

kfl_status kfl_model_dims(const kfl_model* model, size_t* n, size_t* m) {
  if (!model || !n || !m) return invalid("null argument");
  *n = model->model.n();
  *m = model->model.m();
  return KFL_OK;
}

kfl_status kfl_steady_state_gain(const kfl_model* model, double* gain, double* p_inf) {
  if (!model || !gain) return invalid("null argument");
  return guarded([&] {
    const auto sol = kflearn::steady_state_gain(model->model);
    write_matrix(sol.gain.gain(), gain);
    if (p_inf) write_matrix(sol.p_inf, p_inf);
    return KFL_OK;
  });
}

kfl_status kfl_cost(const kfl_model* model, const double* gain, double* cost) {
  if (!model || !gain || !cost) return invalid("null argument");
  return guarded([&] {
    *cost = kflearn::cost_J(model->model, gain_of(model, gain));
    return KFL_OK;
  });
}

kfl_status kfl_grad(const kfl_model* model, const double* gain, double* grad) {
  if (!model || !gain || !grad) return invalid("null argument");
  return guarded([&] {
    write_matrix(kflearn::grad_J(model->model, gain_of(model, gain)), grad);
    return KFL_OK;
  });
}

kfl_status kfl_spectral_radius(const kfl_model* model, const double* gain, double* rho) {
  if (!model || !gain || !rho) return invalid("null argument");
  return guarded([&] {
    *rho = gain_of(model, gain).rho();
    return KFL_OK;
  });
}

kfl_status kfl_oracle(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    const auto report = kflearn::oracle_report(cfg->cfg);
    const bool csv = format == KFL_FORMAT_CSV;
    const std::string text = csv ? kflearn::to_csv(report) : kflearn::to_json(report);
    save_text(out_dir, csv ? "oracle.csv" : "oracle.json", text);
    *out = copy_string(text);
    return KFL_OK;
  });
}

kfl_status kfl_duality(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    const auto& c = cfg->cfg;
    const auto report = kflearn::run_duality(c);
    const kflearn::Matrix gain = c.duality.gain ? *c.duality.gain : c.initial_gain().gain();
    const bool csv = format == KFL_FORMAT_CSV;
    const std::string text = csv ? kflearn::to_csv(report) : kflearn::to_json(report, gain);
    save_text(out_dir, csv ? "duality.csv" : "duality.json", text);
    *out = copy_string(text);
    return KFL_OK;
  });
}

kfl_status kfl_diagnose(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    const auto result = kflearn::diagnose(cfg->cfg, artifacts(cfg->cfg, format, out_dir));
    *out = copy_string(result.report_json);
    if (!result.passed) {
      last_error = "one or more diagnostic checks failed";
      return KFL_ERR_DIAGNOSTIC;
    }
    return KFL_OK;
  });
}

kfl_status kfl_learn(const kfl_config* cfg, kfl_format format, const char* out_dir, char** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    const auto result = kflearn::run_experiment(cfg->cfg, artifacts(cfg->cfg, format, out_dir));
    *out = copy_string(result.metadata_json);
    if (result.failures > 0) {
      for (const auto& r : result.runs) {
        if (!r.error.empty()) {
          last_error = std::to_string(result.failures) + " run(s) failed; first: " + r.error;
          break;
        }
      }
      return KFL_ERR_NUMERICAL;
    }
    return KFL_OK;
  });
}

kfl_status kfl_run_sgd(const kfl_config* cfg, size_t batch_size, size_t horizon, uint64_t seed, kfl_run** out) {
  if (!cfg || !out) return invalid("null argument");
  return guarded([&] {
    const auto& c = cfg->cfg;
    const kflearn::SystemModel model = c.system_model();
    const kflearn::TrajectorySimulator sim(model, c.noise_config());
    kflearn::SgdConfig sgd = c.learner.sgd;
    sgd.batch_size = batch_size;
    sgd.horizon = horizon;
    sgd.seed = seed;
    sgd.workers = c.workers;
    sgd.record_timing = c.output.timing;
    *out = new kfl_run{kflearn::sgd_run(sim, c.initial_gain(), sgd, &model)};
    return KFL_OK;
  });
}

void kfl_run_free(kfl_run* run) { delete run; }

size_t kfl_run_length(const kfl_run* run) { return run ? run->record.size() : 0; }

kfl_status kfl_run_cost(const kfl_run* run, size_t k, double* cost) {
  if (!run || !cost) return invalid("null argument");
  if (k >= run->record.size()) return invalid("iteration index out of range");
  *cost = run->record.costs[k];
  return KFL_OK;
}

kfl_status kfl_run_rho(const kfl_run* run, size_t k, double* rho) {
  if (!run || !rho) return invalid("null argument");
  if (k >= run->record.size()) return invalid("iteration index out of range");
  *rho = run->record.rhos[k];
  return KFL_OK;
}

kfl_status kfl_run_gain(const kfl_run* run, size_t k, double* gain) {
  if (!run || !gain) return invalid("null argument");
  if (k >= run->record.size()) return invalid("iteration index out of range");
  write_matrix(run->record.iterates[k].gain(), gain);
  return KFL_OK;
}

}  // extern "C"
