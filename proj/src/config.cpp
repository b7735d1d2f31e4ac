#include "kflearn/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kflearn/errors.hpp"

namespace kflearn {

namespace {

const std::string kMassSpringPreset = R"(# Undamped mass-spring oscillator sampled at dt = 0.1.
model:
  preset: mass_spring
  omega: 1.0
  dt: 0.1
  process_variance: 0.1
  measurement_variance: 0.1
  initial_variance: 0.05
noise:
  family: truncated_gaussian
  kappa_xi: auto
  kappa_omega: auto
  sigmas: 6
learner:
  method: sgd
  step_size: 0.05
  max_iters: 500
  safeguard: reject_and_shrink
  target_rho: 0.995
  max_consecutive_rejections: 50
  init:
    strategy: surrogate_dare
    surrogate_q: 1
    surrogate_r: 100
sweep:
  batch_sizes: [1, 10, 100]
  horizons: [50]
  seed_count: 20
output:
  directory: out/mass_spring
  formats: [csv, json]
  timing: false
  trajectory_horizon: 0
diagnose:
  checks: [epsilon, truncation, concentration, power_bound, sample_sizes]
  gains: [initial, midpoint, optimal]
  truncation_horizons: [5, 10, 20, 40, 80]
  batch_sizes: [16, 64, 256]
  concentration_horizon: 50
  reps: 50
  epsilon_instances: 100
  epsilon_horizon: 20
  k_max: 50
duality:
  horizon: 50
  samples: 100000
workers: 1
)";

// Reads one YAML document with positions in error messages.
class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void error(const YAML::Node& node, const std::string& message) const {
    std::ostringstream os;
    os << source_;
    if (node.IsDefined() && node.Mark().line >= 0) os << ":" << node.Mark().line + 1 << ":" << node.Mark().column + 1;
    os << ": " << message;
    fail(ErrorCode::config, os.str());
  }

  void require_map(const YAML::Node& node, const std::string& what, const std::set<std::string>& allowed) const {
    if (!node.IsMap()) error(node, what + " must be a mapping");
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        error(kv.first, "unknown key '" + key + "' in " + what + " (expected one of: " + list + ")");
      }
    }
  }

  double number(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) error(node, what + " must be a number");
    try {
      return node.as<double>();
    } catch (const YAML::Exception&) {
      error(node, what + " must be a number, got '" + node.Scalar() + "'");
    }
  }

  double positive(const YAML::Node& node, const std::string& what) const {
    const double v = number(node, what);
    if (!(v > 0.0)) error(node, what + " must be positive");
    return v;
  }

  double nonnegative(const YAML::Node& node, const std::string& what) const {
    const double v = number(node, what);
    if (!(v >= 0.0)) error(node, what + " must be nonnegative");
    return v;
  }

  std::uint64_t unsigned_int(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) error(node, what + " must be a nonnegative integer");
    const std::string& s = node.Scalar();
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      error(node, what + " must be a nonnegative integer, got '" + s + "'");
    }
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      error(node, what + " is out of range");
    }
  }

  std::size_t count(const YAML::Node& node, const std::string& what) const {
    const auto v = unsigned_int(node, what);
    if (v == 0) error(node, what + " must be at least 1");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) error(node, what + " must be true or false");
    try {
      return node.as<bool>();
    } catch (const YAML::Exception&) {
      error(node, what + " must be true or false");
    }
  }

  std::string text(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) error(node, what + " must be a string");
    return node.Scalar();
  }

  std::vector<std::size_t> counts(const YAML::Node& node, const std::string& what) const {
    if (node.IsScalar()) return {count(node, what)};
    if (!node.IsSequence() || node.size() == 0) error(node, what + " must be a nonempty list of positive integers");
    std::vector<std::size_t> out;
    for (const auto& item : node) out.push_back(count(item, what));
    return out;
  }

  std::vector<std::string> texts(const YAML::Node& node, const std::string& what) const {
    if (!node.IsSequence() || node.size() == 0) error(node, what + " must be a nonempty list");
    std::vector<std::string> out;
    for (const auto& item : node) out.push_back(text(item, what));
    return out;
  }

  // Nested list for a matrix; a bare number is a 1×1 matrix.
  Matrix matrix(const YAML::Node& node, const std::string& what) const {
    if (node.IsScalar()) return Matrix::Constant(1, 1, number(node, what));
    if (!node.IsSequence() || node.size() == 0) error(node, what + " must be a list of rows");
    const auto rows = static_cast<Eigen::Index>(node.size());
    Eigen::Index cols = -1;
    Matrix out;
    for (Eigen::Index i = 0; i < rows; ++i) {
      const YAML::Node row = node[static_cast<std::size_t>(i)];
      if (!row.IsSequence() || row.size() == 0) error(row, what + " rows must be nonempty lists");
      if (cols < 0) {
        cols = static_cast<Eigen::Index>(row.size());
        out.resize(rows, cols);
      } else if (static_cast<Eigen::Index>(row.size()) != cols) {
        error(row, what + " rows must all have the same length");
      }
      for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = number(row[static_cast<std::size_t>(j)], what);
    }
    return out;
  }

  // A number means that multiple of the identity (size fixed later).
  Matrix covariance(const YAML::Node& node, const std::string& what, Eigen::Index size) const {
    if (node.IsScalar()) {
      if (size < 0) error(node, what + " given as a variance needs the dimension from A or H");
      return nonnegative(node, what) * Matrix::Identity(size, size);
    }
    return matrix(node, what);
  }

  Vector vector(const YAML::Node& node, const std::string& what) const {
    if (node.IsScalar()) return Vector::Constant(1, number(node, what));
    if (!node.IsSequence() || node.size() == 0) error(node, what + " must be a list of numbers");
    Vector out(static_cast<Eigen::Index>(node.size()));
    for (std::size_t i = 0; i < node.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(node[i], what);
    return out;
  }

 private:
  std::string source_;
};

void read_model(const Reader& rd, const YAML::Node& node, ModelSpec& spec) {
  rd.require_map(node, "model", {"preset", "omega", "dt", "process_variance", "measurement_variance",
                                 "initial_variance", "A", "H", "Q", "R", "P0", "m0"});
  ModelSpec out;
  if (node["preset"]) {
    const std::string name = rd.text(node["preset"], "model.preset");
    if (name != "mass_spring") rd.error(node["preset"], "unknown model preset '" + name + "'");
    out.preset = name;
  }
  const bool has_matrices = node["A"] || node["H"];
  if (!out.preset && !has_matrices) rd.error(node, "model needs either a preset or the matrices A and H");
  for (const char* key : {"omega", "dt", "process_variance", "measurement_variance", "initial_variance"}) {
    if (node[key] && !out.preset) rd.error(node[key], std::string("model.") + key + " only applies to the mass_spring preset");
  }
  auto& ms = out.mass_spring;
  if (node["omega"]) ms.omega = rd.positive(node["omega"], "model.omega");
  if (node["dt"]) ms.dt = rd.positive(node["dt"], "model.dt");
  if (node["process_variance"]) ms.process_variance = rd.nonnegative(node["process_variance"], "model.process_variance");
  if (node["measurement_variance"]) {
    ms.measurement_variance = rd.nonnegative(node["measurement_variance"], "model.measurement_variance");
  }
  if (node["initial_variance"]) ms.initial_variance = rd.nonnegative(node["initial_variance"], "model.initial_variance");

  if (!out.preset) {
    for (const char* key : {"A", "H", "Q", "R", "P0"}) {
      if (!node[key]) rd.error(node, std::string("model.") + key + " is required without a preset");
    }
  }
  Eigen::Index n = -1;
  Eigen::Index m = -1;
  if (out.preset) {
    n = 2;
    m = 1;
  }
  if (node["A"]) {
    out.a = rd.matrix(node["A"], "model.A");
    n = out.a->rows();
  }
  if (node["H"]) {
    out.h = rd.matrix(node["H"], "model.H");
    m = out.h->rows();
    if (n < 0) n = out.h->cols();
  }
  if (node["Q"]) out.q = rd.covariance(node["Q"], "model.Q", n);
  if (node["R"]) out.r = rd.covariance(node["R"], "model.R", m);
  if (node["P0"]) out.p0 = rd.covariance(node["P0"], "model.P0", n);
  if (node["m0"]) out.m0 = rd.vector(node["m0"], "model.m0");
  spec = std::move(out);
  // Dimension, PSD and observability checks happen when the model is built.
}

void read_noise(const Reader& rd, const YAML::Node& node, NoiseSpec& spec) {
  rd.require_map(node, "noise", {"family", "kappa_xi", "kappa_omega", "sigmas"});
  if (node["family"]) {
    try {
      spec.family = noise_family_from_string(rd.text(node["family"], "noise.family"));
    } catch (const Error& e) {
      rd.error(node["family"], e.what());
    }
  }
  auto kappa = [&](const char* key, std::optional<double>& slot) {
    const YAML::Node k = node[key];
    if (!k) return;
    if (k.IsScalar() && k.Scalar() == "auto") {
      slot.reset();
    } else {
      slot = rd.positive(k, std::string("noise.") + key);
    }
  };
  kappa("kappa_xi", spec.kappa_xi);
  kappa("kappa_omega", spec.kappa_omega);
  if (node["sigmas"]) spec.sigmas = rd.positive(node["sigmas"], "noise.sigmas");
}

void read_learner(const Reader& rd, const YAML::Node& node, LearnerSpec& spec, SweepSpec& sweep,
                  std::set<std::string>& set_from_learner) {
  rd.require_map(node, "learner",
                 {"method", "step_size", "batch_size", "horizon", "max_iters", "seed", "safeguard", "target_rho",
                  "max_consecutive_rejections", "init", "gd"});
  if (node["method"]) {
    const std::string m = rd.text(node["method"], "learner.method");
    if (m == "sgd") {
      spec.method = LearnMethod::sgd;
    } else if (m == "gd") {
      spec.method = LearnMethod::gd;
    } else {
      rd.error(node["method"], "learner.method must be sgd or gd");
    }
  }
  auto& sgd = spec.sgd;
  if (node["step_size"]) sgd.step_size = rd.positive(node["step_size"], "learner.step_size");
  if (node["max_iters"]) sgd.max_iters = rd.count(node["max_iters"], "learner.max_iters");
  if (node["batch_size"]) {
    sweep.batch_sizes = {rd.count(node["batch_size"], "learner.batch_size")};
    set_from_learner.insert("batch_sizes");
  }
  if (node["horizon"]) {
    sweep.horizons = {rd.count(node["horizon"], "learner.horizon")};
    set_from_learner.insert("horizons");
  }
  if (node["seed"]) {
    sweep.seeds = {rd.unsigned_int(node["seed"], "learner.seed")};
    set_from_learner.insert("seeds");
  }
  if (node["safeguard"]) {
    try {
      sgd.safeguard = safeguard_from_string(rd.text(node["safeguard"], "learner.safeguard"));
    } catch (const Error& e) {
      rd.error(node["safeguard"], e.what());
    }
  }
  if (node["target_rho"]) {
    sgd.target_rho = rd.positive(node["target_rho"], "learner.target_rho");
    if (sgd.target_rho > 1.0) rd.error(node["target_rho"], "learner.target_rho must be at most 1");
  }
  if (node["max_consecutive_rejections"]) {
    sgd.max_consecutive_rejections =
        static_cast<std::size_t>(rd.unsigned_int(node["max_consecutive_rejections"], "learner.max_consecutive_rejections"));
  }
  if (const YAML::Node init = node["init"]) {
    rd.require_map(init, "learner.init", {"strategy", "surrogate_q", "surrogate_r", "gain"});
    if (init["strategy"]) {
      try {
        spec.init.strategy = init_strategy_from_string(rd.text(init["strategy"], "learner.init.strategy"));
      } catch (const Error& e) {
        rd.error(init["strategy"], e.what());
      }
    }
    if (init["surrogate_q"]) spec.init.surrogate_q = rd.positive(init["surrogate_q"], "learner.init.surrogate_q");
    if (init["surrogate_r"]) spec.init.surrogate_r = rd.positive(init["surrogate_r"], "learner.init.surrogate_r");
    if (init["gain"]) spec.init.user_gain = rd.matrix(init["gain"], "learner.init.gain");
    if (spec.init.strategy == InitStrategy::user && !spec.init.user_gain) {
      rd.error(init, "learner.init.strategy user needs learner.init.gain");
    }
  }
  if (const YAML::Node gd = node["gd"]) {
    rd.require_map(gd, "learner.gd", {"tolerance", "max_iters", "initial_step", "shrink", "sufficient_decrease",
                                      "max_backtracks"});
    if (gd["tolerance"]) spec.gd.tolerance = rd.positive(gd["tolerance"], "learner.gd.tolerance");
    if (gd["max_iters"]) spec.gd.max_iters = rd.count(gd["max_iters"], "learner.gd.max_iters");
    if (gd["initial_step"]) spec.gd.initial_step = rd.positive(gd["initial_step"], "learner.gd.initial_step");
    if (gd["shrink"]) {
      spec.gd.shrink = rd.positive(gd["shrink"], "learner.gd.shrink");
      if (spec.gd.shrink >= 1.0) rd.error(gd["shrink"], "learner.gd.shrink must be below 1");
    }
    if (gd["sufficient_decrease"]) {
      spec.gd.sufficient_decrease = rd.positive(gd["sufficient_decrease"], "learner.gd.sufficient_decrease");
    }
    if (gd["max_backtracks"]) spec.gd.max_backtracks = rd.count(gd["max_backtracks"], "learner.gd.max_backtracks");
  }
}

void read_sweep(const Reader& rd, const YAML::Node& node, SweepSpec& spec, const std::set<std::string>& from_learner) {
  rd.require_map(node, "sweep", {"batch_sizes", "horizons", "seeds", "seed_count", "first_seed"});
  auto clash = [&](const char* key, const char* field) {
    if (from_learner.count(field)) rd.error(node[key], std::string("sweep.") + key + " conflicts with the learner block");
  };
  if (node["batch_sizes"]) {
    clash("batch_sizes", "batch_sizes");
    spec.batch_sizes = rd.counts(node["batch_sizes"], "sweep.batch_sizes");
  }
  if (node["horizons"]) {
    clash("horizons", "horizons");
    spec.horizons = rd.counts(node["horizons"], "sweep.horizons");
  }
  if (node["seeds"] && node["seed_count"]) rd.error(node["seed_count"], "give either sweep.seeds or sweep.seed_count");
  if (node["first_seed"] && !node["seed_count"]) rd.error(node["first_seed"], "sweep.first_seed needs sweep.seed_count");
  if (node["seeds"]) {
    clash("seeds", "seeds");
    const YAML::Node s = node["seeds"];
    spec.seeds.clear();
    if (s.IsScalar()) {
      spec.seeds.push_back(rd.unsigned_int(s, "sweep.seeds"));
    } else {
      if (!s.IsSequence() || s.size() == 0) rd.error(s, "sweep.seeds must be a nonempty list of integers");
      for (const auto& item : s) spec.seeds.push_back(rd.unsigned_int(item, "sweep.seeds"));
    }
  }
  if (node["seed_count"]) {
    clash("seed_count", "seeds");
    const std::size_t n = rd.count(node["seed_count"], "sweep.seed_count");
    const std::uint64_t first = node["first_seed"] ? rd.unsigned_int(node["first_seed"], "sweep.first_seed") : 0;
    spec.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) spec.seeds.push_back(first + i);
  }
  std::set<std::uint64_t> unique(spec.seeds.begin(), spec.seeds.end());
  if (unique.size() != spec.seeds.size()) rd.error(node, "sweep seeds must be distinct");
}

void read_output(const Reader& rd, const YAML::Node& node, OutputSpec& spec) {
  rd.require_map(node, "output", {"directory", "formats", "timing", "trajectory_horizon"});
  if (node["directory"]) spec.directory = rd.text(node["directory"], "output.directory");
  if (node["formats"]) {
    spec.csv = false;
    spec.json = false;
    for (const auto& item : node["formats"]) {
      const std::string f = rd.text(item, "output.formats");
      if (f == "csv") {
        spec.csv = true;
      } else if (f == "json") {
        spec.json = true;
      } else {
        rd.error(item, "output.formats entries must be csv or json");
      }
    }
    if (!node["formats"].IsSequence() || (!spec.csv && !spec.json)) {
      rd.error(node["formats"], "output.formats must be a nonempty list of csv/json");
    }
  }
  if (node["timing"]) spec.timing = rd.boolean(node["timing"], "output.timing");
  if (node["trajectory_horizon"]) {
    spec.trajectory_horizon = static_cast<std::size_t>(rd.unsigned_int(node["trajectory_horizon"], "output.trajectory_horizon"));
  }
}

void read_diagnose(const Reader& rd, const YAML::Node& node, DiagnoseSpec& spec) {
  rd.require_map(node, "diagnose", {"checks", "gains", "truncation_horizons", "truncation_monte_carlo", "batch_sizes",
                                    "concentration_horizon", "reps", "epsilon_instances", "epsilon_horizon", "k_max",
                                    "seed"});
  static const std::set<std::string> kChecks{"epsilon", "truncation", "concentration", "power_bound", "sample_sizes"};
  static const std::set<std::string> kGains{"initial", "midpoint", "optimal"};
  if (node["checks"]) {
    spec.checks = rd.texts(node["checks"], "diagnose.checks");
    for (std::size_t i = 0; i < spec.checks.size(); ++i) {
      if (!kChecks.count(spec.checks[i])) rd.error(node["checks"][i], "unknown check '" + spec.checks[i] + "'");
    }
  }
  if (node["gains"]) {
    spec.gains = rd.texts(node["gains"], "diagnose.gains");
    for (std::size_t i = 0; i < spec.gains.size(); ++i) {
      if (!kGains.count(spec.gains[i])) rd.error(node["gains"][i], "unknown gain '" + spec.gains[i] + "'");
    }
  }
  if (node["truncation_horizons"]) {
    spec.truncation_horizons = rd.counts(node["truncation_horizons"], "diagnose.truncation_horizons");
    if (spec.truncation_horizons.size() < 3) {
      rd.error(node["truncation_horizons"], "diagnose.truncation_horizons needs at least three values");
    }
  }
  if (node["truncation_monte_carlo"]) {
    spec.truncation_monte_carlo = rd.boolean(node["truncation_monte_carlo"], "diagnose.truncation_monte_carlo");
  }
  if (node["batch_sizes"]) {
    spec.batch_sizes = rd.counts(node["batch_sizes"], "diagnose.batch_sizes");
    if (spec.batch_sizes.size() < 2) rd.error(node["batch_sizes"], "diagnose.batch_sizes needs at least two values");
  }
  if (node["concentration_horizon"]) {
    spec.concentration_horizon = rd.count(node["concentration_horizon"], "diagnose.concentration_horizon");
  }
  if (node["reps"]) {
    spec.reps = rd.count(node["reps"], "diagnose.reps");
    if (spec.reps < 20) rd.error(node["reps"], "diagnose.reps must be at least 20");
  }
  if (node["epsilon_instances"]) spec.epsilon_instances = rd.count(node["epsilon_instances"], "diagnose.epsilon_instances");
  if (node["epsilon_horizon"]) spec.epsilon_horizon = rd.count(node["epsilon_horizon"], "diagnose.epsilon_horizon");
  if (node["k_max"]) spec.k_max = static_cast<std::size_t>(rd.unsigned_int(node["k_max"], "diagnose.k_max"));
  if (node["seed"]) spec.seed = rd.unsigned_int(node["seed"], "diagnose.seed");
}

void read_duality(const Reader& rd, const YAML::Node& node, DualitySpec& spec) {
  rd.require_map(node, "duality", {"horizon", "samples", "gain", "seed"});
  if (node["horizon"]) spec.horizon = rd.count(node["horizon"], "duality.horizon");
  if (node["samples"]) {
    spec.samples = rd.count(node["samples"], "duality.samples");
    if (spec.samples < 2) rd.error(node["samples"], "duality.samples must be at least 2");
  }
  if (node["gain"]) spec.gain = rd.matrix(node["gain"], "duality.gain");
  if (node["seed"]) spec.seed = rd.unsigned_int(node["seed"], "duality.seed");
}

ExperimentConfig parse_into(ExperimentConfig cfg, const std::string& text, const std::string& source) {
  const Reader rd(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    std::ostringstream os;
    os << source << ":" << e.mark.line + 1 << ":" << e.mark.column + 1 << ": " << e.msg;
    fail(ErrorCode::config, os.str());
  }
  if (root.IsNull()) return cfg;
  rd.require_map(root, "top level", {"model", "noise", "learner", "sweep", "output", "diagnose", "duality", "workers"});
  try {
    if (root["model"]) read_model(rd, root["model"], cfg.model);
    if (root["noise"]) read_noise(rd, root["noise"], cfg.noise);
    std::set<std::string> from_learner;
    if (root["learner"]) read_learner(rd, root["learner"], cfg.learner, cfg.sweep, from_learner);
    if (root["sweep"]) read_sweep(rd, root["sweep"], cfg.sweep, from_learner);
    if (root["output"]) read_output(rd, root["output"], cfg.output);
    if (root["diagnose"]) read_diagnose(rd, root["diagnose"], cfg.diagnose);
    if (root["duality"]) read_duality(rd, root["duality"], cfg.duality);
    if (root["workers"]) cfg.workers = static_cast<std::size_t>(rd.unsigned_int(root["workers"], "workers"));
  } catch (const YAML::Exception& e) {
    std::ostringstream os;
    os << source << ":" << e.mark.line + 1 << ":" << e.mark.column + 1 << ": " << e.msg;
    fail(ErrorCode::config, os.str());
  }
  cfg.source = source;

  // Semantic validation: the pieces must assemble into working objects.
  try {
    const SystemModel model = cfg.system_model();
    validate(cfg.noise_config());
    cfg.initial_gain();
    if (cfg.duality.gain) GainMatrix(model.A(), model.H(), *cfg.duality.gain);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    fail(ErrorCode::config, source + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig base_defaults() {
  static const ExperimentConfig defaults = [] {
    ExperimentConfig cfg;
    cfg.model.preset = "mass_spring";
    return parse_into(cfg, kMassSpringPreset, "<preset:mass_spring>");
  }();
  return defaults;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string to_string(LearnMethod method) { return method == LearnMethod::sgd ? "sgd" : "gd"; }

SystemModel ExperimentConfig::system_model() const {
  if (model.preset) {
    const SystemModel base = mass_spring_model(model.mass_spring);
    return SystemModel(model.a.value_or(base.A()), model.h.value_or(base.H()), model.q.value_or(base.Q()),
                       model.r.value_or(base.R()), model.p0.value_or(base.P0()),
                       model.m0 ? std::optional<Vector>(*model.m0) : std::optional<Vector>(base.m0()));
  }
  return SystemModel(*model.a, *model.h, *model.q, *model.r, *model.p0, model.m0);
}

NoiseConfig ExperimentConfig::noise_config() const {
  NoiseConfig out = default_noise_config(system_model(), noise.sigmas, noise.family);
  if (noise.kappa_xi) out.kappa_xi = *noise.kappa_xi;
  if (noise.kappa_omega) out.kappa_omega = *noise.kappa_omega;
  return out;
}

GainMatrix ExperimentConfig::initial_gain() const {
  const SystemModel sm = system_model();
  return kflearn::initial_gain(sm.A(), sm.H(), learner.init);
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  return parse_into(base_defaults(), text, source);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::config, path + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path);
}

std::vector<std::string> preset_names() { return {"mass_spring"}; }

const std::string& preset_text(const std::string& name) {
  if (name != "mass_spring") fail(ErrorCode::config, "unknown preset '" + name + "'");
  return kMassSpringPreset;
}

ExperimentConfig preset_config(const std::string& name) {
  preset_text(name);
  return base_defaults();
}

void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.sweep.seeds = {seed};
  cfg.duality.seed = seed;
  cfg.diagnose.seed = seed;
}

std::string canonical_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  const SystemModel model = cfg.system_model();
  const NoiseConfig noise = cfg.noise_config();
  json j;
  j["model"] = {{"preset", cfg.model.preset.value_or("")},
                {"A", matrix_json(model.A())},
                {"H", matrix_json(model.H())},
                {"Q", matrix_json(model.Q())},
                {"R", matrix_json(model.R())},
                {"P0", matrix_json(model.P0())},
                {"m0", matrix_json(model.m0())}};
  j["noise"] = {{"family", to_string(noise.family)}, {"kappa_xi", noise.kappa_xi}, {"kappa_omega", noise.kappa_omega}};
  const auto& sgd = cfg.learner.sgd;
  const auto& init = cfg.learner.init;
  const auto& gd = cfg.learner.gd;
  j["learner"] = {{"method", to_string(cfg.learner.method)},
                  {"step_size", sgd.step_size},
                  {"max_iters", sgd.max_iters},
                  {"safeguard", to_string(sgd.safeguard)},
                  {"target_rho", sgd.target_rho},
                  {"max_consecutive_rejections", sgd.max_consecutive_rejections},
                  {"init",
                   {{"strategy", to_string(init.strategy)},
                    {"surrogate_q", init.surrogate_q},
                    {"surrogate_r", init.surrogate_r},
                    {"gain", init.user_gain ? matrix_json(*init.user_gain) : json(nullptr)}}},
                  {"gd",
                   {{"tolerance", gd.tolerance},
                    {"max_iters", gd.max_iters},
                    {"initial_step", gd.initial_step},
                    {"shrink", gd.shrink},
                    {"sufficient_decrease", gd.sufficient_decrease},
                    {"max_backtracks", gd.max_backtracks}}}};
  j["sweep"] = {{"batch_sizes", cfg.sweep.batch_sizes}, {"horizons", cfg.sweep.horizons}, {"seeds", cfg.sweep.seeds}};
  j["output"] = {{"csv", cfg.output.csv},
                 {"json", cfg.output.json},
                 {"timing", cfg.output.timing},
                 {"trajectory_horizon", cfg.output.trajectory_horizon}};
  const auto& dg = cfg.diagnose;
  j["diagnose"] = {{"checks", dg.checks},
                   {"gains", dg.gains},
                   {"truncation_horizons", dg.truncation_horizons},
                   {"truncation_monte_carlo", dg.truncation_monte_carlo},
                   {"batch_sizes", dg.batch_sizes},
                   {"concentration_horizon", dg.concentration_horizon},
                   {"reps", dg.reps},
                   {"epsilon_instances", dg.epsilon_instances},
                   {"epsilon_horizon", dg.epsilon_horizon},
                   {"k_max", dg.k_max},
                   {"seed", dg.seed}};
  j["duality"] = {{"horizon", cfg.duality.horizon},
                  {"samples", cfg.duality.samples},
                  {"gain", cfg.duality.gain ? matrix_json(*cfg.duality.gain) : json(nullptr)},
                  {"seed", cfg.duality.seed}};
  return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_json(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace kflearn
