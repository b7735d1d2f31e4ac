#include "kflearn/system_model.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "kflearn/errors.hpp"
#include "kflearn/parallel.hpp"
#include "kflearn/rng.hpp"

namespace kflearn {

namespace {

void require_psd(const Matrix& m, const char* name, bool strict) {
  if (!is_symmetric(m, 1e-10)) fail(ErrorCode::domain, std::string(name) + " is not symmetric");
  if (m.size() == 0) return;
  const double lambda = min_eigenvalue_symmetric(m);
  const double tol = 1e-12 * (1.0 + m.norm());
  if (strict ? lambda <= 0.0 : lambda < -tol) {
    fail(ErrorCode::domain, std::string(name) + (strict ? " is not positive definite" : " is not positive semidefinite"));
  }
}

std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

bool is_observable(const Matrix& a, const Matrix& h) {
  const Eigen::Index n = a.rows();
  if (n == 0) return true;
  Matrix obs(h.rows() * n, n);
  Matrix block = h;
  for (Eigen::Index k = 0; k < n; ++k) {
    obs.middleRows(k * h.rows(), h.rows()) = block;
    block = block * a;
  }
  Eigen::JacobiSVD<Matrix> svd(obs);
  const Vector& s = svd.singularValues();
  const double tol = std::max<double>(obs.rows(), obs.cols()) * s(0) * 1e-12;
  return s.size() >= n && s(n - 1) > tol;
}

SystemModel::SystemModel(Matrix a, Matrix h, Matrix q, Matrix r, Matrix p0, std::optional<Vector> m0)
    : a_(std::move(a)), h_(std::move(h)), q_(std::move(q)), r_(std::move(r)), p0_(std::move(p0)) {
  require_square(a_, "A");
  const Eigen::Index n = a_.rows();
  const Eigen::Index m = h_.rows();
  if (n == 0 || m == 0) fail(ErrorCode::dimension, "state and output dimensions must be positive");
  if (h_.cols() != n) fail(ErrorCode::dimension, "H must be m x n, got " + dims(h_));
  if (q_.rows() != n || q_.cols() != n) fail(ErrorCode::dimension, "Q must be n x n, got " + dims(q_));
  if (r_.rows() != m || r_.cols() != m) fail(ErrorCode::dimension, "R must be m x m, got " + dims(r_));
  if (p0_.rows() != n || p0_.cols() != n) fail(ErrorCode::dimension, "P0 must be n x n, got " + dims(p0_));
  m0_ = m0.value_or(Vector::Zero(n));
  if (m0_.size() != n) fail(ErrorCode::dimension, "m0 must have n entries");
  for (const Matrix* mat : {&a_, &h_, &q_, &r_, &p0_}) {
    if (!mat->allFinite()) fail(ErrorCode::domain, "model matrices must be finite");
  }
  if (!m0_.allFinite()) fail(ErrorCode::domain, "m0 must be finite");
  require_psd(q_, "Q", false);
  require_psd(r_, "R", false);
  require_psd(p0_, "P0", false);
  q_ = symmetrize(q_);
  r_ = symmetrize(r_);
  p0_ = symmetrize(p0_);
  if (!is_observable(a_, h_)) fail(ErrorCode::domain, "(A, H) is not observable");
}

SystemModel mass_spring_model(const MassSpringParameters& p) {
  if (!(p.omega > 0.0) || !(p.dt > 0.0)) fail(ErrorCode::domain, "mass-spring omega and dt must be positive");
  const double c = std::cos(p.omega * p.dt);
  const double s = std::sin(p.omega * p.dt);
  Matrix a(2, 2);
  a << c, s / p.omega, -p.omega * s, c;
  Matrix h(1, 2);
  h << 1.0, 0.0;
  return SystemModel(a, h, p.process_variance * Matrix::Identity(2, 2),
                     Matrix::Constant(1, 1, p.measurement_variance), p.initial_variance * Matrix::Identity(2, 2));
}

std::string to_string(NoiseFamily family) {
  return family == NoiseFamily::truncated_gaussian ? "truncated_gaussian" : "scaled_uniform";
}

NoiseFamily noise_family_from_string(const std::string& name) {
  if (name == "truncated_gaussian") return NoiseFamily::truncated_gaussian;
  if (name == "scaled_uniform") return NoiseFamily::scaled_uniform;
  fail(ErrorCode::domain, "unknown noise family '" + name + "'");
}

void validate(const NoiseConfig& noise) {
  if (!(noise.kappa_xi > 0.0) || !(noise.kappa_omega > 0.0) || !std::isfinite(noise.kappa_xi) ||
      !std::isfinite(noise.kappa_omega)) {
    fail(ErrorCode::domain, "noise bounds kappa_xi and kappa_omega must be positive and finite");
  }
}

NoiseConfig default_noise_config(const SystemModel& model, double sigmas, NoiseFamily family) {
  if (!(sigmas > 0.0)) fail(ErrorCode::domain, "noise bound multiplier must be positive");
  const double sq = std::sqrt(std::max(model.Q().trace(), 0.0));
  const double sp = std::sqrt(std::max(model.P0().trace(), 0.0));
  const double sr = std::sqrt(std::max(model.R().trace(), 0.0));
  NoiseConfig out;
  out.family = family;
  const double xi_scale = std::max(sq, sp);
  out.kappa_xi = xi_scale > 0.0 ? sigmas * xi_scale + model.m0().norm() : 1.0 + model.m0().norm();
  out.kappa_omega = sr > 0.0 ? sigmas * sr : 1.0;
  return out;
}

namespace {

// Draws mean + B g with g standard normal (or unit-variance uniform on
// [−√3, √3]) and redraws until ‖draw‖ ≤ bound.
class BoundedSampler {
 public:
  BoundedSampler(const Matrix& factor, double bound, NoiseFamily family)
      : factor_(factor), bound_(bound), family_(family) {}

  void draw_into(Rng& rng, const Vector& mean, Vector& out) const {
    constexpr int kMaxAttempts = 100000;
    const Eigen::Index n = factor_.rows();
    Vector g(n);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      if (family_ == NoiseFamily::truncated_gaussian) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < n; ++i) g(i) = normal(rng);
      } else {
        std::uniform_real_distribution<double> uniform(-std::sqrt(3.0), std::sqrt(3.0));
        for (Eigen::Index i = 0; i < n; ++i) g(i) = uniform(rng);
      }
      out.noalias() = mean + factor_ * g;
      if (out.norm() <= bound_) return;
    }
    fail(ErrorCode::domain, "noise bound too tight: no admissible draw after 100000 attempts");
  }

 private:
  const Matrix& factor_;
  double bound_;
  NoiseFamily family_;
};

}  // namespace

TrajectorySimulator::TrajectorySimulator(const SystemModel& model, const NoiseConfig& noise)
    : model_(model), noise_(noise) {
  validate(noise_);
  initial_factor_ = psd_sqrt(model_.P0());
  process_factor_ = psd_sqrt(model_.Q());
  measurement_factor_ = psd_sqrt(model_.R());
}

Trajectory TrajectorySimulator::run(std::size_t horizon, std::uint64_t seed, bool keep_record) const {
  if (horizon < 1) fail(ErrorCode::domain, "simulation horizon T must be at least 1");
  const auto n = static_cast<Eigen::Index>(model_.n());
  const auto m = static_cast<Eigen::Index>(model_.m());
  const BoundedSampler initial(initial_factor_, noise_.kappa_xi, noise_.family);
  const BoundedSampler process(process_factor_, noise_.kappa_xi, noise_.family);
  const BoundedSampler measurement(measurement_factor_, noise_.kappa_omega, noise_.family);
  const Vector zero_n = Vector::Zero(n);
  const Vector zero_m = Vector::Zero(m);

  Rng rng(seed);
  Trajectory out;
  out.seed = seed;
  NoiseRecord record;
  std::vector<Vector> states;
  out.outputs.reserve(horizon + 1);
  if (keep_record) {
    record.xi.reserve(horizon);
    record.omega.reserve(horizon + 1);
    states.reserve(horizon + 1);
  }

  Vector x(n);
  initial.draw_into(rng, model_.m0(), x);
  if (keep_record) record.x0 = x;
  Vector w(m), xi(n);
  for (std::size_t t = 0; t <= horizon; ++t) {
    measurement.draw_into(rng, zero_m, w);
    out.outputs.push_back(model_.H() * x + w);
    if (keep_record) {
      states.push_back(x);
      record.omega.push_back(w);
    }
    if (t < horizon) {
      process.draw_into(rng, zero_n, xi);
      x = model_.A() * x + xi;
      if (keep_record) record.xi.push_back(xi);
    }
  }
  if (keep_record) {
    out.states = std::move(states);
    out.noises = std::move(record);
  }
  return out;
}

std::vector<Trajectory> TrajectorySimulator::batch(std::size_t horizon, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t workers, bool keep_record) const {
  if (batch_size < 1) fail(ErrorCode::domain, "batch size M must be at least 1");
  std::vector<Trajectory> out(batch_size);
  parallel_for(batch_size, workers, [&](std::size_t i) { out[i] = run(horizon, derive_seed(seed, i), keep_record); });
  return out;
}

Trajectory simulate(const SystemModel& model, const NoiseConfig& noise, std::size_t horizon, std::uint64_t seed) {
  return TrajectorySimulator(model, noise).run(horizon, seed);
}

std::vector<Trajectory> make_batch(const SystemModel& model, const NoiseConfig& noise, std::size_t horizon,
                                   std::size_t batch_size, std::uint64_t seed, std::size_t workers) {
  return TrajectorySimulator(model, noise).batch(horizon, batch_size, seed, workers);
}

Trajectory trajectory_from_noises(const Matrix& a, const Matrix& h, const NoiseRecord& noises) {
  require_square(a, "A");
  if (noises.omega.empty() || noises.omega.size() != noises.xi.size() + 1) {
    fail(ErrorCode::dimension, "noise record needs T process draws and T+1 measurement draws");
  }
  if (noises.x0.size() != a.rows()) fail(ErrorCode::dimension, "x0 has wrong size");
  Trajectory out;
  std::vector<Vector> states;
  Vector x = noises.x0;
  const std::size_t horizon = noises.xi.size();
  for (std::size_t t = 0; t <= horizon; ++t) {
    if (noises.omega[t].size() != h.rows()) fail(ErrorCode::dimension, "measurement noise has wrong size");
    out.outputs.push_back(h * x + noises.omega[t]);
    states.push_back(x);
    if (t < horizon) {
      if (noises.xi[t].size() != a.rows()) fail(ErrorCode::dimension, "process noise has wrong size");
      x = a * x + noises.xi[t];
    }
  }
  out.states = std::move(states);
  out.noises = noises;
  return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory) {
  const Eigen::Index m = trajectory.outputs.empty() ? 0 : trajectory.outputs.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < m; ++i) os << ",y_" << (i + 1);
  os << "\n" << std::setprecision(17);
  for (std::size_t t = 0; t < trajectory.outputs.size(); ++t) {
    os << t;
    for (Eigen::Index i = 0; i < m; ++i) os << "," << trajectory.outputs[t](i);
    os << "\n";
  }
}

}  // namespace kflearn
