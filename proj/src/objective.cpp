#include "kflearn/objective.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "kflearn/errors.hpp"
#include "kflearn/parallel.hpp"
#include "kflearn/rng.hpp"

namespace kflearn {

namespace {

void require_gain_matches(const SystemModel& model, const GainMatrix& gain) {
  if (gain.n() != model.n() || gain.m() != model.m()) fail(ErrorCode::dimension, "gain does not match the model");
}

void require_stabilizing(const GainMatrix& gain) {
  if (!gain.is_stabilizing()) {
    std::ostringstream os;
    os << "gain is not stabilizing (rho(A - L H) = " << gain.rho() << ")";
    fail(ErrorCode::instability, os.str());
  }
}

Matrix noise_forcing(const SystemModel& model, const GainMatrix& gain) {
  const Matrix& l = gain.gain();
  return symmetrize(model.Q() + l * model.R() * l.transpose());
}

}  // namespace

CostReport evaluate_cost(const SystemModel& model, const GainMatrix& gain) {
  require_gain_matches(model, gain);
  require_stabilizing(gain);
  const Matrix& al = gain.closed_loop();
  const Matrix& h = model.H();
  const Matrix hth = h.transpose() * h;
  CostReport out;
  out.X = solve_discrete_lyapunov(al, noise_forcing(model, gain));
  out.Y = solve_discrete_lyapunov(al.transpose(), hth);
  out.J = (out.X * hth).trace();
  out.grad = 2.0 * out.Y * (gain.gain() * model.R() - al * out.X * h.transpose());
  return out;
}

double cost_J(const SystemModel& model, const GainMatrix& gain) {
  require_gain_matches(model, gain);
  require_stabilizing(gain);
  const Matrix& h = model.H();
  const Matrix x = solve_discrete_lyapunov(gain.closed_loop(), noise_forcing(model, gain));
  return (h * x * h.transpose()).trace();
}

Matrix grad_J(const SystemModel& model, const GainMatrix& gain) { return evaluate_cost(model, gain).grad; }

double truncated_cost_J_T(const SystemModel& model, const GainMatrix& gain, std::size_t horizon, bool include_trace_r) {
  require_gain_matches(model, gain);
  if (horizon < 1) fail(ErrorCode::domain, "horizon T must be at least 1");
  const Matrix& al = gain.closed_loop();
  const Matrix w = noise_forcing(model, gain);
  Matrix x = Matrix::Zero(al.rows(), al.cols());
  Matrix power = Matrix::Identity(al.rows(), al.cols());
  for (std::size_t t = 0; t < horizon; ++t) {
    x += power * w * power.transpose();
    power = al * power;
  }
  x += power * model.P0() * power.transpose();
  const Matrix& h = model.H();
  double j = (h * x * h.transpose()).trace();
  if (include_trace_r) j += model.R().trace();
  return j;
}

Matrix truncated_grad_J_T(const SystemModel& model, const GainMatrix& gain, std::size_t horizon) {
  require_gain_matches(model, gain);
  if (horizon < 1) fail(ErrorCode::domain, "horizon T must be at least 1");
  const Matrix& al = gain.closed_loop();
  const Matrix& h = model.H();
  const Eigen::Index n = al.rows();
  const Matrix hth = h.transpose() * h;
  const Matrix w = noise_forcing(model, gain);

  // partial[j] = S_j + Π_j for j = 0..T−1.
  std::vector<Matrix> partial(horizon);
  Matrix noise_sum = Matrix::Zero(n, n);
  Matrix power = Matrix::Identity(n, n);
  for (std::size_t j = 0; j < horizon; ++j) {
    partial[j] = noise_sum + power * model.P0() * power.transpose();
    noise_sum += power * w * power.transpose();
    power = al * power;
  }

  Matrix y_sum = Matrix::Zero(n, n);
  Matrix dynamics_term = Matrix::Zero(n, n);
  Matrix left = hth;  // (A_Lᵀ)^k Hᵀ H A_L^k
  for (std::size_t k = 0; k < horizon; ++k) {
    y_sum += left;
    dynamics_term += left * al * partial[horizon - 1 - k];
    left = al.transpose() * left * al;
  }
  return 2.0 * y_sum * gain.gain() * model.R() - 2.0 * dynamics_term * h.transpose();
}

double adjoint_lqr_cost(const SystemModel& model, const GainMatrix& gain, std::size_t horizon, const Vector& terminal) {
  require_gain_matches(model, gain);
  if (terminal.size() != static_cast<Eigen::Index>(model.n())) fail(ErrorCode::dimension, "adjoint terminal state has wrong size");
  const Matrix alt = gain.closed_loop().transpose();
  const Matrix& l = gain.gain();
  // Walk backward from z(T) = a.
  Vector z = terminal;
  double cost = 0.0;
  for (std::size_t t = horizon; t >= 1; --t) {
    const Vector u = l.transpose() * z;
    cost += z.dot(model.Q() * z) + u.dot(model.R() * u);
    z = alt * z;
  }
  cost += z.dot(model.P0() * z);
  return cost;
}

DualityReport duality_check(const SystemModel& model, const NoiseConfig& noise, const GainMatrix& gain,
                            std::size_t horizon, std::size_t samples, std::uint64_t seed, std::size_t workers) {
  require_gain_matches(model, gain);
  if (horizon < 1) fail(ErrorCode::domain, "horizon T must be at least 1");
  if (samples < 1) fail(ErrorCode::domain, "duality check needs at least one Monte-Carlo sample");

  DualityReport out;
  out.horizon = horizon;
  out.samples = samples;
  for (Eigen::Index i = 0; i < model.H().rows(); ++i) {
    out.adjoint_cost_sum += adjoint_lqr_cost(model, gain, horizon, model.H().row(i).transpose());
  }
  out.rhs = out.adjoint_cost_sum + model.R().trace();
  out.truncated_cost = truncated_cost_J_T(model, gain, horizon, true);
  out.identity_gap = std::abs(out.rhs - out.truncated_cost);
  if (out.identity_gap > 1e-10 * (1.0 + std::abs(out.truncated_cost))) {
    std::ostringstream os;
    os << "adjoint cost " << out.rhs << " disagrees with truncated cost " << out.truncated_cost;
    fail(ErrorCode::numerical, os.str());
  }

  const TrajectorySimulator simulator(model, noise);
  std::vector<double> errors(samples);
  parallel_for(samples, workers, [&](std::size_t i) {
    const Trajectory traj = simulator.run(horizon, derive_seed(seed, i), false);
    errors[i] = fixed_gain_predict(model.A(), model.H(), gain.gain(), traj, model.m0()).error.squaredNorm();
  });
  const double mean = pairwise_sum(std::span<const double>(errors)) / static_cast<double>(samples);
  std::vector<double> squares(samples);
  for (std::size_t i = 0; i < samples; ++i) squares[i] = (errors[i] - mean) * (errors[i] - mean);
  out.lhs = mean;
  if (samples > 1) {
    const double var = pairwise_sum(std::span<const double>(squares)) / static_cast<double>(samples - 1);
    out.lhs_stderr = std::sqrt(var / static_cast<double>(samples));
  }
  return out;
}

}  // namespace kflearn
