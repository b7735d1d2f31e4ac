#include "kflearn/learner.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "kflearn/errors.hpp"
#include "kflearn/objective.hpp"
#include "kflearn/parallel.hpp"
#include "kflearn/rng.hpp"

namespace kflearn {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_dims(const Matrix& a, const Matrix& h, const GainMatrix& gain) {
  require_square(a, "A");
  if (h.cols() != a.rows() || gain.n() != static_cast<std::size_t>(a.rows()) ||
      gain.m() != static_cast<std::size_t>(h.rows())) {
    fail(ErrorCode::dimension, "A, H and L dimensions disagree");
  }
}

}  // namespace

Matrix stochastic_grad(const Matrix& a, const Matrix& h, const GainMatrix& gain, const Trajectory& trajectory) {
  require_dims(a, h, gain);
  const std::size_t horizon = trajectory.horizon();
  if (horizon < 1) fail(ErrorCode::domain, "stochastic gradient needs T >= 1");
  const Matrix& l = gain.gain();
  const Matrix& al = gain.closed_loop();
  const Eigen::Index n = a.rows();
  const Eigen::Index m = h.rows();

  // Forward pass: innovations ν(t) = y(t) − H x̂(t) for t < T, then e_T.
  Matrix innovations(m, static_cast<Eigen::Index>(horizon));
  Vector xhat = Vector::Zero(n);
  for (std::size_t t = 0; t < horizon; ++t) {
    const Vector& y = trajectory.outputs[t];
    if (y.size() != m) fail(ErrorCode::dimension, "trajectory output has wrong size");
    innovations.col(static_cast<Eigen::Index>(t)) = y - h * xhat;
    xhat = al * xhat + l * y;
  }
  const Vector error = trajectory.outputs[horizon] - h * xhat;

  // Backward pass: g_j = (A_Lᵀ)^j Hᵀ e_T paired with ν(T−1−j).
  Matrix grad = Matrix::Zero(n, m);
  Vector g = h.transpose() * error;
  const Matrix alt = al.transpose();
  for (std::size_t j = 0; j < horizon; ++j) {
    grad.noalias() -= 2.0 * g * innovations.col(static_cast<Eigen::Index>(horizon - 1 - j)).transpose();
    g = alt * g;
  }
  return grad;
}

Matrix batch_grad(const Matrix& a, const Matrix& h, const GainMatrix& gain, std::span<const Trajectory> batch,
                  std::size_t workers) {
  if (batch.empty()) fail(ErrorCode::domain, "batch gradient needs a nonempty batch");
  const std::size_t horizon = batch.front().horizon();
  for (const auto& traj : batch) {
    if (traj.horizon() != horizon) fail(ErrorCode::domain, "batch trajectories must share the horizon T");
  }
  std::vector<Matrix> grads(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) { grads[i] = stochastic_grad(a, h, gain, batch[i]); });
  return pairwise_sum(std::span<const Matrix>(grads)) / static_cast<double>(batch.size());
}

double stability_margin(const Matrix& a, const Matrix& h, const GainMatrix& gain, const Matrix& lambda) {
  require_dims(a, h, gain);
  if (lambda.rows() != a.rows() || lambda.cols() != a.rows()) fail(ErrorCode::dimension, "Lambda must be n x n");
  if (!is_symmetric(lambda) || min_eigenvalue_symmetric(lambda) <= 0.0) {
    fail(ErrorCode::domain, "Lambda must be symmetric positive definite");
  }
  if (!gain.is_stabilizing()) fail(ErrorCode::instability, "stability margin requires a stabilizing gain");
  const Matrix z = solve_discrete_lyapunov(gain.closed_loop(), lambda);
  return min_eigenvalue_symmetric(lambda) / (2.0 * max_eigenvalue_symmetric(z) * spectral_norm(h));
}

std::string to_string(Safeguard safeguard) {
  return safeguard == Safeguard::reject_and_shrink ? "reject_and_shrink" : "assert_only";
}

Safeguard safeguard_from_string(const std::string& name) {
  if (name == "reject_and_shrink") return Safeguard::reject_and_shrink;
  if (name == "assert_only") return Safeguard::assert_only;
  fail(ErrorCode::domain, "unknown safeguard '" + name + "'");
}

void validate(const SgdConfig& cfg) {
  if (!(cfg.step_size > 0.0) || !std::isfinite(cfg.step_size)) fail(ErrorCode::domain, "step size must be positive");
  if (cfg.batch_size < 1 || cfg.horizon < 1 || cfg.max_iters < 1) {
    fail(ErrorCode::domain, "batch size, horizon and iteration count must be at least 1");
  }
  if (!(cfg.target_rho > 0.0 && cfg.target_rho < 1.0)) fail(ErrorCode::domain, "target_rho must lie in (0,1)");
}

StallError::StallError(const std::string& what, RunRecord partial)
    : Error(ErrorCode::stall, what), partial_(std::make_shared<const RunRecord>(std::move(partial))) {}

namespace {

void push_entry(RunRecord& rec, GainMatrix gain, double cost, double step, std::size_t rejections,
                std::chrono::nanoseconds elapsed) {
  rec.rhos.push_back(gain.rho());
  rec.iterates.push_back(std::move(gain));
  rec.costs.push_back(cost);
  rec.grad_norms.push_back(kNaN);
  rec.step_sizes.push_back(step);
  rec.rejections.push_back(rejections);
  rec.wall_times.push_back(elapsed);
}

}  // namespace

RunRecord sgd_run(const TrajectorySimulator& simulator, const GainMatrix& initial, const SgdConfig& cfg,
                  const SystemModel* oracle) {
  validate(cfg);
  const SystemModel& sim_model = simulator.model();
  const Matrix& a = sim_model.A();
  const Matrix& h = sim_model.H();
  require_dims(a, h, initial);
  if (!initial.is_stabilizing()) fail(ErrorCode::domain, "initial gain must be stabilizing");

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    if (!cfg.record_timing) return std::chrono::nanoseconds{0};
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
  };
  auto oracle_cost = [&](const GainMatrix& g) { return oracle ? cost_J(*oracle, g) : kNaN; };

  RunRecord rec;
  rec.iterates.reserve(cfg.max_iters + 1);
  push_entry(rec, initial, oracle_cost(initial), 0.0, 0, elapsed());

  for (std::size_t k = 0; k < cfg.max_iters; ++k) {
    const GainMatrix& current = rec.iterates.back();
    const auto batch = simulator.batch(cfg.horizon, cfg.batch_size, derive_seed(cfg.seed, k), cfg.workers, false);
    const Matrix direction = batch_grad(a, h, current, batch, cfg.workers);
    rec.grad_norms.back() = direction.norm();

    double eta = cfg.step_size;
    std::size_t rejections = 0;
    for (;;) {
      const Matrix candidate = current.gain() - eta * direction;
      double candidate_rho = std::numeric_limits<double>::infinity();
      if (candidate.allFinite()) {
        GainMatrix next(a, h, candidate);
        candidate_rho = next.rho();
        if (candidate_rho < cfg.target_rho) {
          const double cost = oracle_cost(next);
          push_entry(rec, std::move(next), cost, eta, rejections, elapsed());
          break;
        }
      }
      ++rejections;
      const bool abort = cfg.safeguard == Safeguard::assert_only || rejections > cfg.max_consecutive_rejections;
      rec.safeguard_events.push_back(
          {k, abort ? SafeguardEvent::Action::aborted : SafeguardEvent::Action::rejected_and_shrunk, candidate_rho, eta});
      if (abort) {
        std::ostringstream os;
        os << "safeguard stopped the run at iteration " << k << " after " << rejections
           << " rejected step(s) (last candidate rho = " << candidate_rho << ", step " << eta << ")";
        throw StallError(os.str(), std::move(rec));
      }
      eta *= 0.5;
    }
  }
  return rec;
}

RunRecord gd_run(const SystemModel& model, const GainMatrix& initial, const GdOptions& options) {
  if (!initial.is_stabilizing()) fail(ErrorCode::domain, "initial gain must be stabilizing");
  if (!(options.tolerance > 0.0) || !(options.initial_step > 0.0) || !(options.shrink > 0.0 && options.shrink < 1.0)) {
    fail(ErrorCode::domain, "invalid gradient-descent options");
  }
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
  };

  RunRecord rec;
  CostReport report = evaluate_cost(model, initial);
  push_entry(rec, initial, report.J, 0.0, 0, elapsed());
  for (std::size_t it = 0;; ++it) {
    const double gnorm = report.grad.norm();
    rec.grad_norms.back() = gnorm;
    if (gnorm <= options.tolerance) return rec;
    if (it >= options.max_iters) {
      std::ostringstream os;
      os << "gradient descent did not reach ||grad|| <= " << options.tolerance << " in " << options.max_iters
         << " iterations (last ||grad|| = " << gnorm << ")";
      fail(ErrorCode::convergence, os.str());
    }

    const GainMatrix& current = rec.iterates.back();
    double eta = options.initial_step;
    std::size_t rejections = 0;
    bool accepted = false;
    for (std::size_t b = 0; b < options.max_backtracks && !accepted; ++b, eta *= options.shrink) {
      GainMatrix candidate(model.A(), model.H(), current.gain() - eta * report.grad);
      if (!candidate.is_stabilizing()) {
        ++rejections;
        continue;
      }
      CostReport next = evaluate_cost(model, candidate);
      // Near the optimum the change in J drops below its rounding error;
      // there the step is judged by the gradient norm instead.
      const bool resolved = std::abs(next.J - report.J) > 1e-13 * (1.0 + std::abs(report.J));
      const bool accept = resolved ? next.J <= report.J - options.sufficient_decrease * eta * gnorm * gnorm
                                   : next.grad.norm() < (1.0 - options.sufficient_decrease) * gnorm;
      if (accept) {
        report = std::move(next);
        push_entry(rec, std::move(candidate), report.J, eta, rejections, elapsed());
        accepted = true;
      } else {
        ++rejections;
      }
    }
    if (!accepted) fail(ErrorCode::convergence, "backtracking line search found no acceptable step");
  }
}

SampleRequirements sample_requirements(const LandscapeConstants& c, const Matrix& h, double kappa_xi,
                                       double kappa_omega, const SampleRequest& req, std::size_t n, std::size_t m) {
  if (!(c.rho > 0.0 && c.rho < 1.0)) fail(ErrorCode::domain, "rho must lie in (0,1)");
  if (!(c.C > 0.0) || !(c.D > 0.0) || !(kappa_xi > 0.0) || !(kappa_omega > 0.0) || !(req.s > 0.0) ||
      !(req.s0 > 0.0)) {
    fail(ErrorCode::domain, "sample-size constants must be positive");
  }
  if (!(req.tau > 0.0 && req.tau < 1.0) || !(req.delta > 0.0 && req.delta < 1.0)) {
    fail(ErrorCode::domain, "tau and delta must lie in (0,1)");
  }
  if (n < 1 || m < 1) fail(ErrorCode::domain, "dimensions must be positive");
  const double h2 = std::pow(spectral_norm(h), 2);
  const double hnuc = nuclear_norm(h);
  const double kappa = kappa_xi + c.D * kappa_omega;
  const double dmin = static_cast<double>(std::min(n, m));
  SampleRequirements out;
  out.gamma_bar = 10.0 * std::pow(kappa, 4) * std::pow(c.C, 6) * h2 * hnuc;
  out.nu = 5.0 * std::pow(c.C, 3) * h2 * hnuc * kappa * kappa / std::pow(1.0 - std::sqrt(c.rho), 3);
  out.horizon_raw = std::log(out.gamma_bar * std::sqrt(dmin) / req.s0) / std::log(1.0 / std::sqrt(c.rho));
  out.batch_raw = 4.0 * out.nu * out.nu * dmin * std::log(2.0 * static_cast<double>(n) / req.delta) /
                  std::pow(req.s * req.s0, 2);
  // Values within rounding of an integer are not pushed to the next one.
  auto ceil_count = [](double v) {
    if (v <= 0.0) return std::size_t{0};
    const double c = std::ceil(v * (1.0 - 1e-12) - 1e-9);
    if (c >= 1.8e19) return std::numeric_limits<std::size_t>::max();
    return static_cast<std::size_t>(std::max(c, 0.0));
  };
  out.horizon_min = ceil_count(out.horizon_raw);
  out.batch_min = ceil_count(out.batch_raw);
  return out;
}

std::string to_string(InitStrategy strategy) {
  switch (strategy) {
    case InitStrategy::surrogate_dare: return "surrogate_dare";
    case InitStrategy::zero_if_stable: return "zero_if_stable";
    case InitStrategy::user: return "user";
  }
  return "user";
}

InitStrategy init_strategy_from_string(const std::string& name) {
  if (name == "surrogate_dare") return InitStrategy::surrogate_dare;
  if (name == "zero_if_stable") return InitStrategy::zero_if_stable;
  if (name == "user") return InitStrategy::user;
  fail(ErrorCode::domain, "unknown initial-gain strategy '" + name + "'");
}

GainMatrix initial_gain(const Matrix& a, const Matrix& h, const InitOptions& options) {
  require_square(a, "A");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = h.rows();
  switch (options.strategy) {
    case InitStrategy::surrogate_dare: {
      if (!(options.surrogate_q > 0.0) || !(options.surrogate_r > 0.0)) {
        fail(ErrorCode::initialization, "surrogate weights must be positive");
      }
      try {
        const SystemModel surrogate(a, h, options.surrogate_q * Matrix::Identity(n, n),
                                    options.surrogate_r * Matrix::Identity(m, m), Matrix::Zero(n, n));
        return steady_state_gain(surrogate).gain;
      } catch (const Error& e) {
        fail(ErrorCode::initialization, std::string("surrogate DARE failed: ") + e.what());
      }
    }
    case InitStrategy::zero_if_stable: {
      GainMatrix zero(a, h, Matrix::Zero(n, m));
      if (!zero.is_stabilizing()) fail(ErrorCode::initialization, "A is not Schur stable, so L = 0 does not stabilize");
      return zero;
    }
    case InitStrategy::user: {
      if (!options.user_gain) fail(ErrorCode::initialization, "strategy 'user' needs a gain");
      GainMatrix gain(a, h, *options.user_gain);
      if (!gain.is_stabilizing()) {
        std::ostringstream os;
        os << "user gain is not stabilizing (rho = " << gain.rho() << ")";
        fail(ErrorCode::initialization, os.str());
      }
      return gain;
    }
  }
  fail(ErrorCode::initialization, "unknown strategy");
}

}  // namespace kflearn
