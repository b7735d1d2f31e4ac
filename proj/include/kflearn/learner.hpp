#pragma once

#include <chrono>
#include <memory>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kflearn/errors.hpp"
#include "kflearn/filtering.hpp"
#include "kflearn/linalg.hpp"
#include "kflearn/system_model.hpp"

namespace kflearn {

/// Gradient of ε(L, Y) = ‖y(T) − ŷ_L(T)‖² for one trajectory (x̂(0) = 0).
///
/// Only A, H, the gain and the outputs are used. Evaluated as
///   ∇ε = −2 Σ_{t<T} (A_Lᵀ)^{T−1−t} Hᵀ e_T ν(t)ᵀ,  ν(t) = y(t) − H x̂(t),
/// which is the per-trajectory double sum regrouped: the inner sum over k
/// collapses to H x̂(T−t−1). Cost O(T n²). Throws ErrorCode::domain for T < 1.
Matrix stochastic_grad(const Matrix& a, const Matrix& h, const GainMatrix& gain, const Trajectory& trajectory);

/// Mean of stochastic_grad over the batch, reduced with an index-ascending
/// pairwise tree so the result is independent of `workers`.
Matrix batch_grad(const Matrix& a, const Matrix& h, const GainMatrix& gain, std::span<const Trajectory> batch,
                  std::size_t workers = 1);

/// λ_min(Λ) / (2 λ_max(Z) ‖H‖) with Z = A_L Z A_Lᵀ + Λ. Any perturbation Δ
/// with ‖Δ‖_F at most this radius keeps L + Δ stabilizing.
double stability_margin(const Matrix& a, const Matrix& h, const GainMatrix& gain, const Matrix& lambda);

enum class Safeguard { reject_and_shrink, assert_only };

std::string to_string(Safeguard safeguard);
Safeguard safeguard_from_string(const std::string& name);

struct SgdConfig {
  double step_size = 1e-3;
  std::size_t batch_size = 1;
  std::size_t horizon = 1;
  std::size_t max_iters = 1;
  std::uint64_t seed = 0;
  Safeguard safeguard = Safeguard::reject_and_shrink;
  double target_rho = 0.995;
  std::size_t max_consecutive_rejections = 50;
  std::size_t workers = 1;
  bool record_timing = true;
};

void validate(const SgdConfig& cfg);

struct SafeguardEvent {
  enum class Action { rejected_and_shrunk, aborted };
  std::size_t iter = 0;
  Action action = Action::rejected_and_shrunk;
  double candidate_rho = 0.0;
  double step_size = 0.0;
};

/// Per-iteration log. Entry 0 is the initial gain; entry k+1 is the iterate
/// accepted at iteration k. Every logged gain is stabilizing.
struct RunRecord {
  std::vector<GainMatrix> iterates;
  std::vector<double> costs;          // oracle J(L_k); NaN without an oracle
  std::vector<double> grad_norms;     // ‖gradient used at L_k‖_F (NaN for the final entry of SGD)
  std::vector<double> rhos;
  std::vector<double> step_sizes;     // step that produced L_k (0 for entry 0)
  std::vector<std::size_t> rejections;  // safeguard rejections before L_k was accepted
  std::vector<std::chrono::nanoseconds> wall_times;  // cumulative since start
  std::vector<SafeguardEvent> safeguard_events;

  std::size_t size() const { return iterates.size(); }
};

/// Raised when the safeguard stops a run; carries the iterates accepted so far.
class StallError : public Error {
 public:
  StallError(const std::string& what, RunRecord partial);
  const RunRecord& partial() const { return *partial_; }

 private:
  std::shared_ptr<const RunRecord> partial_;
};

/// Stochastic gradient descent L_{k+1} = L_k − η ∇Ĵ_T(L_k) on fresh batches.
///
/// Iteration k simulates cfg.batch_size trajectories from `simulator` with
/// seed derive_seed(cfg.seed, k). The update itself only sees A, H and the
/// outputs; `oracle`, if given, is used solely to log J(L_k).
///
/// Safeguard: a candidate with ρ(A_L) ≥ target_rho is rejected. Under
/// reject_and_shrink the step is retried with η halved (the next iteration
/// starts again from cfg.step_size); more than max_consecutive_rejections
/// rejections in a row raise ErrorCode::stall. Under assert_only the first
/// rejection raises ErrorCode::stall. An unstable L0 is ErrorCode::domain.
RunRecord sgd_run(const TrajectorySimulator& simulator, const GainMatrix& initial, const SgdConfig& cfg,
                  const SystemModel* oracle = nullptr);

struct GdOptions {
  double tolerance = 1e-10;
  std::size_t max_iters = 10000;
  double initial_step = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  std::size_t max_backtracks = 80;
};

/// Exact-gradient descent with Armijo backtracking. Candidates that leave the
/// stabilizing set are rejected as part of the backtracking. Stops when
/// ‖∇J‖_F ≤ tolerance; ErrorCode::convergence after max_iters.
RunRecord gd_run(const SystemModel& model, const GainMatrix& initial, const GdOptions& options = {});

/// Landscape constants (C_α, ρ_α, D_α) supplied by the caller, e.g. C from
/// resolvent_constant, ρ from the iterates, D from ‖L‖.
struct LandscapeConstants {
  double C = 1.0;
  double rho = 0.5;
  double D = 1.0;
};

struct SampleRequirements {
  double gamma_bar = 0.0;  // 10 (κ_ξ + D κ_ω)⁴ C⁶ ‖H‖² ‖H‖_*
  double nu = 0.0;         // 5 C³ ‖H‖² ‖H‖_* (κ_ξ + D κ_ω)² / (1 − √ρ)³
  double horizon_raw = 0.0;
  double batch_raw = 0.0;
  std::size_t horizon_min = 0;
  std::size_t batch_min = 0;
};

struct SampleRequest {
  double s = 0.1;
  double s0 = 0.1;
  double tau = 0.5;
  double delta = 0.05;
};

/// T ≥ ln(γ̄ √min(n,m) / s0) / ln(1/√ρ) (clamped at 0) and
/// M ≥ 4 ν² min(n,m) ln(2n/δ) / (s s0)², both rounded up.
SampleRequirements sample_requirements(const LandscapeConstants& constants, const Matrix& h, double kappa_xi,
                                       double kappa_omega, const SampleRequest& request, std::size_t n,
                                       std::size_t m);

enum class InitStrategy { surrogate_dare, zero_if_stable, user };

std::string to_string(InitStrategy strategy);
InitStrategy init_strategy_from_string(const std::string& name);

struct InitOptions {
  InitStrategy strategy = InitStrategy::surrogate_dare;
  // Placeholder weights for surrogate_dare: Q = q I, R = r I.
  double surrogate_q = 1.0;
  double surrogate_r = 1.0;
  std::optional<Matrix> user_gain;
};

/// Initial stabilizing gain built from (A, H) only. Throws
/// ErrorCode::initialization when the strategy yields a non-stabilizing gain.
GainMatrix initial_gain(const Matrix& a, const Matrix& h, const InitOptions& options);

}  // namespace kflearn
