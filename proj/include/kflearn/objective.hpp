#pragma once

#include <cstddef>
#include <cstdint>

#include "kflearn/filtering.hpp"
#include "kflearn/linalg.hpp"
#include "kflearn/system_model.hpp"

namespace kflearn {

/// Steady-state cost and gradient at a stabilizing gain.
///   X = A_L X A_Lᵀ + Q + L R Lᵀ,   Y = A_Lᵀ Y A_L + Hᵀ H,
///   J = tr(X Hᵀ H),               ∇J = 2 Y (L R − A_L X Hᵀ).
struct CostReport {
  double J = 0.0;
  Matrix X;
  Matrix Y;
  Matrix grad;
};

/// Throws ErrorCode::instability for gains outside the stabilizing set.
CostReport evaluate_cost(const SystemModel& model, const GainMatrix& gain);

double cost_J(const SystemModel& model, const GainMatrix& gain);
Matrix grad_J(const SystemModel& model, const GainMatrix& gain);

/// J_T(L) = tr(X_T Hᵀ H) [+ tr R], with
/// X_T = A_L^T P0 (A_Lᵀ)^T + Σ_{t<T} A_L^t (Q + L R Lᵀ)(A_Lᵀ)^t.
/// A finite sum, so no stability requirement.
double truncated_cost_J_T(const SystemModel& model, const GainMatrix& gain, std::size_t horizon, bool include_trace_r);

/// Exact gradient of truncated_cost_J_T with respect to L:
///   ∇J_T = 2 Y_T L R − 2 Σ_{k<T} (A_Lᵀ)^k Hᵀ H A_L^{k+1} (S_{T−1−k} + Π_{T−1−k}) Hᵀ,
/// with Y_T = Σ_{t<T} (A_Lᵀ)^t Hᵀ H A_L^t, S_j the first j terms of the
/// noise sum and Π_j = A_L^j P0 (A_Lᵀ)^j.
Matrix truncated_grad_J_T(const SystemModel& model, const GainMatrix& gain, std::size_t horizon);

/// Cost of the constant-gain feedback u(t) = Lᵀ z(t) on the adjoint system
/// z(t) = Aᵀ z(t+1) − Hᵀ u(t+1), z(T) = a, i.e.
/// z(0)ᵀ P0 z(0) + Σ_{t=1}^T [z(t)ᵀ Q z(t) + u(t)ᵀ R u(t)], evaluated in
/// closed form with z(t) = (A_Lᵀ)^{T−t} a.
double adjoint_lqr_cost(const SystemModel& model, const GainMatrix& gain, std::size_t horizon, const Vector& terminal);

struct DualityReport {
  std::size_t horizon = 0;
  std::size_t samples = 0;
  double lhs = 0.0;                // Monte-Carlo mean of ‖y(T) − ŷ_L(T)‖²
  double lhs_stderr = 0.0;
  double adjoint_cost_sum = 0.0;   // Σ_i J_T^LQR(H_i, Lᵀ-feedback)
  double rhs = 0.0;                // adjoint_cost_sum + tr R
  double truncated_cost = 0.0;     // truncated_cost_J_T(..., include_trace_r = true)
  double identity_gap = 0.0;       // |rhs − truncated_cost|
};

/// Cross-checks the estimation/control duality: the closed-form adjoint side
/// is compared with truncated_cost_J_T (throws ErrorCode::numerical beyond
/// 1e-10 relative) and with a Monte-Carlo estimate from `samples` simulated
/// trajectories (trajectory i seeded with derive_seed(seed, i)).
DualityReport duality_check(const SystemModel& model, const NoiseConfig& noise, const GainMatrix& gain,
                            std::size_t horizon, std::size_t samples, std::uint64_t seed, std::size_t workers = 1);

}  // namespace kflearn
