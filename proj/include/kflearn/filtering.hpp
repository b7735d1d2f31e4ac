#pragma once

#include <cstddef>
#include <optional>

#include "kflearn/linalg.hpp"
#include "kflearn/system_model.hpp"

namespace kflearn {

/// Candidate filter gain L (n×m) with its closed loop A_L = A − L H and
/// ρ(A_L) cached at construction.
class GainMatrix {
 public:
  GainMatrix(const Matrix& a, const Matrix& h, Matrix gain);

  const Matrix& gain() const { return gain_; }
  const Matrix& closed_loop() const { return closed_loop_; }
  double rho() const { return rho_; }
  bool is_stabilizing() const { return rho_ < 1.0; }

  std::size_t n() const { return static_cast<std::size_t>(gain_.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(gain_.cols()); }

 private:
  Matrix gain_;
  Matrix closed_loop_;
  double rho_;
};

struct FilterState {
  Vector xhat;
  Matrix P;
  std::size_t t = 0;
};

/// One step of the time-varying Kalman filter:
///   L(t) = A P Hᵀ S⁻¹,  S = H P Hᵀ + R,
///   x̂(t+1) = A x̂ + L(t)(y − H x̂),
///   P(t+1) = A P Aᵀ + Q − A P Hᵀ S⁻¹ H P Aᵀ   (symmetrized).
FilterState kf_step(const SystemModel& model, const FilterState& state, const Vector& y);

/// Gain used by kf_step at this state.
Matrix kalman_gain(const SystemModel& model, const Matrix& p);

struct SteadyStateSolution {
  GainMatrix gain;
  Matrix p_inf;
  std::size_t iterations = 0;
};

inline constexpr std::size_t kRiccatiMaxIterations = 100000;

/// Iterates the Riccati recursion from P0 until ‖P(t+1) − P(t)‖_F ≤
/// 1e-12·max(1, ‖P‖_F) and returns L_∞ = A P_∞ Hᵀ (H P_∞ Hᵀ + R)⁻¹.
/// Throws ErrorCode::convergence on iteration exhaustion and
/// ErrorCode::instability if the limit gain does not stabilize A − L H.
SteadyStateSolution steady_state_gain(const SystemModel& model, std::size_t max_iterations = kRiccatiMaxIterations);

struct Prediction {
  Vector yhat;
  Vector error;
};

/// ŷ_L(T) by the forward recursion x̂(t+1) = A_L x̂(t) + L y(t), x̂(0) = m0
/// (zero when omitted). Only A and H enter; the gain need not be stabilizing.
Prediction fixed_gain_predict(const Matrix& a, const Matrix& h, const Matrix& gain, const Trajectory& trajectory,
                              const std::optional<Vector>& m0 = std::nullopt);

}  // namespace kflearn
