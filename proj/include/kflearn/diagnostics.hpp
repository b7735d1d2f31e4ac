#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kflearn/filtering.hpp"
#include "kflearn/linalg.hpp"
#include "kflearn/system_model.hpp"

namespace kflearn {

/// Prediction error at T written through the stacked noise vector
/// η⃗ = ξ⃗ − (I ⊗ L) ω⃗ and 𝒜_L = (A_L⁰ … A_L^T):
///   eps_vectorized = tr(η⃗ η⃗ᵀ 𝒜_Lᵀ Hᵀ H 𝒜_L) = ‖H x(T) − ŷ_L(T)‖²,
/// since ω⃗ ends with 0_m. The measured error ‖y(T) − ŷ_L(T)‖² adds the
/// ω(T) cross and square terms; both pairs are reported.
struct EpsilonReport {
  double eps_direct = 0.0;             // ‖y(T) − ŷ_L(T)‖² from fixed_gain_predict
  double eps_vectorized = 0.0;         // stacked-noise quadratic form
  double eps_state_direct = 0.0;       // ‖H x(T) − ŷ_L(T)‖² = ‖y(T) − ω(T) − ŷ_L(T)‖²
  double eps_vectorized_with_measurement = 0.0;  // eps_vectorized + 2 ω(T)ᵀ H 𝒜 η⃗ + ‖ω(T)‖²
  double discrepancy = 0.0;
};

/// ξ⃗ = (ξ(T−1), …, ξ(0), x(0)).
Vector stacked_process_noise(const NoiseRecord& noises);
/// ω⃗ = (ω(T−1), …, ω(0), 0_m).
Vector stacked_measurement_noise(const NoiseRecord& noises);
/// 𝒜_L = (A_L⁰ A_L¹ … A_L^T), n × n(T+1).
Matrix stacked_closed_loop_powers(const Matrix& closed_loop, std::size_t horizon);

/// Requires the simulator's noise record (ErrorCode::domain otherwise) and
/// assumes m0 = 0. Throws ErrorCode::diagnostic if either pair disagrees by
/// more than 1e-10·(1 + eps_direct).
EpsilonReport epsilon_vector_form(const Matrix& a, const Matrix& h, const GainMatrix& gain, const Trajectory& trajectory);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y ≈ slope·x + intercept; needs ≥ 2 distinct xs.
LinearFit fit_line(std::span<const double> xs, std::span<const double> ys);

struct DecayReport {
  std::vector<double> xs;       // T or M values
  std::vector<double> errors;
  std::vector<double> stderrs;  // Monte-Carlo standard errors (0 for closed form)
  double fitted_slope = 0.0;
  double fit_r2 = 0.0;
  double reference_slope = 0.0;
  std::size_t fit_points = 0;
  bool floor_reached = false;
  // Conservative constant from the analysis (γ̄_L or ν_L) and the bound curve.
  double bound_constant = 0.0;
  std::vector<double> bound_values;
  bool bound_holds = true;
  bool monotone = true;
  bool passed = true;
  std::vector<std::string> notes;
};

enum class GradientSource { closed_form, monte_carlo };

struct TruncationOptions {
  GradientSource source = GradientSource::closed_form;
  // Bounds for the γ̄_L constant (and the simulator in Monte-Carlo mode);
  // default_noise_config(model) when empty.
  std::optional<NoiseConfig> noise;
  std::uint64_t seed = 0;
  std::size_t initial_samples = 1000;
  std::size_t max_samples = 1'000'000;
  std::size_t workers = 1;
};

/// ‖∇J_T(L) − ∇J(L)‖ (spectral norm) for each T, fitted on a log scale
/// against T. reference_slope = ln √ρ(A_L); bound_values = γ̄_L √ρ^{T+1}.
/// In Monte-Carlo mode ∇J_T is the mean of stochastic_grad with the sample
/// count quadrupled until the standard error is below 10% of the gap;
/// exhausting max_samples raises ErrorCode::inconclusive.
/// `passed` means a negative slope, a gap that never grows with T (beyond
/// twice the combined standard errors, or the floor) and the bound held.
DecayReport truncation_decay(const SystemModel& model, const GainMatrix& gain, std::span<const std::size_t> horizons,
                             const TruncationOptions& options = {});

/// Mean spectral-norm deviation of batch_grad from the pooled mean of all
/// trajectories, for each batch size, over `reps` independent batches;
/// fitted log-log. `passed` means the slope is within −0.5 ± 0.15.
/// bound_constant is ν_L = 4 κ_L² C_L³ ‖H‖² ‖H‖_* / (1 − √ρ)³.
DecayReport concentration_sweep(const SystemModel& model, const NoiseConfig& noise, const GainMatrix& gain,
                                std::size_t horizon, std::span<const std::size_t> batch_sizes, std::size_t reps,
                                std::uint64_t seed, std::size_t workers = 1);

struct PowerBoundReport {
  double c_value = 0.0;
  double radius = 0.0;
  std::size_t grid_points = 0;
  std::size_t k_max = 0;
  double worst_ratio = 0.0;  // max_k ‖A_L^k‖ / (C_L r^{k+1})
  std::size_t worst_k = 0;
  bool refined = false;
};

/// Checks ‖A_L^k‖ ≤ C_L √ρ(A_L)^{k+1} for k = 0..k_max. A violation triggers
/// one grid refinement (×8); if it persists, ErrorCode::diagnostic listing
/// the offending k.
PowerBoundReport power_bound_check(const Matrix& closed_loop, std::size_t k_max, std::size_t grid_points = 512);
PowerBoundReport power_bound_check(const GainMatrix& gain, std::size_t k_max, std::size_t grid_points = 512);

}  // namespace kflearn
