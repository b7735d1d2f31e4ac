#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kflearn/linalg.hpp"

namespace kflearn {

/// Ground-truth LTI model x(t+1) = A x(t) + ξ(t), y(t) = H x(t) + ω(t) with
/// cov ξ = Q, cov ω = R and x(0) ~ (m0, P0).
///
/// Construction validates dimensions, symmetry/PSD of Q, R and P0, finiteness
/// and observability of (A, H). R is only required PSD here so noiseless
/// models can be simulated; operations that invert H P Hᵀ + R check it.
class SystemModel {
 public:
  SystemModel(Matrix a, Matrix h, Matrix q, Matrix r, Matrix p0, std::optional<Vector> m0 = std::nullopt);

  const Matrix& A() const { return a_; }
  const Matrix& H() const { return h_; }
  const Matrix& Q() const { return q_; }
  const Matrix& R() const { return r_; }
  const Matrix& P0() const { return p0_; }
  const Vector& m0() const { return m0_; }

  std::size_t n() const { return static_cast<std::size_t>(a_.rows()); }
  std::size_t m() const { return static_cast<std::size_t>(h_.rows()); }

  /// Nonzero m0 is permitted but the error-vector and truncation analyses
  /// assume a zero-mean initial state.
  bool has_zero_initial_mean() const { return m0_.isZero(0.0); }

 private:
  Matrix a_, h_, q_, r_, p0_;
  Vector m0_;
};

/// Rank of [H; HA; …; HA^{n−1}] equals n.
bool is_observable(const Matrix& a, const Matrix& h);

struct MassSpringParameters {
  double omega = 1.0;
  double dt = 0.1;
  double process_variance = 0.1;
  double measurement_variance = 0.1;
  double initial_variance = 0.05;
};

/// Undamped oscillator sampled exactly: A = [[cos ωΔ, sin(ωΔ)/ω], [−ω sin ωΔ, cos ωΔ]],
/// H = [1 0], Q = q I, R = r, P0 = p0 I, m0 = 0.
SystemModel mass_spring_model(const MassSpringParameters& params = {});

enum class NoiseFamily { truncated_gaussian, scaled_uniform };

std::string to_string(NoiseFamily family);
NoiseFamily noise_family_from_string(const std::string& name);

/// Almost-sure bounds ‖x(0)‖, ‖ξ(t)‖ ≤ κ_ξ and ‖ω(t)‖ ≤ κ_ω. Draws exceeding a
/// bound are redrawn, so the realised covariance is the nominal one
/// conditioned on the bound.
struct NoiseConfig {
  double kappa_xi = 1.0;
  double kappa_omega = 1.0;
  NoiseFamily family = NoiseFamily::truncated_gaussian;
};

void validate(const NoiseConfig& noise);

/// Bounds at `sigmas` nominal standard deviations: κ_ξ = sigmas·max(√tr Q,
/// √tr P0) (plus ‖m0‖), κ_ω = sigmas·√tr R. Zero covariances fall back to 1.
NoiseConfig default_noise_config(const SystemModel& model, double sigmas = 6.0,
                                 NoiseFamily family = NoiseFamily::truncated_gaussian);

struct NoiseRecord {
  Vector x0;
  std::vector<Vector> xi;     // ξ(0..T−1)
  std::vector<Vector> omega;  // ω(0..T)
};

struct Trajectory {
  std::vector<Vector> outputs;              // y(0..T)
  std::optional<std::vector<Vector>> states;  // x(0..T)
  std::optional<NoiseRecord> noises;
  std::uint64_t seed = 0;

  std::size_t horizon() const { return outputs.empty() ? 0 : outputs.size() - 1; }
};

/// Simulator with the noise square-root factors precomputed.
///
/// A trajectory draws x(0), then ω(t) and ξ(t) for t = 0..T in that order from
/// one mt19937_64 seeded with `seed`. Without `keep_record` only the outputs
/// are stored.
class TrajectorySimulator {
 public:
  TrajectorySimulator(const SystemModel& model, const NoiseConfig& noise);

  Trajectory run(std::size_t horizon, std::uint64_t seed, bool keep_record = true) const;

  /// Trajectory i uses derive_seed(seed, i).
  std::vector<Trajectory> batch(std::size_t horizon, std::size_t batch_size, std::uint64_t seed,
                                std::size_t workers = 1, bool keep_record = true) const;

  const SystemModel& model() const { return model_; }
  const NoiseConfig& noise() const { return noise_; }

 private:
  SystemModel model_;
  NoiseConfig noise_;
  Matrix initial_factor_, process_factor_, measurement_factor_;
};

Trajectory simulate(const SystemModel& model, const NoiseConfig& noise, std::size_t horizon, std::uint64_t seed);

/// M trajectories; trajectory i uses derive_seed(seed, i). Generation is
/// split across `workers` threads with identical output for any count.
std::vector<Trajectory> make_batch(const SystemModel& model, const NoiseConfig& noise, std::size_t horizon,
                                   std::size_t batch_size, std::uint64_t seed, std::size_t workers = 1);

/// Rebuilds a trajectory (states, outputs, noise record) from explicit noises.
Trajectory trajectory_from_noises(const Matrix& a, const Matrix& h, const NoiseRecord& noises);

/// CSV with header `t,y_1,…,y_m`.
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);

}  // namespace kflearn
