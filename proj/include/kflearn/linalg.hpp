#pragma once

#include <cstddef>

#include <Eigen/Dense>

namespace kflearn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Maximum modulus over the full (complex) eigenvalue set.
double spectral_radius(const Matrix& m);

/// Largest singular value.
double spectral_norm(const Matrix& m);

/// Sum of singular values.
double nuclear_norm(const Matrix& m);

double min_eigenvalue_symmetric(const Matrix& m);
double max_eigenvalue_symmetric(const Matrix& m);

bool is_symmetric(const Matrix& m, double tol = 1e-10);
bool all_finite(const Matrix& m);
Matrix symmetrize(const Matrix& m);

/// Symmetric PSD square root B (B Bᵀ = M) from the eigendecomposition, with
/// eigenpairs taken in descending order and negative eigenvalues clamped.
Matrix psd_sqrt(const Matrix& m);

void require_square(const Matrix& m, const char* what);

/// Unique X with X = F X Fᵀ + W for ρ(F) < 1.
///
/// Solved by the doubling iteration X ← X + F_k X F_kᵀ, F_{k+1} = F_k², which
/// sums the series Σ F^t W (Fᵀ)^t in 2^k terms after k steps. The result is
/// symmetrized. Throws ErrorCode::instability when ρ(F) ≥ 1 and
/// ErrorCode::domain when W is not symmetric.
Matrix solve_discrete_lyapunov(const Matrix& f, const Matrix& w);

/// ‖X − F X Fᵀ − W‖_F.
double lyapunov_residual(const Matrix& f, const Matrix& w, const Matrix& x);

struct ResolventEstimate {
  double c_value = 0.0;
  double radius = 0.0;
  std::size_t grid_points = 0;
  // |C(2N) − C(N)| / C(N); above 1% the grid is flagged as under-resolved.
  double refinement_change = 0.0;
  bool refinement_warning = false;
};

inline constexpr double kZeroSpectrumRadius = 0.5;
inline constexpr std::size_t kPowerCertificateHorizon = 50;

/// Estimates C = max_θ ‖(r e^{iθ} I − M)⁻¹‖ on an equispaced θ-grid with
/// r = √ρ(M), or `fallback_radius` when ρ(M) = 0. The estimate is checked
/// against ‖M^k‖ ≤ C r^{k+1} for k ≤ 50; the grid is doubled (up to four
/// times) until that certificate holds, otherwise ErrorCode::diagnostic.
ResolventEstimate resolvent_constant(const Matrix& m, std::size_t grid_points = 512,
                                     double fallback_radius = kZeroSpectrumRadius);

}  // namespace kflearn
