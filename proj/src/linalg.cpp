#include "kflearn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "kflearn/errors.hpp"

namespace kflearn {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::instability: return "instability error";
    case ErrorCode::domain: return "domain error";
    case ErrorCode::convergence: return "convergence error";
    case ErrorCode::stall: return "stall error";
    case ErrorCode::initialization: return "initialization error";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::inconclusive: return "inconclusive";
    case ErrorCode::diagnostic: return "diagnostic failure";
    case ErrorCode::numerical: return "numerical error";
  }
  return "error";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << " must be square, got " << m.rows() << "x" << m.cols();
    fail(ErrorCode::dimension, os.str());
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).norm() <= tol * (1.0 + m.norm());
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double spectral_radius(const Matrix& m) {
  require_square(m, "spectral_radius input");
  if (!m.allFinite()) fail(ErrorCode::domain, "spectral_radius input has non-finite entries");
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) fail(ErrorCode::numerical, "eigenvalue iteration did not converge");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

double nuclear_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().sum();
}

double min_eigenvalue_symmetric(const Matrix& m) {
  require_square(m, "symmetric eigenvalue input");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue_symmetric(const Matrix& m) {
  require_square(m, "symmetric eigenvalue input");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Matrix psd_sqrt(const Matrix& m) {
  require_square(m, "psd_sqrt input");
  const Eigen::Index n = m.rows();
  if (n == 0) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  // Eigen returns ascending order; reverse so the factor is built largest first.
  Matrix v = es.eigenvectors().rowwise().reverse();
  Vector lambda = es.eigenvalues().reverse().cwiseMax(0.0);
  for (Eigen::Index j = 0; j < n; ++j) {
    // Fix the sign of each eigenvector: largest-magnitude component positive.
    Eigen::Index idx = 0;
    v.col(j).cwiseAbs().maxCoeff(&idx);
    if (v(idx, j) < 0.0) v.col(j) = -v.col(j);
  }
  return v * lambda.cwiseSqrt().asDiagonal() * v.transpose();
}

double lyapunov_residual(const Matrix& f, const Matrix& w, const Matrix& x) {
  return (x - f * x * f.transpose() - w).norm();
}

Matrix solve_discrete_lyapunov(const Matrix& f, const Matrix& w) {
  require_square(f, "Lyapunov transition matrix");
  require_square(w, "Lyapunov forcing matrix");
  if (f.rows() != w.rows()) fail(ErrorCode::dimension, "Lyapunov operands have mismatched sizes");
  if (!f.allFinite() || !w.allFinite()) fail(ErrorCode::domain, "Lyapunov operands have non-finite entries");
  if (!is_symmetric(w, 1e-10)) fail(ErrorCode::domain, "Lyapunov forcing matrix is not symmetric");
  const double rho = spectral_radius(f);
  if (rho >= 1.0) {
    std::ostringstream os;
    os << "Lyapunov transition matrix has spectral radius " << rho << " >= 1";
    fail(ErrorCode::instability, os.str());
  }

  constexpr int kMaxIterations = 200;
  Matrix x = symmetrize(w);
  Matrix fk = f;
  for (int it = 0; it < kMaxIterations; ++it) {
    Matrix increment = fk * x * fk.transpose();
    x += increment;
    const double inc = increment.norm();
    if (inc <= 1e-17 * (1.0 + x.norm()) || !fk.allFinite()) break;
    fk = fk * fk;
    if (fk.norm() == 0.0) break;
  }
  if (!x.allFinite()) fail(ErrorCode::numerical, "Lyapunov doubling overflowed");
  x = symmetrize(x);
  const double residual = lyapunov_residual(f, w, x);
  if (residual > 1e-10 * (1.0 + w.norm()) * (1.0 + x.norm())) {
    std::ostringstream os;
    os << "Lyapunov residual " << residual << " above tolerance";
    fail(ErrorCode::convergence, os.str());
  }
  return x;
}

namespace {

double resolvent_max(const Matrix& m, double r, std::size_t grid_points) {
  using Complex = std::complex<double>;
  const Eigen::Index n = m.rows();
  const Eigen::MatrixXcd mc = m.cast<Complex>();
  double best = 0.0;
  for (std::size_t j = 0; j < grid_points; ++j) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(grid_points);
    const Complex z = std::polar(r, theta);
    Eigen::MatrixXcd shifted = -mc;
    shifted.diagonal().array() += z;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(shifted);
    const double smin = svd.singularValues()(n - 1);
    const double value = smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity();
    best = std::max(best, value);
  }
  return best;
}

bool certifies_powers(const Matrix& m, double c, double r) {
  Matrix power = Matrix::Identity(m.rows(), m.cols());
  double scale = r;
  for (std::size_t k = 0; k <= kPowerCertificateHorizon; ++k) {
    if (spectral_norm(power) > c * scale * (1.0 + 1e-12)) return false;
    power = power * m;
    scale *= r;
  }
  return true;
}

}  // namespace

ResolventEstimate resolvent_constant(const Matrix& m, std::size_t grid_points, double fallback_radius) {
  require_square(m, "closed-loop matrix");
  if (grid_points < 64) fail(ErrorCode::domain, "resolvent grid needs at least 64 points");
  if (!(fallback_radius > 0.0 && fallback_radius < 1.0)) fail(ErrorCode::domain, "fallback radius must lie in (0,1)");
  const double rho = spectral_radius(m);
  if (rho >= 1.0) fail(ErrorCode::instability, "resolvent constant requires a Schur-stable matrix");

  ResolventEstimate out;
  out.radius = rho > 0.0 ? std::sqrt(rho) : fallback_radius;
  std::size_t points = grid_points;
  for (int attempt = 0; attempt <= 4; ++attempt, points *= 2) {
    const double coarse = resolvent_max(m, out.radius, points);
    const double fine = resolvent_max(m, out.radius, 2 * points);
    out.c_value = coarse;
    out.grid_points = points;
    out.refinement_change = std::abs(fine - coarse) / coarse;
    out.refinement_warning = out.refinement_change >= 0.01;
    if (certifies_powers(m, out.c_value, out.radius)) return out;
  }
  fail(ErrorCode::diagnostic, "resolvent grid estimate does not certify the power bound after refinement");
}

}  // namespace kflearn
