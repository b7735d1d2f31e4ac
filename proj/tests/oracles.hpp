// Reference implementations used only by the tests. They are written from
// the defining formulas and deliberately share no code with the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// vec(X) = (I − F⊗F)⁻¹ vec(W).
inline Matrix lyapunov_kron(const Matrix& f, const Matrix& w) {
  const Eigen::Index n = f.rows();
  Matrix kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = f(i, j) * f;
  }
  const Matrix lhs = Matrix::Identity(n * n, n * n) - kron;
  const Vector w_vec = Eigen::Map<const Vector>(w.data(), n * n);
  const Vector x_vec = lhs.fullPivLu().solve(w_vec);
  return Eigen::Map<const Matrix>(x_vec.data(), n, n);
}

inline double spectral_radius(const Matrix& m) { return m.eigenvalues().cwiseAbs().maxCoeff(); }

// J(L) = tr(H X Hᵀ), X the stationary covariance of the closed loop.
inline double cost(const Matrix& a, const Matrix& h, const Matrix& q, const Matrix& r, const Matrix& l) {
  const Matrix al = a - l * h;
  const Matrix x = lyapunov_kron(al, q + l * r * l.transpose());
  return (h * x * h.transpose()).trace();
}

// Scalar closed forms with a_L = a − l h.
inline double scalar_cost(double a, double h, double q, double r, double l) {
  const double al = a - l * h;
  return h * h * (q + l * l * r) / (1.0 - al * al);
}

inline double scalar_grad(double a, double h, double q, double r, double l) {
  const double al = a - l * h;
  const double d = 1.0 - al * al;
  return h * h * (2.0 * l * r * d - (q + l * l * r) * 2.0 * al * h) / (d * d);
}

// J_T = h² (a_L^{2T} p0 + Σ_{t<T} a_L^{2t} (q + l² r)) + r.
inline double scalar_truncated_cost(double a, double h, double q, double r, double p0, double l, std::size_t T) {
  const double al = a - l * h;
  double x = std::pow(al, 2.0 * static_cast<double>(T)) * p0;
  for (std::size_t t = 0; t < T; ++t) x += std::pow(al, 2.0 * static_cast<double>(t)) * (q + l * l * r);
  return h * h * x + r;
}

// Central differences, entry by entry.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at, double step) {
  Matrix g(at.rows(), at.cols());
  for (Eigen::Index i = 0; i < at.rows(); ++i) {
    for (Eigen::Index j = 0; j < at.cols(); ++j) {
      Matrix plus = at;
      Matrix minus = at;
      plus(i, j) += step;
      minus(i, j) -= step;
      g(i, j) = (f(plus) - f(minus)) / (2.0 * step);
    }
  }
  return g;
}

// ŷ(T) = H Σ_{t<T} A_L^t L y(T−t−1), i.e. the fixed-gain predictor from x̂(0) = 0.
inline Vector power_sum_prediction(const Matrix& a, const Matrix& h, const Matrix& l, const std::vector<Vector>& y) {
  const std::size_t T = y.size() - 1;
  const Matrix al = a - l * h;
  Vector acc = Vector::Zero(a.rows());
  Matrix power = Matrix::Identity(a.rows(), a.cols());
  for (std::size_t t = 0; t < T; ++t) {
    acc += power * l * y[T - t - 1];
    power = al * power;
  }
  return h * acc;
}

inline double prediction_error(const Matrix& a, const Matrix& h, const Matrix& l, const std::vector<Vector>& y) {
  return (y.back() - power_sum_prediction(a, h, l, y)).squaredNorm();
}

// The per-trajectory gradient as the literal double sum over (t, k):
// −2 Σ_t [(A_Lᵀ)^t Hᵀ e y(T−t−1)ᵀ − Σ_{k=1}^t (A_Lᵀ)^{t−k} Hᵀ e y(T−t−1)ᵀ Lᵀ (A_Lᵀ)^{k−1} Hᵀ].
inline Matrix double_sum_gradient(const Matrix& a, const Matrix& h, const Matrix& l, const std::vector<Vector>& y) {
  const std::size_t T = y.size() - 1;
  const Matrix alt = (a - l * h).transpose();
  const Vector e = y.back() - power_sum_prediction(a, h, l, y);
  auto power = [&](std::size_t k) {
    Matrix p = Matrix::Identity(alt.rows(), alt.cols());
    for (std::size_t i = 0; i < k; ++i) p = alt * p;
    return p;
  };
  Matrix grad = Matrix::Zero(l.rows(), l.cols());
  for (std::size_t t = 0; t < T; ++t) {
    const Matrix outer = h.transpose() * e * y[T - t - 1].transpose();
    grad -= 2.0 * power(t) * outer;
    for (std::size_t k = 1; k <= t; ++k) {
      grad += 2.0 * power(t - k) * outer * l.transpose() * power(k - 1) * h.transpose();
    }
  }
  return grad;
}

// Scalar DARE for the prior covariance: p = a² p − a² p² h² / (h² p + r) + q.
inline double scalar_dare_gain(double a, double h, double q, double r) {
  // h² p² + (r − a² r − q h²) p − q r = 0, positive root.
  const double b = r - a * a * r - q * h * h;
  const double p = (-b + std::sqrt(b * b + 4.0 * h * h * q * r)) / (2.0 * h * h);
  return a * p * h / (h * h * p + r);
}

struct RandomSystem {
  Matrix a, h, q, r, p0;
};

// Observable (A, H) with ρ(A) ≤ max_rho, Q, R, P0 positive definite.
inline RandomSystem random_system(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m, double max_rho = 1.1) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unif(0.3, max_rho);
  auto rand = [&](Eigen::Index r, Eigen::Index c) {
    Matrix out(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) out(i, j) = gauss(rng);
    }
    return out;
  };
  auto spd = [&](Eigen::Index k) {
    const Matrix b = rand(k, k);
    return Matrix(b * b.transpose() / static_cast<double>(k) + 0.1 * Matrix::Identity(k, k));
  };
  RandomSystem s;
  for (;;) {
    s.a = rand(n, n);
    s.a *= unif(rng) / spectral_radius(s.a);
    s.h = rand(m, n);
    Matrix obs(m * n, n);
    Matrix power = Matrix::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      obs.middleRows(i * m, m) = s.h * power;
      power = s.a * power;
    }
    Eigen::JacobiSVD<Matrix> svd(obs);
    if (svd.singularValues().minCoeff() > 1e-3 * svd.singularValues().maxCoeff()) break;
  }
  s.q = spd(n);
  s.r = spd(m);
  s.p0 = spd(n);
  return s;
}

}  // namespace oracle
