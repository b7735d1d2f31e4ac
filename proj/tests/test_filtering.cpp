#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kflearn/errors.hpp"
#include "kflearn/filtering.hpp"
#include "kflearn/objective.hpp"
#include "kflearn/system_model.hpp"
#include "oracles.hpp"

using kflearn::Matrix;
using kflearn::Vector;

namespace {

kflearn::SystemModel scalar_model(double a, double h, double q, double r, double p0) {
  return kflearn::SystemModel(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, h), Matrix::Constant(1, 1, q),
                              Matrix::Constant(1, 1, r), Matrix::Constant(1, 1, p0));
}

kflearn::SystemModel from(const oracle::RandomSystem& s) { return kflearn::SystemModel(s.a, s.h, s.q, s.r, s.p0); }

}  // namespace

TEST(GainMatrix, CachesClosedLoopAndRadius) {
  const auto model = kflearn::mass_spring_model();
  const Matrix l = (Matrix(2, 1) << 0.3, 0.1).finished();
  const kflearn::GainMatrix g(model.A(), model.H(), l);
  EXPECT_EQ(g.closed_loop(), model.A() - l * model.H());
  EXPECT_DOUBLE_EQ(g.rho(), kflearn::spectral_radius(g.closed_loop()));
  EXPECT_TRUE(g.is_stabilizing());
  EXPECT_FALSE(kflearn::GainMatrix(model.A(), model.H(), Matrix::Zero(2, 1)).is_stabilizing());
  EXPECT_THROW(kflearn::GainMatrix(model.A(), model.H(), Matrix::Zero(1, 2)), kflearn::Error);
}

TEST(KalmanStep, ScalarHandRecursion) {
  const auto model = scalar_model(1.0, 1.0, 1.0, 1.0, 0.0);
  kflearn::FilterState s{Vector::Zero(1), Matrix::Zero(1, 1), 0};
  s = kflearn::kf_step(model, s, Vector::Constant(1, 0.3));
  EXPECT_NEAR(s.P(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.xhat(0), 0.0, 1e-15);  // L(0) = 0 because P(0) = 0
  s = kflearn::kf_step(model, s, Vector::Constant(1, 0.3));
  EXPECT_NEAR(s.P(0, 0), 1.5, 1e-15);
  for (int i = 0; i < 60; ++i) s = kflearn::kf_step(model, s, Vector::Zero(1));
  EXPECT_NEAR(s.P(0, 0), std::numbers::phi, 1e-12);
  EXPECT_EQ(s.t, 62u);
}

TEST(KalmanStep, CovarianceStaysSymmetricPsd) {
  std::mt19937_64 rng(1);
  const auto sys = oracle::random_system(rng, 4, 2);
  const auto model = from(sys);
  kflearn::FilterState s{Vector::Zero(4), model.P0(), 0};
  for (int i = 0; i < 100; ++i) {
    s = kflearn::kf_step(model, s, Vector::Ones(2));
    EXPECT_EQ(s.P, s.P.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(s.P).eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(KalmanStep, SingularInnovationIsNumericalError) {
  const auto model = scalar_model(1.0, 1.0, 1.0, 0.0, 0.0);
  kflearn::FilterState s{Vector::Zero(1), Matrix::Zero(1, 1), 0};
  try {
    kflearn::kf_step(model, s, Vector::Zero(1));
    FAIL();
  } catch (const kflearn::Error& e) {
    EXPECT_EQ(e.code(), kflearn::ErrorCode::numerical);
  }
}

TEST(SteadyState, GoldenRatioScalar) {
  const auto sol = kflearn::steady_state_gain(scalar_model(1.0, 1.0, 1.0, 1.0, 0.0));
  EXPECT_NEAR(sol.p_inf(0, 0), std::numbers::phi, 1e-10);
  EXPECT_NEAR(sol.gain.gain()(0, 0), std::numbers::phi - 1.0, 1e-10);
}

TEST(SteadyState, ScalarClosedFormSweep) {
  for (double a : {-1.2, -0.5, 0.3, 0.9, 1.5}) {
    for (double r : {0.1, 1.0, 5.0}) {
      const auto sol = kflearn::steady_state_gain(scalar_model(a, 0.7, 0.4, r, 0.0));
      EXPECT_NEAR(sol.gain.gain()(0, 0), oracle::scalar_dare_gain(a, 0.7, 0.4, r), 1e-9) << a << " " << r;
    }
  }
}

TEST(SteadyState, ZeroDynamics) {
  Matrix q(2, 2);
  q << 0.5, 0.1, 0.1, 0.3;
  const kflearn::SystemModel model(Matrix::Zero(2, 2), Matrix::Identity(2, 2), q, Matrix::Identity(2, 2),
                                   Matrix::Identity(2, 2));
  const auto sol = kflearn::steady_state_gain(model);
  EXPECT_TRUE(sol.p_inf.isApprox(q, 1e-12));
  EXPECT_TRUE(sol.gain.gain().isZero(1e-15));
}

TEST(SteadyState, RiccatiFixedPointAndStationarity) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 15; ++trial) {
    const auto sys = oracle::random_system(rng, 1 + trial % 4, 1 + trial % 3);
    const auto model = from(sys);
    const auto sol = kflearn::steady_state_gain(model);
    const Matrix& p = sol.p_inf;
    const Matrix s = sys.h * p * sys.h.transpose() + sys.r;
    const Matrix riccati =
        sys.a * p * sys.a.transpose() + sys.q - sys.a * p * sys.h.transpose() * s.inverse() * sys.h * p * sys.a.transpose();
    EXPECT_LT((riccati - p).norm(), 1e-10 * (1.0 + p.norm()));
    EXPECT_TRUE(sol.gain.is_stabilizing());

    const Matrix& l = sol.gain.gain();
    const Matrix al = sys.a - l * sys.h;
    const Matrix x = oracle::lyapunov_kron(al, sys.q + l * sys.r * l.transpose());
    const Matrix l_stat = sys.a * x * sys.h.transpose() * (sys.r + sys.h * x * sys.h.transpose()).inverse();
    EXPECT_LT((l_stat - l).norm(), 1e-8);
  }
}

TEST(SteadyState, MassSpringGradientVanishes) {
  const auto model = kflearn::mass_spring_model();
  const auto sol = kflearn::steady_state_gain(model);
  EXPECT_LT(kflearn::grad_J(model, sol.gain).norm(), 1e-8);
  EXPECT_NEAR(sol.gain.gain()(0, 0), 0.69906132, 1e-7);
  EXPECT_NEAR(sol.gain.gain()(1, 0), 0.46058558, 1e-7);
}

TEST(Predict, SingleStepAndZeroGain) {
  const auto model = kflearn::mass_spring_model();
  const auto traj = kflearn::simulate(model, kflearn::default_noise_config(model), 1, 4);
  const Matrix l = (Matrix(2, 1) << 0.4, 0.2).finished();
  const auto p = kflearn::fixed_gain_predict(model.A(), model.H(), l, traj);
  EXPECT_TRUE(p.yhat.isApprox(model.H() * l * traj.outputs[0], 1e-15));
  const auto z = kflearn::fixed_gain_predict(model.A(), model.H(), Matrix::Zero(2, 1), traj);
  EXPECT_EQ(z.yhat(0), 0.0);
  EXPECT_EQ(z.error, traj.outputs[1]);
}

TEST(Predict, RecursionMatchesPowerSum) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sys = oracle::random_system(rng, 1 + trial % 5, 1 + trial % 3);
    const auto model = from(sys);
    const auto l = kflearn::steady_state_gain(model).gain.gain();
    const auto traj = kflearn::simulate(model, kflearn::default_noise_config(model), 5 + trial, trial);
    const auto p = kflearn::fixed_gain_predict(sys.a, sys.h, l, traj);
    const Vector ref = oracle::power_sum_prediction(sys.a, sys.h, l, traj.outputs);
    EXPECT_LT((p.yhat - ref).norm(), 1e-12 * (1.0 + ref.norm()));
    EXPECT_LT((p.error - (traj.outputs.back() - ref)).norm(), 1e-12 * (1.0 + ref.norm()));
  }
}

TEST(Predict, NonzeroInitialMeanShiftsPrediction) {
  const auto model = kflearn::mass_spring_model();
  const auto traj = kflearn::simulate(model, kflearn::default_noise_config(model), 3, 4);
  const Matrix l = (Matrix(2, 1) << 0.4, 0.2).finished();
  const Vector m0 = (Vector(2) << 1.0, -1.0).finished();
  const auto with = kflearn::fixed_gain_predict(model.A(), model.H(), l, traj, m0);
  const auto without = kflearn::fixed_gain_predict(model.A(), model.H(), l, traj);
  const Matrix al = model.A() - l * model.H();
  EXPECT_TRUE((with.yhat - without.yhat).isApprox(model.H() * al * al * al * m0, 1e-12));
}

TEST(Predict, SteadyStateGainHasLowestEmpiricalError) {
  const auto model = kflearn::mass_spring_model();
  const auto noise = kflearn::default_noise_config(model);
  const auto l_star = kflearn::steady_state_gain(model).gain.gain();
  const Matrix other = (Matrix(2, 1) << 0.3, 0.1).finished();
  const auto batch = kflearn::make_batch(model, noise, 50, 4000, 77);
  std::vector<double> diff;
  for (const auto& t : batch) {
    const double e_star = kflearn::fixed_gain_predict(model.A(), model.H(), l_star, t).error.squaredNorm();
    const double e_other = kflearn::fixed_gain_predict(model.A(), model.H(), other, t).error.squaredNorm();
    diff.push_back(e_star - e_other);
  }
  double mean = 0.0;
  for (double d : diff) mean += d;
  mean /= static_cast<double>(diff.size());
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  const double se = std::sqrt(var / static_cast<double>(diff.size() - 1) / static_cast<double>(diff.size()));
  EXPECT_LE(mean, 3.0 * se);
}
