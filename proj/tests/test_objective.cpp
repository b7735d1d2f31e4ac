#include <gtest/gtest.h>

#include <cmath>
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

kflearn::GainMatrix gain(const kflearn::SystemModel& m, const Matrix& l) { return kflearn::GainMatrix(m.A(), m.H(), l); }

kflearn::GainMatrix scalar_gain(const kflearn::SystemModel& m, double l) { return gain(m, Matrix::Constant(1, 1, l)); }

kflearn::SystemModel from(const oracle::RandomSystem& s) { return kflearn::SystemModel(s.a, s.h, s.q, s.r, s.p0); }

// Stabilizing gain near L*: random perturbation shrunk until ρ < 0.97.
Matrix perturbed_gain(std::mt19937_64& rng, const kflearn::SystemModel& model, double scale) {
  const Matrix l_star = kflearn::steady_state_gain(model).gain.gain();
  std::normal_distribution<double> g;
  Matrix d(l_star.rows(), l_star.cols());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = g(rng);
  }
  for (;;) {
    const Matrix l = l_star + scale * d;
    if (oracle::spectral_radius(model.A() - l * model.H()) < 0.97) return l;
    scale *= 0.5;
  }
}

}  // namespace

TEST(Cost, ScalarValues) {
  const auto model = scalar_model(0.5, 1.0, 1.0, 1.0, 0.0);
  EXPECT_NEAR(kflearn::cost_J(model, scalar_gain(model, 0.0)), 4.0 / 3.0, 1e-14);
  EXPECT_NEAR(kflearn::cost_J(model, scalar_gain(model, 0.1)), 1.01 / 0.84, 1e-14);
  EXPECT_NEAR(kflearn::cost_J(model, scalar_gain(model, 0.1)), 1.2023809524, 1e-10);
}

TEST(Cost, ReportSatisfiesBothLyapunovEquations) {
  std::mt19937_64 rng(21);
  const auto model = from(oracle::random_system(rng, 3, 2));
  const auto g = gain(model, perturbed_gain(rng, model, 0.3));
  const auto rep = kflearn::evaluate_cost(model, g);
  const Matrix& al = g.closed_loop();
  const Matrix& l = g.gain();
  EXPECT_LT((rep.X - al * rep.X * al.transpose() - model.Q() - l * model.R() * l.transpose()).norm(), 1e-10);
  EXPECT_LT((rep.Y - al.transpose() * rep.Y * al - model.H().transpose() * model.H()).norm(), 1e-10);
  EXPECT_NEAR(rep.J, (rep.X * model.H().transpose() * model.H()).trace(), 1e-12);
  EXPECT_TRUE(rep.grad.isApprox(kflearn::grad_J(model, g), 1e-14));
}

TEST(Cost, UnstableGainIsInstabilityError) {
  const auto model = kflearn::mass_spring_model();
  try {
    kflearn::cost_J(model, gain(model, Matrix::Zero(2, 1)));
    FAIL();
  } catch (const kflearn::Error& e) {
    EXPECT_EQ(e.code(), kflearn::ErrorCode::instability);
  }
}

TEST(Cost, OptimalGainMinimizesCost) {
  std::mt19937_64 rng(4);
  const auto model = kflearn::mass_spring_model();
  const double j_star = kflearn::cost_J(model, kflearn::steady_state_gain(model).gain);
  for (int i = 0; i < 100; ++i) {
    EXPECT_GE(kflearn::cost_J(model, gain(model, perturbed_gain(rng, model, 0.5))), j_star - 1e-12);
  }
}

TEST(Cost, GrowsWithoutBoundTowardInstability) {
  // a = 1.2, h = 1: a_L = 1.2 − l leaves the unit disk at l = 0.2.
  const auto model = scalar_model(1.2, 1.0, 1.0, 1.0, 0.0);
  double last = 0.0;
  for (double l : {1.0, 0.5, 0.3, 0.21, 0.2001, 0.200001}) {
    const double j = kflearn::cost_J(model, scalar_gain(model, l));
    EXPECT_GT(j, last);
    last = j;
  }
  EXPECT_GT(last, 1e4);
  EXPECT_THROW(kflearn::cost_J(model, scalar_gain(model, 0.2)), kflearn::Error);
}

TEST(Gradient, ScalarClosedForm) {
  const auto model = scalar_model(0.5, 1.0, 1.0, 1.0, 0.0);
  const double g = kflearn::grad_J(model, scalar_gain(model, 0.1))(0, 0);
  // dJ/dL: raising L above 0.1 lowers the cost toward its minimum.
  EXPECT_NEAR(g, -0.9070294785, 1e-10);
  EXPECT_NEAR(g, oracle::scalar_grad(0.5, 1.0, 1.0, 1.0, 0.1), 1e-13);
  const double step = 1e-6;
  const double fd = (oracle::scalar_cost(0.5, 1.0, 1.0, 1.0, 0.1 + step) - oracle::scalar_cost(0.5, 1.0, 1.0, 1.0, 0.1 - step)) /
                    (2.0 * step);
  EXPECT_NEAR(g, fd, 1e-8);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomSystems) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sys = oracle::random_system(rng, 1 + trial % 5, 1 + trial % 3);
    const auto model = from(sys);
    const Matrix l = perturbed_gain(rng, model, 0.5);
    const Matrix g = kflearn::grad_J(model, gain(model, l));
    const Matrix fd = oracle::finite_difference(
        [&](const Matrix& x) { return oracle::cost(sys.a, sys.h, sys.q, sys.r, x); }, l, 1e-5 * (1.0 + l.norm()));
    EXPECT_LT((g - fd).norm(), 1e-6 * std::max(1.0, fd.norm())) << "trial " << trial;
  }
}

TEST(Gradient, VanishesAtSteadyStateGain) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto model = from(oracle::random_system(rng, 2 + trial % 3, 1 + trial % 2));
    EXPECT_LT(kflearn::grad_J(model, kflearn::steady_state_gain(model).gain).norm(), 1e-8);
  }
}

TEST(TruncatedCost, SingleTermAndGeometricSum) {
  std::mt19937_64 rng(40);
  const auto sys = oracle::random_system(rng, 3, 2);
  const kflearn::SystemModel model(sys.a, sys.h, sys.q, sys.r, Matrix::Zero(3, 3));
  const Matrix l = perturbed_gain(rng, model, 0.2);
  const Matrix w = sys.q + l * sys.r * l.transpose();
  const double one = (w * sys.h.transpose() * sys.h).trace();
  EXPECT_NEAR(kflearn::truncated_cost_J_T(model, gain(model, l), 1, false), one, 1e-13);
  EXPECT_NEAR(kflearn::truncated_cost_J_T(model, gain(model, l), 1, true), one + sys.r.trace(), 1e-13);

  const auto scalar = scalar_model(0.6, 1.3, 0.7, 1.0, 0.0);
  for (std::size_t T : {1u, 5u, 17u}) {
    const double expected = 0.7 * (1.0 - std::pow(0.36, static_cast<double>(T))) / (1.0 - 0.36) * 1.69;
    EXPECT_NEAR(kflearn::truncated_cost_J_T(scalar, scalar_gain(scalar, 0.0), T, false), expected, 1e-13);
  }
}

TEST(TruncatedCost, MatchesScalarClosedFormWithInitialCovariance) {
  const auto model = scalar_model(0.9, 1.1, 0.3, 0.4, 0.8);
  for (double l : {-0.2, 0.3, 0.7, 2.5}) {  // 2.5 is not stabilizing; the finite sum still exists
    for (std::size_t T : {1u, 4u, 30u}) {
      const double expected = oracle::scalar_truncated_cost(0.9, 1.1, 0.3, 0.4, 0.8, l, T);
      EXPECT_NEAR(kflearn::truncated_cost_J_T(model, scalar_gain(model, l), T, true), expected,
                  1e-12 * (1.0 + std::abs(expected)));
    }
  }
}

TEST(TruncatedCost, MonotoneAndBoundedWithoutInitialCovariance) {
  std::mt19937_64 rng(41);
  const auto sys = oracle::random_system(rng, 3, 2);
  const kflearn::SystemModel model(sys.a, sys.h, sys.q, sys.r, Matrix::Zero(3, 3));
  const auto g = gain(model, perturbed_gain(rng, model, 0.3));
  const double j = kflearn::cost_J(model, g);
  double last = 0.0;
  double last_gap = std::numeric_limits<double>::infinity();
  for (std::size_t T : {1u, 2u, 5u, 10u, 20u, 40u}) {
    const double jt = kflearn::truncated_cost_J_T(model, g, T, false);
    EXPECT_GE(jt, last);
    EXPECT_LE(jt, j + 1e-12);
    EXPECT_LT(j - jt, last_gap + 1e-15);
    last = jt;
    last_gap = j - jt;
  }
}

TEST(TruncatedGradient, MatchesFiniteDifferences) {
  const auto scalar = scalar_model(0.8, 1.0, 0.5, 0.3, 0.6);
  for (std::size_t T : {1u, 3u, 12u}) {
    const double l = 0.35;
    const double step = 1e-6;
    const double fd = (oracle::scalar_truncated_cost(0.8, 1.0, 0.5, 0.3, 0.6, l + step, T) -
                       oracle::scalar_truncated_cost(0.8, 1.0, 0.5, 0.3, 0.6, l - step, T)) /
                      (2.0 * step);
    EXPECT_NEAR(kflearn::truncated_grad_J_T(scalar, scalar_gain(scalar, l), T)(0, 0), fd, 1e-8);
  }
  std::mt19937_64 rng(42);
  const auto sys = oracle::random_system(rng, 3, 2);
  const auto model = from(sys);
  const Matrix l = perturbed_gain(rng, model, 0.3);
  for (std::size_t T : {1u, 6u, 25u}) {
    const Matrix fd = oracle::finite_difference(
        [&](const Matrix& x) { return kflearn::truncated_cost_J_T(model, gain(model, x), T, false); }, l, 1e-6);
    EXPECT_LT((kflearn::truncated_grad_J_T(model, gain(model, l), T) - fd).norm(), 1e-6 * (1.0 + fd.norm()));
  }
}

TEST(TruncatedGradient, ConvergesToFullGradient) {
  const auto model = kflearn::mass_spring_model();
  const auto g = gain(model, (Matrix(2, 1) << 0.3, 0.1).finished());
  const Matrix full = kflearn::grad_J(model, g);
  EXPECT_LT((kflearn::truncated_grad_J_T(model, g, 2000) - full).norm(), 1e-9 * (1.0 + full.norm()));
}

TEST(Duality, ClosedFormsAgreeOnRandomInstances) {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    const auto sys = oracle::random_system(rng, 1 + trial % 4, 1 + trial % 3);
    const auto model = from(sys);
    const auto g = gain(model, perturbed_gain(rng, model, 0.4));
    const std::size_t T = 1 + static_cast<std::size_t>(trial) * 3;
    double adjoint = 0.0;
    for (Eigen::Index i = 0; i < sys.h.rows(); ++i) {
      adjoint += kflearn::adjoint_lqr_cost(model, g, T, sys.h.row(i).transpose());
    }
    const double jt = kflearn::truncated_cost_J_T(model, g, T, true);
    EXPECT_NEAR(adjoint + sys.r.trace(), jt, 1e-10 * (1.0 + std::abs(jt)));
  }
}

TEST(Duality, AdjointCostByDirectRollout) {
  // Scalar check of the adjoint recursion z(t) = a_L z(t+1), z(T) = h.
  const auto model = scalar_model(0.7, 1.5, 0.4, 0.9, 0.2);
  const double l = 0.25;
  const double al = 0.7 - l * 1.5;
  const std::size_t T = 6;
  double z = 1.5;
  double cost = 0.0;
  for (std::size_t t = T; t >= 1; --t) {
    cost += 0.4 * z * z + 0.9 * (l * z) * (l * z);
    z *= al;
  }
  cost += 0.2 * z * z;
  EXPECT_NEAR(kflearn::adjoint_lqr_cost(model, scalar_gain(model, l), T, Vector::Constant(1, 1.5)), cost, 1e-14);
}

TEST(Duality, NoiselessModelGivesZero) {
  const auto model = scalar_model(0.5, 1.0, 0.0, 0.0, 0.0);
  const auto rep = kflearn::duality_check(model, kflearn::default_noise_config(model), scalar_gain(model, 0.2), 10, 50, 1);
  EXPECT_EQ(rep.lhs, 0.0);
  EXPECT_EQ(rep.rhs, 0.0);
}

TEST(Duality, MonteCarloAgreesOnMassSpring) {
  const auto model = kflearn::mass_spring_model();
  const auto sol = kflearn::steady_state_gain(model);
  const auto rep = kflearn::duality_check(model, kflearn::default_noise_config(model), sol.gain, 50, 20000, 3);
  EXPECT_LT(rep.identity_gap, 1e-10 * (1.0 + rep.rhs));
  EXPECT_LE(std::abs(rep.lhs - rep.rhs), 4.0 * rep.lhs_stderr);
}

TEST(Duality, ThreadCountDoesNotChangeEstimate) {
  const auto model = kflearn::mass_spring_model();
  const auto g = gain(model, (Matrix(2, 1) << 0.3, 0.1).finished());
  const auto noise = kflearn::default_noise_config(model);
  const auto a = kflearn::duality_check(model, noise, g, 20, 3000, 9, 1);
  const auto b = kflearn::duality_check(model, noise, g, 20, 3000, 9, 3);
  EXPECT_EQ(a.lhs, b.lhs);
  EXPECT_EQ(a.lhs_stderr, b.lhs_stderr);
}
