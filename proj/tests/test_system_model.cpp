#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kflearn/errors.hpp"
#include "kflearn/rng.hpp"
#include "kflearn/system_model.hpp"

using kflearn::Matrix;
using kflearn::Vector;

namespace {

kflearn::SystemModel scalar_model(double a, double h, double q, double r, double p0) {
  return kflearn::SystemModel(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, h), Matrix::Constant(1, 1, q),
                              Matrix::Constant(1, 1, r), Matrix::Constant(1, 1, p0));
}

bool same_outputs(const kflearn::Trajectory& a, const kflearn::Trajectory& b) {
  if (a.outputs.size() != b.outputs.size()) return false;
  for (std::size_t t = 0; t < a.outputs.size(); ++t) {
    if (a.outputs[t] != b.outputs[t]) return false;
  }
  return true;
}

}  // namespace

TEST(Seeds, SplitMixReferenceValues) {
  // First two outputs of the reference SplitMix64 generator seeded with 0.
  EXPECT_EQ(kflearn::splitmix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(kflearn::splitmix64(0x9E3779B97F4A7C15ULL), 0x6E789E6AA1B965F4ULL);
  EXPECT_NE(kflearn::derive_seed(1, 0), kflearn::derive_seed(1, 1));
  EXPECT_NE(kflearn::derive_seed(1, 0), kflearn::derive_seed(2, 0));
  EXPECT_EQ(kflearn::derive_seed(42, 7), kflearn::splitmix64(42 ^ kflearn::splitmix64(7 + 0x9E3779B97F4A7C15ULL)));
}

TEST(SystemModel, MassSpringMatrices) {
  const auto model = kflearn::mass_spring_model();
  ASSERT_EQ(model.n(), 2u);
  ASSERT_EQ(model.m(), 1u);
  EXPECT_NEAR(model.A()(0, 0), std::cos(0.1), 1e-15);
  EXPECT_NEAR(model.A()(0, 1), std::sin(0.1), 1e-15);
  EXPECT_NEAR(model.A()(1, 0), -std::sin(0.1), 1e-15);
  EXPECT_NEAR(model.A()(1, 1), std::cos(0.1), 1e-15);
  EXPECT_EQ(model.H(), (Matrix(1, 2) << 1.0, 0.0).finished());
  EXPECT_TRUE(model.Q().isApprox(0.1 * Matrix::Identity(2, 2)));
  EXPECT_NEAR(model.R()(0, 0), 0.1, 0.0);
  EXPECT_TRUE(model.P0().isApprox(0.05 * Matrix::Identity(2, 2)));
  EXPECT_TRUE(model.has_zero_initial_mean());
}

TEST(SystemModel, RejectsBadInputs) {
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const kflearn::Error& e) {
      return e.code();
    }
    return kflearn::ErrorCode::numerical;
  };
  const Matrix i2 = Matrix::Identity(2, 2);
  const Matrix h = (Matrix(1, 2) << 1.0, 0.0).finished();
  EXPECT_EQ(code([&] { kflearn::SystemModel(i2, Matrix::Identity(1, 3), i2, Matrix::Identity(1, 1), i2); }),
            kflearn::ErrorCode::dimension);
  EXPECT_EQ(code([&] { kflearn::SystemModel(i2, h, -i2, Matrix::Identity(1, 1), i2); }), kflearn::ErrorCode::domain);
  Matrix asym = i2;
  asym(0, 1) = 0.5;
  EXPECT_EQ(code([&] { kflearn::SystemModel(i2, h, asym, Matrix::Identity(1, 1), i2); }), kflearn::ErrorCode::domain);
  // Identity dynamics observed through one coordinate are unobservable.
  EXPECT_EQ(code([&] { kflearn::SystemModel(i2, h, i2, Matrix::Identity(1, 1), i2); }), kflearn::ErrorCode::domain);
  Matrix nan = i2;
  nan(0, 0) = std::nan("");
  EXPECT_EQ(code([&] { kflearn::SystemModel(nan, h, i2, Matrix::Identity(1, 1), i2); }), kflearn::ErrorCode::domain);
}

TEST(SystemModel, Observability) {
  EXPECT_TRUE(kflearn::is_observable(kflearn::mass_spring_model().A(), kflearn::mass_spring_model().H()));
  EXPECT_FALSE(kflearn::is_observable(Matrix::Identity(2, 2), (Matrix(1, 2) << 1.0, 0.0).finished()));
}

TEST(NoiseConfig, DefaultsAtSixSigma) {
  const auto model = kflearn::mass_spring_model();
  const auto noise = kflearn::default_noise_config(model);
  EXPECT_NEAR(noise.kappa_xi, 6.0 * std::sqrt(0.2), 1e-14);
  EXPECT_NEAR(noise.kappa_omega, 6.0 * std::sqrt(0.1), 1e-14);
  EXPECT_THROW(kflearn::validate(kflearn::NoiseConfig{0.0, 1.0}), kflearn::Error);
  EXPECT_EQ(kflearn::noise_family_from_string("scaled_uniform"), kflearn::NoiseFamily::scaled_uniform);
  EXPECT_THROW(kflearn::noise_family_from_string("cauchy"), kflearn::Error);
}

TEST(Simulate, NoiselessZeroStartGivesZeroOutputs) {
  const auto model = scalar_model(0.9, 1.0, 0.0, 0.0, 0.0);
  const auto traj = kflearn::simulate(model, kflearn::default_noise_config(model), 20, 3);
  ASSERT_EQ(traj.outputs.size(), 21u);
  for (const auto& y : traj.outputs) EXPECT_EQ(y(0), 0.0);
}

TEST(Simulate, SameSeedIsBitIdentical) {
  const auto model = kflearn::mass_spring_model();
  const auto noise = kflearn::default_noise_config(model);
  const auto a = kflearn::simulate(model, noise, 50, 17);
  const auto b = kflearn::simulate(model, noise, 50, 17);
  const auto c = kflearn::simulate(model, noise, 50, 18);
  EXPECT_TRUE(same_outputs(a, b));
  EXPECT_FALSE(same_outputs(a, c));
}

TEST(Simulate, RecordReproducesStatesAndOutputs) {
  const auto model = kflearn::mass_spring_model();
  const auto traj = kflearn::simulate(model, kflearn::default_noise_config(model), 30, 5);
  ASSERT_TRUE(traj.noises && traj.states);
  const auto& rec = *traj.noises;
  EXPECT_EQ(rec.xi.size(), 30u);
  EXPECT_EQ(rec.omega.size(), 31u);
  for (std::size_t t = 0; t <= 30; ++t) {
    EXPECT_EQ(traj.outputs[t], model.H() * (*traj.states)[t] + rec.omega[t]);
    if (t < 30) EXPECT_EQ((*traj.states)[t + 1], model.A() * (*traj.states)[t] + rec.xi[t]);
  }
  const auto rebuilt = kflearn::trajectory_from_noises(model.A(), model.H(), rec);
  EXPECT_TRUE(same_outputs(traj, rebuilt));
}

TEST(Simulate, EveryDrawRespectsItsBound) {
  const auto model = kflearn::mass_spring_model();
  for (auto family : {kflearn::NoiseFamily::truncated_gaussian, kflearn::NoiseFamily::scaled_uniform}) {
    // Tight bounds so that rejection actually happens.
    const kflearn::NoiseConfig noise{0.4, 0.3, family};
    const kflearn::TrajectorySimulator sim(model, noise);
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto traj = sim.run(40, s);
      EXPECT_LE(traj.noises->x0.norm(), noise.kappa_xi);
      for (const auto& v : traj.noises->xi) EXPECT_LE(v.norm(), noise.kappa_xi);
      for (const auto& v : traj.noises->omega) EXPECT_LE(v.norm(), noise.kappa_omega);
    }
  }
}

TEST(Simulate, ProcessNoiseCovarianceMatchesQ) {
  Matrix q(2, 2);
  q << 0.3, 0.1, 0.1, 0.2;
  const kflearn::SystemModel model(kflearn::mass_spring_model().A(), kflearn::mass_spring_model().H(), q,
                                   Matrix::Constant(1, 1, 0.1), 0.05 * Matrix::Identity(2, 2));
  kflearn::NoiseConfig noise = kflearn::default_noise_config(model);
  noise.kappa_xi = 10.0 * std::sqrt(q.trace());
  const kflearn::TrajectorySimulator sim(model, noise);
  Matrix acc = Matrix::Zero(2, 2);
  std::size_t count = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto traj = sim.run(100, s);
    for (const auto& v : traj.noises->xi) {
      acc += v * v.transpose();
      ++count;
    }
  }
  acc /= static_cast<double>(count);
  EXPECT_LT((acc - q).norm(), 0.05 * q.norm());
}

TEST(Simulate, RejectsZeroHorizon) {
  const auto model = kflearn::mass_spring_model();
  EXPECT_THROW(kflearn::simulate(model, kflearn::default_noise_config(model), 0, 1), kflearn::Error);
}

TEST(Batch, SingleTrajectoryUsesDerivedSeed) {
  const auto model = kflearn::mass_spring_model();
  const auto noise = kflearn::default_noise_config(model);
  const auto batch = kflearn::make_batch(model, noise, 10, 1, 99);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_TRUE(same_outputs(batch[0], kflearn::simulate(model, noise, 10, kflearn::derive_seed(99, 0))));
  EXPECT_THROW(kflearn::make_batch(model, noise, 10, 0, 99), kflearn::Error);
}

TEST(Batch, WorkerCountDoesNotChangeResult) {
  const auto model = kflearn::mass_spring_model();
  const auto noise = kflearn::default_noise_config(model);
  const auto serial = kflearn::make_batch(model, noise, 20, 37, 4, 1);
  const auto threaded = kflearn::make_batch(model, noise, 20, 37, 4, 4);
  for (std::size_t i = 0; i < serial.size(); ++i) EXPECT_TRUE(same_outputs(serial[i], threaded[i]));
  for (std::size_t i = 1; i < serial.size(); ++i) EXPECT_FALSE(same_outputs(serial[0], serial[i]));
}

TEST(Batch, NoiselessBatchIsAllZero) {
  const auto model = scalar_model(0.5, 1.0, 0.0, 0.0, 0.0);
  for (const auto& traj : kflearn::make_batch(model, kflearn::default_noise_config(model), 5, 1000, 1)) {
    for (const auto& y : traj.outputs) ASSERT_EQ(y(0), 0.0);
  }
}

TEST(Batch, InitialOutputMeanIsZero) {
  const auto model = kflearn::mass_spring_model();
  const auto batch = kflearn::make_batch(model, kflearn::default_noise_config(model), 1, 100, 2024);
  double mean = 0.0;
  for (const auto& t : batch) mean += t.outputs[0](0);
  mean /= 100.0;
  double var = 0.0;
  for (const auto& t : batch) var += (t.outputs[0](0) - mean) * (t.outputs[0](0) - mean);
  const double sd = std::sqrt(var / 99.0);
  EXPECT_LT(std::abs(mean), 3.0 * sd / 10.0);
}

TEST(TrajectoryCsv, HeaderAndRows) {
  const auto model = kflearn::mass_spring_model();
  const auto traj = kflearn::simulate(model, kflearn::default_noise_config(model), 3, 1);
  std::ostringstream os;
  kflearn::write_trajectory_csv(os, traj);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,y_1");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
    ++rows;
  }
  EXPECT_EQ(rows, 4);
}
