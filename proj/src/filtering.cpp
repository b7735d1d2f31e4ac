#include "kflearn/filtering.hpp"

#include <sstream>

#include "kflearn/errors.hpp"

namespace kflearn {

GainMatrix::GainMatrix(const Matrix& a, const Matrix& h, Matrix gain) : gain_(std::move(gain)) {
  require_square(a, "A");
  if (h.cols() != a.rows() || gain_.rows() != a.rows() || gain_.cols() != h.rows()) {
    std::ostringstream os;
    os << "gain must be " << a.rows() << "x" << h.rows() << ", got " << gain_.rows() << "x" << gain_.cols();
    fail(ErrorCode::dimension, os.str());
  }
  if (!gain_.allFinite()) fail(ErrorCode::domain, "gain has non-finite entries");
  closed_loop_ = a - gain_ * h;
  rho_ = spectral_radius(closed_loop_);
}

namespace {

Eigen::LLT<Matrix> innovation_factor(const SystemModel& model, const Matrix& p) {
  const Matrix s = symmetrize(model.H() * p * model.H().transpose() + model.R());
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) fail(ErrorCode::numerical, "innovation covariance H P Hᵀ + R is singular");
  return llt;
}

Matrix riccati_update(const SystemModel& model, const Matrix& p, const Eigen::LLT<Matrix>& s) {
  const Matrix& a = model.A();
  const Matrix hpat = model.H() * p * a.transpose();
  return symmetrize(a * p * a.transpose() + model.Q() - hpat.transpose() * s.solve(hpat));
}

}  // namespace

Matrix kalman_gain(const SystemModel& model, const Matrix& p) {
  const auto s = innovation_factor(model, p);
  // A P Hᵀ S⁻¹ = (S⁻¹ H P Aᵀ)ᵀ since S and P are symmetric.
  return s.solve(model.H() * p * model.A().transpose()).transpose();
}

FilterState kf_step(const SystemModel& model, const FilterState& state, const Vector& y) {
  if (state.xhat.size() != static_cast<Eigen::Index>(model.n()) || state.P.rows() != state.xhat.size() ||
      state.P.cols() != state.xhat.size()) {
    fail(ErrorCode::dimension, "filter state does not match the model");
  }
  if (y.size() != static_cast<Eigen::Index>(model.m())) fail(ErrorCode::dimension, "measurement has wrong size");
  const auto s = innovation_factor(model, state.P);
  const Matrix gain = s.solve(model.H() * state.P * model.A().transpose()).transpose();
  FilterState next;
  next.xhat = model.A() * state.xhat + gain * (y - model.H() * state.xhat);
  next.P = riccati_update(model, state.P, s);
  next.t = state.t + 1;
  return next;
}

SteadyStateSolution steady_state_gain(const SystemModel& model, std::size_t max_iterations) {
  Matrix p = model.P0();
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const auto s = innovation_factor(model, p);
    Matrix next = riccati_update(model, p, s);
    if (!next.allFinite()) fail(ErrorCode::numerical, "Riccati iteration diverged");
    const double change = (next - p).norm();
    p = std::move(next);
    if (change <= 1e-12 * std::max(1.0, p.norm())) {
      GainMatrix gain(model.A(), model.H(), kalman_gain(model, p));
      if (!gain.is_stabilizing()) {
        std::ostringstream os;
        os << "steady-state gain is not stabilizing (rho = " << gain.rho() << ")";
        fail(ErrorCode::instability, os.str());
      }
      return SteadyStateSolution{std::move(gain), std::move(p), it};
    }
  }
  fail(ErrorCode::convergence, "Riccati iteration did not reach a fixed point");
}

Prediction fixed_gain_predict(const Matrix& a, const Matrix& h, const Matrix& gain, const Trajectory& trajectory,
                              const std::optional<Vector>& m0) {
  require_square(a, "A");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = h.rows();
  if (h.cols() != n || gain.rows() != n || gain.cols() != m) fail(ErrorCode::dimension, "A, H and L dimensions disagree");
  if (trajectory.outputs.size() < 2) fail(ErrorCode::domain, "trajectory needs T >= 1");
  const std::size_t horizon = trajectory.horizon();
  const Matrix closed_loop = a - gain * h;
  Vector xhat = m0.value_or(Vector::Zero(n));
  if (xhat.size() != n) fail(ErrorCode::dimension, "m0 has wrong size");
  for (std::size_t t = 0; t < horizon; ++t) {
    const Vector& y = trajectory.outputs[t];
    if (y.size() != m) fail(ErrorCode::dimension, "trajectory output has wrong size");
    xhat = closed_loop * xhat + gain * y;
  }
  Prediction out;
  out.yhat = h * xhat;
  if (trajectory.outputs[horizon].size() != m) fail(ErrorCode::dimension, "trajectory output has wrong size");
  out.error = trajectory.outputs[horizon] - out.yhat;
  return out;
}

}  // namespace kflearn
