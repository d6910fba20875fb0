#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slamf/graph.hpp"
#include "slamf/lie.hpp"
#include "slamf/variables.hpp"

namespace slamf {

using Mat15x6 = Eigen::Matrix<double, 15, 6>;
using Mat15x9 = Eigen::Matrix<double, 15, 9>;
using Mat15x18 = Eigen::Matrix<double, 15, 18>;
using Mat18 = Eigen::Matrix<double, 18, 18>;

// One inertial measurement: specific force (m/s^2), angular rate (rad/s),
// timestamp (s). Timestamps must strictly increase within a stream.
struct ImuSample {
  Vec3 a = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  double t = 0.0;
};

struct GravityVector {
  Vec3 g_w = Vec3(0.0, 0.0, 9.81);
};

// Per-sample noise standard deviations feeding the 18x18 process noise:
// accelerometer, gyroscope, and the two bias random walks.
struct ImuNoise {
  double sigma_a = 0.08;
  double sigma_g = 0.004;
  double sigma_ba = 4e-5;
  double sigma_bg = 2e-6;
};

// Accumulated relative motion between two keyframes in the first body frame:
// position-like alpha, velocity-like beta, rotation gamma, plus the 15x15
// error-state Jacobian and covariance over [alpha, theta, beta, ba, bg].
// Samples are buffered so a large bias update can trigger re-integration.
struct Preintegration {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();
  Mat15 J = Mat15::Identity();
  Mat15 P = Mat15::Zero();
  double dt_total = 0.0;
  Vec3 ba_lin = Vec3::Zero();
  Vec3 bg_lin = Vec3::Zero();
  ImuNoise noise;
  double dt_max = 0.05;
  std::vector<ImuSample> buffer;
  bool repropagated = false;
};

inline Preintegration make_preintegration(const Vec3& ba_lin, const Vec3& bg_lin,
                                          const ImuNoise& noise = {}, double dt_max = 0.05) {
  Preintegration pre;
  pre.ba_lin = ba_lin;
  pre.bg_lin = bg_lin;
  pre.noise = noise;
  pre.dt_max = dt_max;
  return pre;
}

namespace detail {

inline double checked_dt(const Preintegration& pre, const ImuSample& s0, const ImuSample& s1) {
  const double dt = s1.t - s0.t;
  if (!(dt > 0.0)) throw std::invalid_argument("imu step: non-increasing timestamps");
  if (dt > pre.dt_max) throw std::invalid_argument("imu step: sample gap exceeds dt_max");
  return dt;
}

// Shared intermediates of one trapezoidal step: bias-compensated inputs and
// the incremental rotation.
struct MidpointTerms {
  double dt = 0.0;
  Vec3 a0, a1, w_mid;
  Mat3 R0, R1;
  Quat gamma1;
};

inline MidpointTerms midpoint_terms(const Preintegration& pre, const ImuSample& s0,
                                    const ImuSample& s1) {
  MidpointTerms m;
  m.dt = checked_dt(pre, s0, s1);
  m.a0 = s0.a - pre.ba_lin;
  m.a1 = s1.a - pre.ba_lin;
  m.w_mid = 0.5 * (s0.omega + s1.omega) - pre.bg_lin;
  m.R0 = pre.gamma.toRotationMatrix();
  const Vec3 half_angle = 0.25 * (s0.omega + s1.omega - 2.0 * pre.bg_lin) * m.dt;
  Quat incr(1.0, half_angle.x(), half_angle.y(), half_angle.z());
  m.gamma1 = quat_multiply(pre.gamma, incr).normalized();
  m.R1 = m.gamma1.toRotationMatrix();
  return m;
}

}  // namespace detail

// Value update of one integration step (trapezoid on the rotated
// accelerations, first-order quaternion increment); Jacobian and covariance
// untouched. Samples are appended to the replay buffer.
inline Preintegration midpoint_step(const Preintegration& pre, const ImuSample& s0,
                                    const ImuSample& s1) {
  const auto m = detail::midpoint_terms(pre, s0, s1);
  Preintegration out = pre;
  const Vec3 acc = 0.5 * (m.R0 * m.a0 + m.R1 * m.a1);
  out.alpha = pre.alpha + pre.beta * m.dt + 0.5 * acc * m.dt * m.dt;
  out.beta = pre.beta + acc * m.dt;
  out.gamma = m.gamma1;
  out.dt_total = pre.dt_total + m.dt;
  if (out.buffer.empty()) out.buffer.push_back(s0);
  out.buffer.push_back(s1);
  return out;
}

// Error-state transition of the same step: J <- A J and
// P <- A P A^T + B Q B^T with A = I + F dt and B = G dt assembled from the
// trapezoidal model; P is re-symmetrized. Values are untouched.
inline Preintegration propagate_step(const Preintegration& pre, const ImuSample& s0,
                                     const ImuSample& s1) {
  const auto m = detail::midpoint_terms(pre, s0, s1);
  const double dt = m.dt, dt2 = dt * dt, dt3 = dt2 * dt;
  const Mat3 I = Mat3::Identity();
  const Mat3 a0x = hat3(m.a0), a1x = hat3(m.a1), wx = hat3(m.w_mid);
  const Mat3 theta_theta = I - wx * dt;
  const Mat3 beta_theta = -0.5 * dt * (m.R0 * a0x + m.R1 * a1x * theta_theta);

  Mat15 A = Mat15::Identity();
  A.block<3, 3>(0, 3) = 0.5 * dt * beta_theta;
  A.block<3, 3>(0, 6) = dt * I;
  A.block<3, 3>(0, 9) = -0.25 * dt2 * (m.R0 + m.R1);
  A.block<3, 3>(0, 12) = 0.25 * dt3 * m.R1 * a1x;
  A.block<3, 3>(3, 3) = theta_theta;
  A.block<3, 3>(3, 12) = -dt * I;
  A.block<3, 3>(6, 3) = beta_theta;
  A.block<3, 3>(6, 9) = -0.5 * dt * (m.R0 + m.R1);
  A.block<3, 3>(6, 12) = 0.5 * dt2 * m.R1 * a1x;

  Mat15x18 B = Mat15x18::Zero();
  const Mat3 gyro_to_beta = 0.25 * dt2 * m.R1 * a1x;
  B.block<3, 3>(0, 0) = -0.25 * dt2 * m.R0;
  B.block<3, 3>(0, 3) = 0.5 * dt * gyro_to_beta;
  B.block<3, 3>(0, 6) = -0.25 * dt2 * m.R1;
  B.block<3, 3>(0, 9) = 0.5 * dt * gyro_to_beta;
  B.block<3, 3>(3, 3) = -0.5 * dt * I;
  B.block<3, 3>(3, 9) = -0.5 * dt * I;
  B.block<3, 3>(6, 0) = -0.5 * dt * m.R0;
  B.block<3, 3>(6, 3) = gyro_to_beta;
  B.block<3, 3>(6, 6) = -0.5 * dt * m.R1;
  B.block<3, 3>(6, 9) = gyro_to_beta;
  B.block<3, 3>(9, 12) = dt * I;
  B.block<3, 3>(12, 15) = dt * I;

  Mat18 Q = Mat18::Zero();
  const double sa2 = pre.noise.sigma_a * pre.noise.sigma_a;
  const double sg2 = pre.noise.sigma_g * pre.noise.sigma_g;
  Q.block<3, 3>(0, 0) = sa2 * I;
  Q.block<3, 3>(3, 3) = sg2 * I;
  Q.block<3, 3>(6, 6) = sa2 * I;
  Q.block<3, 3>(9, 9) = sg2 * I;
  Q.block<3, 3>(12, 12) = pre.noise.sigma_ba * pre.noise.sigma_ba * I;
  Q.block<3, 3>(15, 15) = pre.noise.sigma_bg * pre.noise.sigma_bg * I;

  Preintegration out = pre;
  out.J = A * pre.J;
  Mat15 P = A * pre.P * A.transpose() + B * Q * B.transpose();
  out.P = 0.5 * (P + P.transpose());
  return out;
}

// Full step: error-state propagation (which reads the pre-step rotation)
// followed by the value update.
inline Preintegration integrate_step(const Preintegration& pre, const ImuSample& s0,
                                     const ImuSample& s1) {
  return midpoint_step(propagate_step(pre, s0, s1), s0, s1);
}

inline Preintegration integrate_sequence(Preintegration pre,
                                         const std::vector<ImuSample>& samples) {
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    pre = integrate_step(pre, samples[i], samples[i + 1]);
  }
  return pre;
}

// Sensitivities of the integrated values to the linearization-point biases,
// read out of the fixed row/column layout of the 15x15 error-state Jacobian.
struct BiasBlocks {
  Mat3 alpha_ba, alpha_bg, beta_ba, beta_bg, gamma_bg;
};

inline BiasBlocks bias_blocks(const Preintegration& pre) {
  BiasBlocks b;
  b.alpha_ba = pre.J.block<3, 3>(0, 9);
  b.alpha_bg = pre.J.block<3, 3>(0, 12);
  b.beta_ba = pre.J.block<3, 3>(6, 9);
  b.beta_bg = pre.J.block<3, 3>(6, 12);
  b.gamma_bg = pre.J.block<3, 3>(3, 12);
  return b;
}

// First-order shift of the integrated values to a new bias linearization
// point; falls back to replaying the buffered samples when the bias moves too
// far for the linear model (the repropagated flag records which path ran).
inline Preintegration correct_for_bias_change(const Preintegration& pre, const Vec3& ba_new,
                                              const Vec3& bg_new,
                                              double bg_threshold = 1e-3,
                                              double ba_threshold = 1e-2) {
  const Vec3 dba = ba_new - pre.ba_lin;
  const Vec3 dbg = bg_new - pre.bg_lin;
  if (dba.norm() > ba_threshold || dbg.norm() > bg_threshold) {
    Preintegration out = make_preintegration(ba_new, bg_new, pre.noise, pre.dt_max);
    out = integrate_sequence(std::move(out), pre.buffer);
    out.repropagated = true;
    return out;
  }
  const BiasBlocks b = bias_blocks(pre);
  Preintegration out = pre;
  out.alpha = pre.alpha + b.alpha_ba * dba + b.alpha_bg * dbg;
  out.beta = pre.beta + b.beta_ba * dba + b.beta_bg * dbg;
  const Vec3 half_theta = 0.5 * b.gamma_bg * dbg;
  out.gamma = quat_multiply(pre.gamma, Quat(1.0, half_theta.x(), half_theta.y(), half_theta.z()))
                  .normalized();
  out.ba_lin = ba_new;
  out.bg_lin = bg_new;
  out.repropagated = false;
  return out;
}

// Relative motion implied by two keyframe states under gravity, expressed in
// the first body frame; the quantities the preintegration predicts.
struct ObservedZ {
  Vec3 alpha, beta;
  Quat gamma;
  Vec3 dba, dbg;
};

inline ObservedZ observed_z(const ImuState& si, const ImuState& sj, const GravityVector& g,
                            double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("observed_z: dt must be positive");
  const Mat3 R_wb = si.q.toRotationMatrix().transpose();
  ObservedZ z;
  z.alpha = R_wb * (sj.p - si.p - si.v * dt + 0.5 * g.g_w * dt * dt);
  z.beta = R_wb * (sj.v - si.v + g.g_w * dt);
  z.gamma = quat_multiply(quat_conjugate(si.q), sj.q);
  z.dba = sj.ba - si.ba;
  z.dbg = sj.bg - si.bg;
  return z;
}

namespace detail {

// Predicted values shifted to the current bias estimate of the first state.
struct CorrectedPrediction {
  Vec3 alpha, beta;
  Quat gamma;
};

inline CorrectedPrediction corrected_prediction(const Preintegration& pre, const ImuState& si) {
  const BiasBlocks b = bias_blocks(pre);
  const Vec3 dba = si.ba - pre.ba_lin;
  const Vec3 dbg = si.bg - pre.bg_lin;
  CorrectedPrediction c;
  c.alpha = pre.alpha + b.alpha_ba * dba + b.alpha_bg * dbg;
  c.beta = pre.beta + b.beta_ba * dba + b.beta_bg * dbg;
  const Vec3 half_theta = 0.5 * b.gamma_bg * dbg;
  c.gamma = quat_multiply(pre.gamma, Quat(1.0, half_theta.x(), half_theta.y(), half_theta.z()))
                .normalized();
  return c;
}

}  // namespace detail

// 15-dimensional measurement error ordered [alpha, theta, beta, ba, bg]; the
// rotation row is twice the imaginary part of the sign-canonicalized error
// quaternion.
inline Vec15 imu_error(const ImuState& si, const ImuState& sj, const Preintegration& pre,
                       const GravityVector& g, double dt) {
  const ObservedZ z = observed_z(si, sj, g, dt);
  const auto c = detail::corrected_prediction(pre, si);
  const Quat err_q = quat_normalize_canonical(quat_multiply(quat_conjugate(c.gamma), z.gamma));
  Vec15 e;
  e.segment<3>(0) = z.alpha - c.alpha;
  e.segment<3>(3) = 2.0 * err_q.vec();
  e.segment<3>(6) = z.beta - c.beta;
  e.segment<3>(9) = z.dba;
  e.segment<3>(12) = z.dbg;
  return e;
}

// The four Jacobian blocks of imu_error, grouped by the variable packs
// [p_k, q_k], [v_k, ba_k, bg_k], [p_k+1, q_k+1], [v_k+1, ba_k+1, bg_k+1].
// Rotations perturb right-multiplicatively: q <- q (x) [1, theta/2].
struct ImuErrorJacobians {
  Mat15x6 j0;
  Mat15x9 j1;
  Mat15x6 j2;
  Mat15x9 j3;
};

inline ImuErrorJacobians imu_jacobians(const ImuState& si, const ImuState& sj,
                                       const Preintegration& pre, const GravityVector& g,
                                       double dt) {
  const Mat3 I = Mat3::Identity();
  const Mat3 R_wb = si.q.toRotationMatrix().transpose();
  const ObservedZ z = observed_z(si, sj, g, dt);
  const auto c = detail::corrected_prediction(pre, si);
  const BiasBlocks b = bias_blocks(pre);
  const Quat gamma_inv = quat_conjugate(c.gamma);
  const Quat q_ij = quat_multiply(quat_conjugate(si.q), sj.q);
  const Quat full = quat_multiply(gamma_inv, q_ij);

  ImuErrorJacobians J;
  J.j0.setZero();
  J.j0.block<3, 3>(0, 0) = -R_wb;
  J.j0.block<3, 3>(0, 3) = hat3(z.alpha);
  J.j0.block<3, 3>(3, 3) =
      -(quat_left_matrix(gamma_inv) * quat_right_matrix(q_ij)).bottomRightCorner<3, 3>();
  J.j0.block<3, 3>(6, 3) = hat3(z.beta);

  J.j1.setZero();
  J.j1.block<3, 3>(0, 0) = -R_wb * dt;
  J.j1.block<3, 3>(0, 3) = -b.alpha_ba;
  J.j1.block<3, 3>(0, 6) = -b.alpha_bg;
  J.j1.block<3, 3>(3, 6) = -quat_right_matrix_br3(full) * b.gamma_bg;
  J.j1.block<3, 3>(6, 0) = -R_wb;
  J.j1.block<3, 3>(6, 3) = -b.beta_ba;
  J.j1.block<3, 3>(6, 6) = -b.beta_bg;
  J.j1.block<3, 3>(9, 3) = -I;
  J.j1.block<3, 3>(12, 6) = -I;

  J.j2.setZero();
  J.j2.block<3, 3>(0, 0) = R_wb;
  J.j2.block<3, 3>(3, 3) = quat_left_matrix_br3(full);

  J.j3.setZero();
  J.j3.block<3, 3>(6, 0) = R_wb;
  J.j3.block<3, 3>(9, 3) = I;
  J.j3.block<3, 3>(12, 6) = I;
  return J;
}

// Two-state inertial constraint; both endpoints are full 15-DoF IMU states.
class ImuFactor final : public Factor {
 public:
  ImuFactor(VariableId state_i, VariableId state_j, Preintegration pre, GravityVector g,
            MatX information = MatX::Identity(15, 15))
      : Factor({state_i, state_j}, std::move(information)),
        pre_(std::move(pre)),
        g_(g) {}

  std::string name() const override { return "imu_preintegration"; }
  int residual_dim() const override { return 15; }

  FactorEvaluation evaluate(const Problem& problem) const override {
    FactorEvaluation out;
    const ImuState& si = std::get<ImuState>(problem.value(ids_[0]));
    const ImuState& sj = std::get<ImuState>(problem.value(ids_[1]));
    if (!(pre_.dt_total > 0.0)) return out;
    const auto J = imu_jacobians(si, sj, pre_, g_, pre_.dt_total);
    out.valid = true;
    out.residual = imu_error(si, sj, pre_, g_, pre_.dt_total);
    MatX ji(15, 15), jj(15, 15);
    ji << J.j0, J.j1;
    jj << J.j2, J.j3;
    out.jacobians.push_back(std::move(ji));
    out.jacobians.push_back(std::move(jj));
    return out;
  }

  const Preintegration& preintegration() const { return pre_; }

 private:
  Preintegration pre_;
  GravityVector g_;
};

// Keyframe state implied by forward-propagating a preintegration from a
// previous state under gravity; inverse of observed_z at zero error.
inline ImuState propagate_state(const ImuState& si, const Preintegration& pre,
                                const GravityVector& g) {
  const double dt = pre.dt_total;
  const Mat3 R_i = si.q.toRotationMatrix();
  ImuState sj;
  sj.q = quat_multiply(si.q, pre.gamma).normalized();
  sj.v = si.v - g.g_w * dt + R_i * pre.beta;
  sj.p = si.p + si.v * dt - 0.5 * g.g_w * dt * dt + R_i * pre.alpha;
  sj.ba = si.ba;
  sj.bg = si.bg;
  return sj;
}

}  // namespace slamf
