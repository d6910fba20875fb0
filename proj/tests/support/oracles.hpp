#pragma once

// Independent reference implementations used to validate library operations.
// These deliberately take different computational routes than the library
// (series/scaled-squaring matrix exponential, quaternion conversion chains,
// dense finite differences) so agreement is meaningful.

#include <cmath>

#include "slamf/core.hpp"
#include "slamf/lie.hpp"

namespace slamf::testing {

// Dense matrix exponential by scaling-and-squaring with a Taylor series on
// the scaled-down matrix.
inline MatX expm_scaled_squaring(const MatX& m) {
  int squarings = 0;
  MatX a = m;
  double nrm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (nrm > 0.25) {
    a *= 0.5;
    nrm *= 0.5;
    ++squarings;
  }
  MatX result = MatX::Identity(m.rows(), m.cols());
  MatX term = result;
  for (int k = 1; k <= 40; ++k) {
    term = (term * a) / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18) break;
  }
  for (int i = 0; i < squarings; ++i) {
    result = result * result;
  }
  return result;
}

inline Mat4 se3_hat(const Vec6& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = hat3(xi.head<3>());
  m.topRightCorner<3, 1>() = xi.tail<3>();
  return m;
}

// Rotation from a rotation vector via the axis-angle -> quaternion -> matrix
// conversion chain (no Rodrigues formula involved).
inline Mat3 rotation_via_quaternion(const Vec3& w) {
  const double theta = w.norm();
  if (theta == 0.0) return Mat3::Identity();
  const Eigen::AngleAxisd aa(theta, w / theta);
  return Quat(aa).toRotationMatrix();
}

// Exact exponential quaternion of a rotation vector (Euler formula).
inline Quat quat_exp_exact(const Vec3& theta) {
  const double n = theta.norm();
  if (n < 1e-300) return Quat(1.0, 0.0, 0.0, 0.0);
  const Vec3 axis = theta / n;
  const double half = 0.5 * n;
  const Vec3 v = std::sin(half) * axis;
  return Quat(std::cos(half), v.x(), v.y(), v.z());
}

// Classical fourth-order Runge-Kutta integration of the continuous-time
// inertial kinematics
//   alpha' = beta,  beta' = R(gamma) a(t),  gamma' = (1/2) gamma (x) [0, w(t)]
// for analytic signals a(t), w(t), as a high-accuracy reference for the
// discrete trapezoidal integrator. The quaternion is renormalized per step.
struct InertialReference {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();
};

template <class AccelFn, class RateFn>
inline InertialReference integrate_inertial_rk4(const AccelFn& a_of_t, const RateFn& w_of_t,
                                                double t0, double t1, int steps) {
  auto derivative = [&](double t, const Eigen::Matrix<double, 10, 1>& y) {
    const Quat q(y[6], y[7], y[8], y[9]);
    const Quat wq(0.0, w_of_t(t).x(), w_of_t(t).y(), w_of_t(t).z());
    const Quat qdot = quat_multiply(q, wq);
    Eigen::Matrix<double, 10, 1> dy;
    dy.segment<3>(0) = y.segment<3>(3);
    dy.segment<3>(3) = q.toRotationMatrix() * a_of_t(t);
    dy[6] = 0.5 * qdot.w();
    dy.segment<3>(7) = 0.5 * qdot.vec();
    return dy;
  };
  Eigen::Matrix<double, 10, 1> y = Eigen::Matrix<double, 10, 1>::Zero();
  y[6] = 1.0;
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    const auto k1 = derivative(t, y);
    const auto k2 = derivative(t + 0.5 * h, y + 0.5 * h * k1);
    const auto k3 = derivative(t + 0.5 * h, y + 0.5 * h * k2);
    const auto k4 = derivative(t + h, y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double qn = y.segment<4>(6).norm();
    y.segment<4>(6) /= qn;
  }
  InertialReference out;
  out.alpha = y.segment<3>(0);
  out.beta = y.segment<3>(3);
  out.gamma = Quat(y[6], y[7], y[8], y[9]);
  return out;
}

// Numerical inverse right Jacobian: column j is the derivative of
// Log(Exp(xi) Exp(h e_j)) with respect to h at zero.
inline Mat6 numerical_inv_right_jacobian_se3(const Vec6& xi, double h = 1e-6) {
  const PoseSE3 base = exp_se3(xi);
  Mat6 out;
  for (int j = 0; j < 6; ++j) {
    Vec6 d = Vec6::Zero();
    d[j] = h;
    const Vec6 plus = log_se3(base * exp_se3(d));
    const Vec6 minus = log_se3(base * exp_se3(-d));
    out.col(j) = (plus - minus) / (2.0 * h);
  }
  return out;
}

}  // namespace slamf::testing
