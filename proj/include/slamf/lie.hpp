#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/SVD>

#include "slamf/core.hpp"

namespace slamf {

// Twist coordinates are ordered rotation-first throughout:
//   xi = [w_x, w_y, w_z, v_x, v_y, v_z].
// All 6x6 block matrices (adjoints, Jacobians) follow this ordering.

inline Mat3 hat3(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
      -w.y(), w.x(), 0.0;
  return m;
}

inline Vec3 vee3(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

// Rodrigues formula; second-order Taylor expansion of the exponential series
// below the small-angle threshold so both branches agree at the switch point.
inline Mat3 exp_so3(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = hat3(w);
  if (theta < 1e-6) {
    return Mat3::Identity() + W + 0.5 * (W * W);
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * W + b * (W * W);
}

// Rotation-vector logarithm. Total function: the angle-pi neighborhood is
// handled by extracting the axis from the largest diagonal element, with the
// sign fixed deterministically (aligned with the antisymmetric part when that
// is informative, otherwise first nonzero component positive).
inline Vec3 log_so3(const Mat3& R) {
  const Vec3 s_vec = 0.5 * vee3(R - R.transpose());
  const double s = s_vec.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  const double theta = std::atan2(s, c);

  if (theta < 1e-6) {
    return s_vec * (1.0 + theta * theta / 6.0);
  }
  if (theta > std::numbers::pi - 1e-3) {
    // R = I + sin(t)[a]x + (1-cos(t))[a]x^2  =>  (R + R^T)/2 - I = (1-cos(t))(aa^T - I).
    const Mat3 A = Mat3::Identity() + ((R + R.transpose()) * 0.5 - Mat3::Identity()) / (1.0 - c);
    int k = 0;
    A.diagonal().maxCoeff(&k);
    Vec3 axis = A.col(k) / std::sqrt(A(k, k));
    axis.normalize();
    if (s > 1e-12) {
      if (axis.dot(s_vec) < 0.0) axis = -axis;
    } else {
      for (int i = 0; i < 3; ++i) {
        if (axis[i] != 0.0) {
          if (axis[i] < 0.0) axis = -axis;
          break;
        }
      }
    }
    return theta * axis;
  }
  return s_vec * (theta / s);
}

// Left Jacobian of SO(3): exp((w + J_l(w) d)^) ~= exp(d^) exp(w^) to first order
// in d, equivalently exp((w + d)^) ~= exp((J_l d)^) exp(w^).
inline Mat3 left_jacobian_so3(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = hat3(w);
  if (theta < 1e-4) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * (W * W);
  }
  const double a = (1.0 - std::cos(theta)) / theta2;
  const double b = (theta - std::sin(theta)) / (theta2 * theta);
  return Mat3::Identity() + a * W + b * (W * W);
}

inline Mat3 inv_left_jacobian_so3(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = hat3(w);
  if (theta < 1e-4) {
    return Mat3::Identity() - 0.5 * W + (1.0 / 12.0) * (W * W);
  }
  const double b = 1.0 / theta2 -
                   (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * W + b * (W * W);
}

// Nearest rotation matrix in the Frobenius sense (polar factor via SVD).
inline Mat3 orthonormalized(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  const Mat3 V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) {
    U.col(2) = -U.col(2);
  }
  return U * V.transpose();
}

struct PoseSE3 {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static PoseSE3 Identity() { return PoseSE3{}; }

  PoseSE3 operator*(const PoseSE3& o) const { return PoseSE3{R * o.R, R * o.t + t}; }
  Vec3 operator*(const Vec3& p) const { return R * p + t; }
  PoseSE3 inverse() const { return PoseSE3{R.transpose(), -(R.transpose() * t)}; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  // Re-projects the rotation block onto SO(3); applied after every
  // multiplicative update so long solver runs cannot drift off the manifold.
  void reorthonormalize() { R = orthonormalized(R); }
};

inline PoseSE3 exp_se3(const Vec6& xi) {
  const Vec3 w = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  return PoseSE3{exp_so3(w), left_jacobian_so3(w) * v};
}

inline Vec6 log_se3(const PoseSE3& T) {
  const Vec3 s_vec = 0.5 * vee3(T.R - T.R.transpose());
  const double theta = std::atan2(s_vec.norm(), 0.5 * (T.R.trace() - 1.0));
  if (theta >= std::numbers::pi - 1e-6) {
    throw std::domain_error("log_se3: rotation angle within 1e-6 of pi");
  }
  const Vec3 w = log_so3(T.R);
  Vec6 xi;
  xi.head<3>() = w;
  xi.tail<3>() = inv_left_jacobian_so3(w) * T.t;
  return xi;
}

// Adjoint for rotation-first twists: Exp(Ad_T xi) = T Exp(xi) T^-1.
inline Mat6 adjoint_se3(const PoseSE3& T) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = T.R;
  ad.bottomLeftCorner<3, 3>() = hat3(T.t) * T.R;
  ad.bottomRightCorner<3, 3>() = T.R;
  return ad;
}

// First-order inverse right Jacobian of SE(3), in the fixed block layout
//   I_6 + 1/2 [ [w]x  [v]x ]
//             [  0    [w]x ].
inline Mat6 inv_right_jacobian_se3_approx(const Vec6& xi) {
  const Mat3 W = hat3(xi.head<3>());
  const Mat3 V = hat3(xi.tail<3>());
  Mat6 j = Mat6::Identity();
  j.topLeftCorner<3, 3>() += 0.5 * W;
  j.topRightCorner<3, 3>() += 0.5 * V;
  j.bottomRightCorner<3, 3>() += 0.5 * W;
  return j;
}

// ---- Quaternions (Hamilton convention, 4-vector order [w, x, y, z]) ----

inline Quat quat_multiply(const Quat& q1, const Quat& q2) { return q1 * q2; }

inline Quat quat_conjugate(const Quat& q) { return q.conjugate(); }

inline Vec3 quat_rotate(const Quat& q, const Vec3& p) {
  const Quat r = q * Quat(0.0, p.x(), p.y(), p.z()) * q.conjugate();
  return Vec3(r.x(), r.y(), r.z());
}

// Unit-norm with the canonical sign w >= 0. Only applied at explicit
// normalization points, never silently inside arithmetic, so error terms
// stay continuous near identity.
inline Quat quat_normalize_canonical(const Quat& q) {
  Quat n = q.normalized();
  if (n.w() < 0.0) {
    n.coeffs() = -n.coeffs();
  }
  return n;
}

inline Quat quat_from_small_angle(const Vec3& theta) {
  return Quat(1.0, 0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z()).normalized();
}

inline Vec4 quat_to_wxyz(const Quat& q) { return Vec4(q.w(), q.x(), q.y(), q.z()); }

// [q]_L p = q (x) p for every quaternion p (as [w,x,y,z] 4-vectors).
inline Mat4 quat_left_matrix(const Quat& q) {
  const Vec3 v(q.x(), q.y(), q.z());
  Mat4 L;
  L(0, 0) = q.w();
  L.block<1, 3>(0, 1) = -v.transpose();
  L.block<3, 1>(1, 0) = v;
  L.block<3, 3>(1, 1) = q.w() * Mat3::Identity() + hat3(v);
  return L;
}

// [q]_R p = p (x) q for every quaternion p (as [w,x,y,z] 4-vectors).
inline Mat4 quat_right_matrix(const Quat& q) {
  const Vec3 v(q.x(), q.y(), q.z());
  Mat4 R;
  R(0, 0) = q.w();
  R.block<1, 3>(0, 1) = -v.transpose();
  R.block<3, 1>(1, 0) = v;
  R.block<3, 3>(1, 1) = q.w() * Mat3::Identity() - hat3(v);
  return R;
}

// Bottom-right 3x3 sub-blocks of the multiplication matrices; these are what
// the rotation rows of the inertial factor consume.
inline Mat3 quat_left_matrix_br3(const Quat& q) {
  return q.w() * Mat3::Identity() + hat3(Vec3(q.x(), q.y(), q.z()));
}

inline Mat3 quat_right_matrix_br3(const Quat& q) {
  return q.w() * Mat3::Identity() - hat3(Vec3(q.x(), q.y(), q.z()));
}

}  // namespace slamf
