#pragma once

#include <optional>

#include "slamf/camera.hpp"
#include "slamf/graph.hpp"
#include "slamf/lie.hpp"

namespace slamf {

// e = p_obs - project(K, R X + t); empty on degenerate depth.
inline std::optional<Vec2> reprojection_error(const PoseSE3& T, const Vec3& X,
                                              const Intrinsics& K, const Vec2& p_obs) {
  const auto projected = project(K, T * X);
  if (!projected) return std::nullopt;
  return Vec2(p_obs - *projected);
}

// d(pixel)/d(camera-frame point) at Xc: the intrinsics row scaling composed
// with the dehomogenization derivative.
inline std::optional<Mat23> projection_jacobian(const Intrinsics& K, const Vec3& Xc) {
  if (std::abs(Xc.z()) <= kDepthEpsilon) return std::nullopt;
  const double iz = 1.0 / Xc.z();
  const double iz2 = iz * iz;
  Mat23 j;
  j << K.fx * iz, 0.0, -K.fx * Xc.x() * iz2,
       0.0, K.fy * iz, -K.fy * Xc.y() * iz2;
  return j;
}

// Pose Jacobian of the reprojection error, columns [dw | dt], for the
// left-multiplicative update T <- Exp(delta) T. Built as the chain
//   -(projection jacobian at X') * [ -[X']x | I ].
inline std::optional<Mat26> jacobian_pose_so3(const PoseSE3& T, const Vec3& X,
                                              const Intrinsics& K) {
  const Vec3 Xp = T * X;
  const auto jproj = projection_jacobian(K, Xp);
  if (!jproj) return std::nullopt;
  Mat36 perturbation;
  perturbation.leftCols<3>() = -hat3(Xp);
  perturbation.rightCols<3>() = Mat3::Identity();
  return Mat26(-(*jproj) * perturbation);
}

// Point Jacobian of the reprojection error: -(projection jacobian) * R.
inline std::optional<Mat23> jacobian_point(const PoseSE3& T, const Vec3& X, const Intrinsics& K) {
  const auto jproj = projection_jacobian(K, T * X);
  if (!jproj) return std::nullopt;
  return Mat23(-(*jproj) * T.R);
}

// Derivative of the re-projected pixel p2 with respect to (fx, fy, cx, cy),
// where the *same* intrinsics back-project the host pixel p1 at depth z and
// project again after (R, t). Raw derivative of p2 — no residual sign.
inline std::optional<Mat24> jacobian_intrinsics(const PoseSE3& T, const Intrinsics& K,
                                                const Vec2& p1, double z) {
  if (z <= 0.0) return std::nullopt;
  const Vec3 Xtilde = back_project(K, p1, z);
  const Vec3 Xp = T * Xtilde;
  if (std::abs(Xp.z()) <= kDepthEpsilon) return std::nullopt;
  const double izp = 1.0 / Xp.z();
  const Vec2 n2(Xp.x() * izp, Xp.y() * izp);  // (u2~, v2~)

  // Back-projection derivatives with respect to each intrinsic parameter.
  Mat34 dXtilde = Mat34::Zero();
  dXtilde(0, 0) = -Xtilde.x() / K.fx;  // d/dfx
  dXtilde(1, 1) = -Xtilde.y() / K.fy;  // d/dfy
  dXtilde(0, 2) = -z / K.fx;           // d/dcx
  dXtilde(1, 3) = -z / K.fy;           // d/dcy

  Mat24 out;
  for (int c = 0; c < 4; ++c) {
    const Vec3 dXp = T.R * dXtilde.col(c);
    const double dn_u = (dXp.x() - n2.x() * dXp.z()) * izp;
    const double dn_v = (dXp.y() - n2.y() * dXp.z()) * izp;
    out(0, c) = K.fx * dn_u;
    out(1, c) = K.fy * dn_v;
  }
  // Outer projection's own dependence on the parameters.
  out(0, 0) += n2.x();  // u2 = fx*u2~ + cx
  out(1, 1) += n2.y();  // v2 = fy*v2~ + cy
  out(0, 2) += 1.0;
  out(1, 3) += 1.0;
  return out;
}

// Derivative of the re-projected pixel with respect to the host inverse
// depth rho, for the point X~ = K^-1 p1 / rho. Raw derivative of p2.
inline std::optional<Vec2> jacobian_inverse_depth(const PoseSE3& T, const Intrinsics& K,
                                                  const Vec2& p1, double rho) {
  if (rho <= 0.0) return std::nullopt;
  const Vec3 Xtilde = back_project(K, p1, 1.0 / rho);
  const Vec3 Xp = T * Xtilde;
  if (std::abs(Xp.z()) <= kDepthEpsilon) return std::nullopt;
  const double rho_p = 1.0 / Xp.z();  // inverse depth after the transform
  const double u2 = Xp.x() * rho_p, v2 = Xp.y() * rho_p;
  return Vec2(-(rho_p / rho) * K.fx * (u2 * T.t.z() - T.t.x()),
              -(rho_p / rho) * K.fy * (v2 * T.t.z() - T.t.y()));
}

// Derivative of the rotated point with respect to the quaternion imaginary
// part, linearized at the identity quaternion.
inline Mat3 jacobian_quaternion(const Vec3& X) { return -2.0 * hat3(X); }

// Point-landmark reprojection factor: variables (pose, point), fixed known
// intrinsics, observed pixel measurement.
class ReprojectionFactor : public Factor {
 public:
  ReprojectionFactor(VariableId pose, VariableId point, const Intrinsics& K, const Vec2& observed,
                     const Mat2& omega = Mat2::Identity())
      : Factor({pose, point}, omega), K_(K), observed_(observed) {}

  std::string name() const override { return "reprojection"; }
  int residual_dim() const override { return 2; }

  FactorEvaluation evaluate(const Problem& problem) const override {
    FactorEvaluation ev;
    const PoseSE3& T = std::get<PoseSE3>(problem.value(ids_[0]));
    const Vec3& X = std::get<Vec3>(problem.value(ids_[1]));
    const auto e = reprojection_error(T, X, K_, observed_);
    const auto j_pose = jacobian_pose_so3(T, X, K_);
    const auto j_point = jacobian_point(T, X, K_);
    if (!e || !j_pose || !j_point) return ev;
    ev.valid = true;
    ev.residual = *e;
    ev.jacobians = {*j_pose, *j_point};
    return ev;
  }

  const Intrinsics& intrinsics() const { return K_; }
  const Vec2& observed() const { return observed_; }

 private:
  Intrinsics K_;
  Vec2 observed_;
};

}  // namespace slamf
