#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "slamf/camera.hpp"
#include "slamf/graph.hpp"
#include "slamf/lie.hpp"
#include "slamf/variables.hpp"

namespace slamf {

// Infinite 3D line as moment and direction [m : d]; meaningful up to a common
// positive scale and constrained to the Klein quadric m . d = 0.
struct PluckerLine {
  Vec3 m = Vec3::Zero();
  Vec3 d = Vec3::Zero();
};

inline PluckerLine line_from_two_points(const Vec3& p1, const Vec3& p2) {
  return {p1.cross(p2), p2 - p1};
}

// Endpoints of a detected image segment as homogeneous pixels (u, v, 1).
struct LineObservation {
  Vec3 x_s = Vec3::UnitZ();
  Vec3 x_e = Vec3::UnitZ();
  Mat2 information = Mat2::Identity();
};

// 6x6 line motion matrix of a rigid transform: [[R, [t]x R], [0, R]].
inline Mat6 line_transform_matrix(const PoseSE3& T) {
  Mat6 M = Mat6::Zero();
  M.topLeftCorner<3, 3>() = T.R;
  M.topRightCorner<3, 3>() = hat3(T.t) * T.R;
  M.bottomRightCorner<3, 3>() = T.R;
  return M;
}

inline PluckerLine transform_line(const PoseSE3& T_cw, const PluckerLine& L_w) {
  return {T_cw.R * L_w.m + hat3(T_cw.t) * (T_cw.R * L_w.d), T_cw.R * L_w.d};
}

// Image line coefficients from the camera-frame moment; empty when the line
// passes through the optical center (zero moment).
inline std::optional<Vec3> project_line(const Mat3& K_line, const PluckerLine& L_c) {
  if (L_c.m.squaredNorm() < 1e-24) return std::nullopt;
  return Vec3(K_line * L_c.m);
}

// Signed distances of the two observed endpoints to the image line; empty
// when the line normal vanishes.
inline std::optional<Vec2> line_reprojection_error(const Vec3& l, const LineObservation& obs) {
  const double n2 = l.x() * l.x() + l.y() * l.y();
  if (!(n2 > 1e-18)) return std::nullopt;
  const double n = std::sqrt(n2);
  return Vec2(obs.x_s.dot(l) / n, obs.x_e.dot(l) / n);
}

// Minimal four-parameter representation: U holds the normalized moment,
// direction, and their cross product as columns; W encodes the relative
// magnitudes (|m|, |d|) as a planar rotation with first column
// (w1, w2) = (|m|, |d|) / sqrt(|m|^2 + |d|^2).
inline OrthonormalLine orthonormal_from_plucker(const PluckerLine& L) {
  const double nm = L.m.norm(), nd = L.d.norm();
  if (nm == 0.0 || nd == 0.0) {
    throw std::domain_error("orthonormal_from_plucker: degenerate line (zero moment or direction)");
  }
  if (std::abs(L.m.dot(L.d)) >= 1e-9 * nm * nd) {
    throw std::domain_error("orthonormal_from_plucker: moment and direction are not orthogonal");
  }
  OrthonormalLine o;
  o.U.col(0) = L.m / nm;
  o.U.col(1) = L.d / nd;
  o.U.col(2) = L.m.cross(L.d).normalized();
  const double scale = std::sqrt(nm * nm + nd * nd);
  const double w1 = nm / scale, w2 = nd / scale;
  o.W << w1, -w2, w2, w1;
  return o;
}

inline PluckerLine plucker_from_orthonormal(const OrthonormalLine& o) {
  const double w1 = o.W(0, 0), w2 = o.W(1, 0);
  return {w1 * o.U.col(0), w2 * o.U.col(1)};
}

// Right-multiplicative four-degree update: U <- U exp(theta3), W <- W rot(theta4).
inline OrthonormalLine update_orthonormal(const OrthonormalLine& o, const Vec4& delta) {
  return {o.U * exp_so3(delta.head<3>()), o.W * rot2(delta[3])};
}

struct LineJacobians {
  Mat24 j_theta;  // w.r.t. the four orthonormal parameters
  Mat26 j_xi;     // w.r.t. a left-multiplicative camera-pose twist [w | v]
};

namespace detail {

// Rows (1/n) [x1 - l1 (x.l)/n^2,  x2 - l2 (x.l)/n^2,  1] for each endpoint.
inline Mat23 distance_jacobian_wrt_line(const Vec3& l, const LineObservation& obs) {
  const double n2 = l.x() * l.x() + l.y() * l.y();
  const double n = std::sqrt(n2);
  Mat23 J;
  for (int row = 0; row < 2; ++row) {
    const Vec3& x = row == 0 ? obs.x_s : obs.x_e;
    const double xl = x.dot(l);
    J(row, 0) = (x.x() - l.x() * xl / n2) / n;
    J(row, 1) = (x.y() - l.y() * xl / n2) / n;
    J(row, 2) = x.z() / n;
  }
  return J;
}

// Differential of the back-conversion through the four-parameter update,
// evaluated at zero: columns for the three U angles and the W angle.
inline Mat64 plucker_jacobian_wrt_orthonormal(const OrthonormalLine& o) {
  const Vec3 u1 = o.U.col(0), u2 = o.U.col(1), u3 = o.U.col(2);
  const double w1 = o.W(0, 0), w2 = o.W(1, 0);
  Mat64 J;
  J.col(0) << Vec3::Zero(), w2 * u3;
  J.col(1) << -w1 * u3, Vec3::Zero();
  J.col(2) << w1 * u2, -w2 * u1;
  J.col(3) << -w2 * u1, w1 * u2;
  return J;
}

// Differential of the line motion under a left-multiplicative pose twist,
// applied to the already-transformed camera-frame line.
inline Mat6 line_jacobian_wrt_pose(const PluckerLine& L_c) {
  Mat6 J = Mat6::Zero();
  J.topLeftCorner<3, 3>() = -hat3(L_c.m);
  J.topRightCorner<3, 3>() = -hat3(L_c.d);
  J.bottomLeftCorner<3, 3>() = -hat3(L_c.d);
  return J;
}

}  // namespace detail

// Full analytic chain: endpoint distances differentiated through the image
// line, the projection, the rigid transform, and either the four orthonormal
// parameters or the camera pose.
inline std::optional<LineJacobians> line_jacobians(const PoseSE3& T_cw, const Intrinsics& K,
                                                   const OrthonormalLine& o,
                                                   const LineObservation& obs) {
  const PluckerLine L_w = plucker_from_orthonormal(o);
  const PluckerLine L_c = transform_line(T_cw, L_w);
  const auto l = project_line(line_intrinsic(K), L_c);
  if (!l) return std::nullopt;
  if (!(l->x() * l->x() + l->y() * l->y() > 1e-18)) return std::nullopt;
  const Mat23 de_dl = detail::distance_jacobian_wrt_line(*l, obs);
  Mat26 de_dLc = Mat26::Zero();
  de_dLc.leftCols<3>() = de_dl * line_intrinsic(K);  // projection reads only the moment
  LineJacobians J;
  J.j_theta = de_dLc * line_transform_matrix(T_cw) * detail::plucker_jacobian_wrt_orthonormal(o);
  J.j_xi = de_dLc * detail::line_jacobian_wrt_pose(L_c);
  return J;
}

// Point-to-line reprojection constraint over an orthonormal line variable and
// a camera pose; the observed segment endpoints are detector constants.
class PluckerLineFactor final : public Factor {
 public:
  PluckerLineFactor(VariableId line_id, VariableId pose_id, LineObservation obs,
                    Intrinsics intrinsics)
      : Factor({line_id, pose_id}, MatX(obs.information)),
        obs_(std::move(obs)),
        intrinsics_(intrinsics) {}

  std::string name() const override { return "plucker_line"; }
  int residual_dim() const override { return 2; }

  FactorEvaluation evaluate(const Problem& problem) const override {
    FactorEvaluation out;
    const OrthonormalLine& o = std::get<OrthonormalLine>(problem.value(ids_[0]));
    const PoseSE3& T_cw = std::get<PoseSE3>(problem.value(ids_[1]));
    const PluckerLine L_c = transform_line(T_cw, plucker_from_orthonormal(o));
    const auto l = project_line(line_intrinsic(intrinsics_), L_c);
    if (!l) return out;
    const auto e = line_reprojection_error(*l, obs_);
    if (!e) return out;
    const auto J = line_jacobians(T_cw, intrinsics_, o, obs_);
    if (!J) return out;
    out.valid = true;
    out.residual = *e;
    out.jacobians.push_back(J->j_theta);
    out.jacobians.push_back(detail::to_registered_convention(MatX(J->j_xi), problem, ids_[1]));
    return out;
  }

  const LineObservation& observation() const { return obs_; }

 private:
  LineObservation obs_;
  Intrinsics intrinsics_;
};

}  // namespace slamf
