#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>

#include "slamf/camera.hpp"
#include "slamf/core.hpp"
#include "slamf/lie.hpp"

namespace slamf {

// Minimal 4-DoF parameterization of a spatial line: a rotation U whose
// columns encode the moment/direction frame and an SO(2) element W encoding
// the (moment, direction) magnitude ratio.
struct OrthonormalLine {
  Mat3 U = Mat3::Identity();
  Mat2 W = Mat2::Identity();
};

// Per-keyframe inertial state: position, orientation, velocity and the two
// slowly-varying sensor biases.
struct ImuState {
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
};

enum class VariableKind {
  PoseSE3Global,      // T <- Exp(delta) * T
  PoseSE3Local,       // T <- T * Exp(delta)
  Point3,             // additive
  InverseDepth,       // additive scalar
  IntrinsicsVar,      // additive (fx, fy, cx, cy)
  OrthonormalLineVar, // U <- U Exp(theta), W <- W Rot2(theta4)
  ImuStateVar,        // p, v, b additive; q <- q (x) small-angle quaternion
};

inline int tangent_dim(VariableKind kind) {
  switch (kind) {
    case VariableKind::PoseSE3Global: return 6;
    case VariableKind::PoseSE3Local: return 6;
    case VariableKind::Point3: return 3;
    case VariableKind::InverseDepth: return 1;
    case VariableKind::IntrinsicsVar: return 4;
    case VariableKind::OrthonormalLineVar: return 4;
    case VariableKind::ImuStateVar: return 15;
  }
  throw std::logic_error("tangent_dim: unknown variable kind");
}

using Value = std::variant<PoseSE3, Vec3, double, Intrinsics, OrthonormalLine, ImuState>;

inline Mat2 rot2(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

// The retraction shared by the solver and the finite-difference machinery:
// every derivative in the library is defined with respect to this update.
inline Value apply_update(VariableKind kind, const Value& value, const VecX& delta) {
  if (delta.size() != tangent_dim(kind)) {
    throw std::invalid_argument("apply_update: increment dimension does not match variable kind");
  }
  switch (kind) {
    case VariableKind::PoseSE3Global: {
      PoseSE3 T = exp_se3(delta) * std::get<PoseSE3>(value);
      T.reorthonormalize();
      return T;
    }
    case VariableKind::PoseSE3Local: {
      PoseSE3 T = std::get<PoseSE3>(value) * exp_se3(delta);
      T.reorthonormalize();
      return T;
    }
    case VariableKind::Point3:
      return Vec3(std::get<Vec3>(value) + delta);
    case VariableKind::InverseDepth:
      return std::get<double>(value) + delta[0];
    case VariableKind::IntrinsicsVar: {
      Intrinsics k = std::get<Intrinsics>(value);
      k.fx += delta[0];
      k.fy += delta[1];
      k.cx += delta[2];
      k.cy += delta[3];
      return k;
    }
    case VariableKind::OrthonormalLineVar: {
      OrthonormalLine l = std::get<OrthonormalLine>(value);
      l.U = orthonormalized(l.U * exp_so3(delta.head<3>()));
      const Mat2 w = l.W * rot2(delta[3]);
      l.W = rot2(std::atan2(w(1, 0), w(0, 0)));
      return l;
    }
    case VariableKind::ImuStateVar: {
      ImuState s = std::get<ImuState>(value);
      s.p += delta.segment<3>(0);
      s.q = (s.q * quat_from_small_angle(delta.segment<3>(3))).normalized();
      s.v += delta.segment<3>(6);
      s.ba += delta.segment<3>(9);
      s.bg += delta.segment<3>(12);
      return s;
    }
  }
  throw std::logic_error("apply_update: unknown variable kind");
}

}  // namespace slamf
