#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "slamf/core.hpp"

namespace slamf {

// Depth magnitudes at or below this are treated as degenerate: projection
// reports an evaluation failure instead of producing huge values, and factors
// skip that observation for the iteration.
inline constexpr double kDepthEpsilon = 1e-9;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  Mat3 inverse_matrix() const {
    Mat3 k;
    k << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
    return k;
  }
};

// (X, Y, Z) -> (X/Z, Y/Z); empty when the depth is degenerate.
inline std::optional<Vec2> dehomogenize(const Vec3& xc) {
  if (std::abs(xc.z()) <= kDepthEpsilon) return std::nullopt;
  return Vec2(xc.x() / xc.z(), xc.y() / xc.z());
}

inline std::optional<Vec2> project(const Intrinsics& k, const Vec3& xc) {
  const auto n = dehomogenize(xc);
  if (!n) return std::nullopt;
  return Vec2(k.fx * n->x() + k.cx, k.fy * n->y() + k.cy);
}

inline Vec3 back_project(const Intrinsics& k, const Vec2& p, double z) {
  if (z <= 0.0) throw std::domain_error("back_project: depth must be positive");
  return Vec3(z * (p.x() - k.cx) / k.fx, z * (p.y() - k.cy) / k.fy, z);
}

// Intrinsic matrix for projecting line coordinates: det(K) K^-T.
inline Mat3 line_intrinsic(const Intrinsics& k) {
  Mat3 kl;
  kl << k.fy, 0, 0,
        0, k.fx, 0,
        -k.fy * k.cx, -k.fx * k.cy, k.fx * k.fy;
  return kl;
}

}  // namespace slamf
