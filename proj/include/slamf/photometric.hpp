#pragma once

#include <memory>
#include <optional>
#include <utility>

#include "slamf/camera.hpp"
#include "slamf/graph.hpp"
#include "slamf/image.hpp"
#include "slamf/lie.hpp"
#include "slamf/reprojection.hpp"
#include "slamf/variables.hpp"

namespace slamf {

// Brightness difference between a point seen in a host image (camera at the
// origin) and in a target image taken from pose T (world -> target camera).
inline std::optional<double> photometric_error(const IntensitySource& img1,
                                               const IntensitySource& img2, const PoseSE3& T,
                                               const Vec3& X, const Intrinsics& K) {
  const auto p1 = project(K, X);
  if (!p1) return std::nullopt;
  const auto i1 = img1.value(*p1);
  if (!i1) return std::nullopt;
  const auto p2 = project(K, T * X);
  if (!p2) return std::nullopt;
  const auto i2 = img2.value(*p2);
  if (!i2) return std::nullopt;
  return *i1 - *i2;
}

// Derivative of the brightness difference w.r.t. a left-multiplicative pose
// increment [rotation | translation]: the image gradient chained through the
// projection and the point's pose sensitivity, with a leading minus because
// the residual subtracts the target intensity.
inline std::optional<Eigen::Matrix<double, 1, 6>> photometric_jacobian_pose(
    const IntensitySource& img2, const PoseSE3& T, const Vec3& X, const Intrinsics& K) {
  const Vec3 Xp = T * X;
  const auto p2 = project(K, Xp);
  if (!p2) return std::nullopt;
  const auto grad = img2.gradient(*p2);
  if (!grad) return std::nullopt;
  const auto Jproj = projection_jacobian(K, Xp);
  if (!Jproj) return std::nullopt;
  Mat36 P;
  P.leftCols<3>() = -hat3(Xp);
  P.rightCols<3>() = Mat3::Identity();
  return Eigen::Matrix<double, 1, 6>(-grad->transpose() * (*Jproj) * P);
}

// Direct-alignment residual for one host pixel with known 3D point; the only
// variable is the target pose (globally updated).
class PhotometricFactor final : public Factor {
 public:
  PhotometricFactor(VariableId pose_id, std::shared_ptr<const IntensitySource> img1,
                    std::shared_ptr<const IntensitySource> img2, Vec3 point, Intrinsics intrinsics,
                    double weight = 1.0)
      : Factor({pose_id}, weight * MatX::Identity(1, 1)),
        img1_(std::move(img1)),
        img2_(std::move(img2)),
        point_(std::move(point)),
        intrinsics_(intrinsics) {}

  std::string name() const override { return "photometric"; }
  int residual_dim() const override { return 1; }

  FactorEvaluation evaluate(const Problem& problem) const override {
    FactorEvaluation out;
    const PoseSE3& T = std::get<PoseSE3>(problem.value(ids_[0]));
    const auto e = photometric_error(*img1_, *img2_, T, point_, intrinsics_);
    if (!e) return out;
    const auto J = photometric_jacobian_pose(*img2_, T, point_, intrinsics_);
    if (!J) return out;
    out.valid = true;
    out.residual = VecX::Constant(1, *e);
    out.jacobians.push_back(*J);
    return out;
  }

 private:
  std::shared_ptr<const IntensitySource> img1_;
  std::shared_ptr<const IntensitySource> img2_;
  Vec3 point_;
  Intrinsics intrinsics_;
};

}  // namespace slamf
