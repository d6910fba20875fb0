#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <memory>
#include <vector>

#include "slamf/camera.hpp"
#include "slamf/image.hpp"
#include "slamf/numdiff.hpp"
#include "slamf/photometric.hpp"
#include "support/oracles.hpp"
#include "support/test_utils.hpp"

namespace {

using namespace slamf;
using slamf::testing::TestRng;

ImageRaster random_raster(int w, int h, TestRng& rng, double lo = 0.0, double hi = 10.0) {
  ImageRaster img(w, h);
  for (double& x : img.data) x = rng.uniform(lo, hi);
  return img;
}

// Planar intensity with exact gradient everywhere; handy for pinning signs.
struct RampSource final : public IntensitySource {
  double a = 0.0, b = 0.0, c0 = 0.0;
  RampSource(double a_, double b_, double c0_) : a(a_), b(b_), c0(c0_) {}
  std::optional<double> value(const Vec2& p) const override { return a * p.x() + b * p.y() + c0; }
  std::optional<Vec2> gradient(const Vec2&) const override { return Vec2(a, b); }
};

std::shared_ptr<GaussianFieldSource> random_field(TestRng& rng) {
  std::vector<GaussianBlob> blobs;
  for (int i = 0; i < 3; ++i) {
    GaussianBlob b;
    b.center = Vec2(rng.uniform(34.0, 94.0), rng.uniform(34.0, 94.0));
    b.sigma = rng.uniform(10.0, 20.0);
    b.amplitude = rng.uniform(20.0, 120.0);
    blobs.push_back(b);
  }
  return std::make_shared<GaussianFieldSource>(std::move(blobs));
}

struct PhotoInstance {
  std::shared_ptr<GaussianFieldSource> field1;
  std::shared_ptr<GaussianFieldSource> field2;
  Intrinsics K;
  PoseSE3 T;
  Vec3 X;  // world point, host camera at the origin
};

PhotoInstance make_instance(TestRng& rng) {
  for (;;) {
    PhotoInstance ins;
    ins.field1 = random_field(rng);
    ins.field2 = random_field(rng);
    ins.K = Intrinsics{rng.uniform(80.0, 120.0), rng.uniform(80.0, 120.0), 64.0, 64.0};
    Vec6 xi;
    xi.head<3>() = rng.rotation_vector(0.3);
    xi.tail<3>() = 0.5 * rng.vec3();
    ins.T = exp_se3(xi);
    const Vec2 p2(rng.uniform(20.0, 108.0), rng.uniform(20.0, 108.0));
    const double z2 = rng.uniform(1.0, 5.0);
    const Vec3 Xp = back_project(ins.K, p2, z2);
    ins.X = ins.T.inverse() * Xp;
    if (ins.X.z() < 0.2) continue;
    return ins;
  }
}

Problem make_problem(const PhotoInstance& ins, std::shared_ptr<PhotometricFactor>& factor,
                     const IntensitySource* override1 = nullptr,
                     const IntensitySource* override2 = nullptr) {
  Problem problem;
  problem.add_variable(0, VariableKind::PoseSE3Global, ins.T);
  std::shared_ptr<const IntensitySource> s1 =
      override1 ? std::shared_ptr<const IntensitySource>(override1, [](const IntensitySource*) {})
                : std::static_pointer_cast<const IntensitySource>(ins.field1);
  std::shared_ptr<const IntensitySource> s2 =
      override2 ? std::shared_ptr<const IntensitySource>(override2, [](const IntensitySource*) {})
                : std::static_pointer_cast<const IntensitySource>(ins.field2);
  factor = std::make_shared<PhotometricFactor>(0, s1, s2, ins.X, ins.K);
  problem.add_factor(factor);
  return problem;
}

}  // namespace

TEST_CASE("bilinear sampling reproduces stored values at integer coordinates", "[photometric]") {
  TestRng rng(81);
  const ImageRaster img = random_raster(9, 7, rng);
  for (int v = 0; v < img.height; ++v) {
    for (int u = 0; u < img.width; ++u) {
      const auto s = bilinear_sample(img, Vec2(u, v));
      REQUIRE(s.has_value());
      REQUIRE(*s == img.at(u, v));
    }
  }
}

TEST_CASE("bilinear sampling interpolates a two-by-two checker of columns", "[photometric]") {
  ImageRaster img(2, 2);
  img.at(0, 0) = 0.0;
  img.at(1, 0) = 1.0;
  img.at(0, 1) = 0.0;
  img.at(1, 1) = 1.0;
  const auto mid = bilinear_sample(img, Vec2(0.5, 0.5));
  REQUIRE(mid.has_value());
  REQUIRE(*mid == Catch::Approx(0.5).margin(1e-15));
  const auto off = bilinear_sample(img, Vec2(0.25, 0.7));
  REQUIRE(off.has_value());
  REQUIRE(*off == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("bilinear sampling matches the four-term weighted sum", "[photometric]") {
  TestRng rng(82);
  const ImageRaster img = random_raster(16, 12, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const double u = rng.uniform(0.0, img.width - 1.0);
    const double v = rng.uniform(0.0, img.height - 1.0);
    const int u0 = std::min(static_cast<int>(std::floor(u)), img.width - 2);
    const int v0 = std::min(static_cast<int>(std::floor(v)), img.height - 2);
    const double fu = u - u0, fv = v - v0;
    const double expected = (1 - fu) * (1 - fv) * img.at(u0, v0) +
                            fu * (1 - fv) * img.at(u0 + 1, v0) +
                            (1 - fu) * fv * img.at(u0, v0 + 1) + fu * fv * img.at(u0 + 1, v0 + 1);
    const auto got = bilinear_sample(img, Vec2(u, v));
    REQUIRE(got.has_value());
    REQUIRE(*got == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("bilinear sampling rejects out-of-bounds points and accepts the far corner",
          "[photometric]") {
  TestRng rng(83);
  const ImageRaster img = random_raster(6, 5, rng);
  REQUIRE_FALSE(bilinear_sample(img, Vec2(-1e-12, 2.0)).has_value());
  REQUIRE_FALSE(bilinear_sample(img, Vec2(2.0, -0.5)).has_value());
  REQUIRE_FALSE(bilinear_sample(img, Vec2(5.0 + 1e-9, 2.0)).has_value());
  REQUIRE_FALSE(bilinear_sample(img, Vec2(2.0, 4.0 + 1e-9)).has_value());
  const auto corner = bilinear_sample(img, Vec2(5.0, 4.0));
  REQUIRE(corner.has_value());
  REQUIRE(*corner == img.at(5, 4));
}

TEST_CASE("image gradient is zero on constant images and exact on ramps", "[photometric]") {
  ImageRaster flat(8, 8, 7.5);
  const auto g0 = image_gradient(flat, Vec2(3.2, 4.7));
  REQUIRE(g0.has_value());
  REQUIRE(g0->norm() == 0.0);

  ImageRaster ramp(12, 10);
  for (int v = 0; v < ramp.height; ++v)
    for (int u = 0; u < ramp.width; ++u) ramp.at(u, v) = 3.0 * u + 5.0 * v;
  for (const Vec2& p : {Vec2(1.0, 1.0), Vec2(5.5, 4.5), Vec2(9.73, 7.21), Vec2(10.0, 8.0)}) {
    const auto g = image_gradient(ramp, p);
    REQUIRE(g.has_value());
    REQUIRE((*g - Vec2(3.0, 5.0)).norm() < 1e-12);
  }
}

TEST_CASE("image gradient equals finite differences of the sampler at cell centers and nodes",
          "[photometric]") {
  TestRng rng(84);
  const ImageRaster img = random_raster(16, 16, rng);
  const double h = 1e-3;
  auto fd_gradient = [&](const Vec2& p) {
    const auto up = bilinear_sample(img, Vec2(p.x() + h, p.y()));
    const auto um = bilinear_sample(img, Vec2(p.x() - h, p.y()));
    const auto vp = bilinear_sample(img, Vec2(p.x(), p.y() + h));
    const auto vm = bilinear_sample(img, Vec2(p.x(), p.y() - h));
    REQUIRE((up && um && vp && vm));
    return Vec2((*up - *um) / (2 * h), (*vp - *vm) / (2 * h));
  };
  for (int trial = 0; trial < 100; ++trial) {
    // Cell centers: the interpolant is linear across the half-pixel stencil,
    // so both estimates equal the local slope.
    const Vec2 center(std::floor(rng.uniform(1, 13)) + 0.5, std::floor(rng.uniform(1, 13)) + 0.5);
    const auto g1 = image_gradient(img, center);
    REQUIRE(g1.has_value());
    REQUIRE((*g1 - fd_gradient(center)).norm() < 1e-6);
    // Grid nodes: both estimates average the slopes of the adjacent cells.
    const Vec2 node(std::floor(rng.uniform(1, 14)), std::floor(rng.uniform(1, 14)));
    const auto g2 = image_gradient(img, node);
    REQUIRE(g2.has_value());
    REQUIRE((*g2 - fd_gradient(node)).norm() < 1e-6);
  }
}

TEST_CASE("image gradient refuses points within one pixel of the border", "[photometric]") {
  TestRng rng(85);
  const ImageRaster img = random_raster(8, 8, rng);
  REQUIRE_FALSE(image_gradient(img, Vec2(0.999, 4.0)).has_value());
  REQUIRE_FALSE(image_gradient(img, Vec2(4.0, 6.001)).has_value());
  REQUIRE(image_gradient(img, Vec2(1.0, 4.0)).has_value());
  REQUIRE(image_gradient(img, Vec2(4.0, 6.0)).has_value());
}

TEST_CASE("analytic field gradient matches finite differences of its value", "[photometric]") {
  TestRng rng(86);
  const auto field = random_field(rng);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2 p(rng.uniform(20.0, 108.0), rng.uniform(20.0, 108.0));
    const Vec2 g = *field->gradient(p);
    const double du = (*field->value(p + Vec2(h, 0)) - *field->value(p - Vec2(h, 0))) / (2 * h);
    const double dv = (*field->value(p + Vec2(0, h)) - *field->value(p - Vec2(0, h))) / (2 * h);
    REQUIRE((g - Vec2(du, dv)).norm() < 1e-5);
  }
}

TEST_CASE("photometric error vanishes for identical images at identity pose", "[photometric]") {
  TestRng rng(87);
  const ImageRaster img = random_raster(32, 32, rng);
  const RasterSource src(img);
  const Intrinsics K{10.0, 10.0, 15.0, 15.0};
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 X(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(1.0, 4.0));
    const auto p = project(K, X);
    if (!p || !bilinear_sample(img, *p)) continue;
    const auto e = photometric_error(src, src, PoseSE3::Identity(), X, K);
    REQUIRE(e.has_value());
    REQUIRE(*e == 0.0);
  }
}

TEST_CASE("photometric error of a brightness offset is minus the offset", "[photometric]") {
  TestRng rng(88);
  const ImageRaster img1 = random_raster(32, 32, rng);
  ImageRaster img2 = img1;
  const double c = 2.25;
  for (double& x : img2.data) x += c;
  const RasterSource src1(img1), src2(img2);
  const Intrinsics K{10.0, 10.0, 15.0, 15.0};
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 10; ++trial) {
    const Vec3 X(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(1.0, 4.0));
    const auto e = photometric_error(src1, src2, PoseSE3::Identity(), X, K);
    if (!e) continue;
    REQUIRE(*e == Catch::Approx(-c).margin(1e-12));
    ++checked;
  }
  REQUIRE(checked == 10);
}

TEST_CASE("photometric error agrees with direct evaluation on analytic images", "[photometric]") {
  TestRng rng(89);
  for (int trial = 0; trial < 50; ++trial) {
    const PhotoInstance ins = make_instance(rng);
    const auto e = photometric_error(*ins.field1, *ins.field2, ins.T, ins.X, ins.K);
    REQUIRE(e.has_value());
    const double i1 = *ins.field1->value(*project(ins.K, ins.X));
    const double i2 = *ins.field2->value(*project(ins.K, ins.T * ins.X));
    REQUIRE(*e == Catch::Approx(i1 - i2).margin(1e-9));
  }
}

TEST_CASE("photometric error propagates invalid projections and samples", "[photometric]") {
  TestRng rng(90);
  const ImageRaster img = random_raster(8, 8, rng);
  const RasterSource src(img);
  const Intrinsics K{1.0, 1.0, 3.5, 3.5};
  // Point on the camera plane: projection undefined.
  REQUIRE_FALSE(photometric_error(src, src, PoseSE3::Identity(), Vec3(0.1, 0.2, 0.0), K));
  // Projects far outside the raster.
  REQUIRE_FALSE(photometric_error(src, src, PoseSE3::Identity(), Vec3(50.0, 0.0, 1.0), K));
  // Valid in the host but pushed out of bounds in the target image.
  PoseSE3 T = PoseSE3::Identity();
  T.t = Vec3(100.0, 0.0, 0.0);
  REQUIRE(photometric_error(src, src, PoseSE3::Identity(), Vec3(0.0, 0.0, 2.0), K).has_value());
  REQUIRE_FALSE(photometric_error(src, src, T, Vec3(0.0, 0.0, 2.0), K).has_value());
}

TEST_CASE("photometric pose jacobian is zero where the image is flat", "[photometric]") {
  ImageRaster flat(8, 8, 4.0);
  const RasterSource src(flat);
  const Intrinsics K{1.0, 1.0, 3.5, 3.5};
  const auto J = photometric_jacobian_pose(src, PoseSE3::Identity(), Vec3(0.0, 0.0, 2.0), K);
  REQUIRE(J.has_value());
  REQUIRE(J->norm() == 0.0);
}

TEST_CASE("photometric pose jacobian matches the hand-evaluated unit chain", "[photometric]") {
  const RampSource ramp(1.0, 0.0, 0.0);  // gradient (1, 0) everywhere
  const Intrinsics K{1.0, 1.0, 0.0, 0.0};
  const auto J = photometric_jacobian_pose(ramp, PoseSE3::Identity(), Vec3(0.0, 0.0, 1.0), K);
  REQUIRE(J.has_value());
  Eigen::Matrix<double, 1, 6> expected;
  expected << 0.0, 1.0, 0.0, 1.0, 0.0, 0.0;
  REQUIRE((*J + expected).norm() == 0.0);  // J = -(0,1,0,1,0,0) exactly
}

TEST_CASE("photometric pose jacobian matches finite differences on analytic images",
          "[photometric][numdiff]") {
  TestRng rng(91);
  int checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 2000 && checked < 200; ++trial) {
    const PhotoInstance ins = make_instance(rng);
    std::shared_ptr<PhotometricFactor> factor;
    const Problem problem = make_problem(ins, factor);
    const auto report = check_factor_jacobians(problem, *factor, PerturbationSpec{1e-5}, 1e-3);
    if (!report.oracle_ok) continue;
    worst = std::max(worst, report.max_scaled_error);
    ++checked;
  }
  REQUIRE(checked == 200);
  CAPTURE(worst);
  REQUIRE(worst < 1e-4);
}

TEST_CASE("pose perturbation of a camera point linearizes with quadratic remainder",
          "[photometric]") {
  TestRng rng(92);
  std::vector<double> ratios;
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 Xp(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(0.5, 5.0));
    Vec6 xi;
    xi.head<3>() = rng.rotation_vector(1.0);
    xi.tail<3>() = rng.vec3();
    auto remainder = [&](double s) {
      const Vec3 moved = exp_se3(Vec6(s * xi)) * Xp;
      const Vec3 linear = Xp + s * (-hat3(Xp) * xi.head<3>() + xi.tail<3>());
      return (moved - linear).norm();
    };
    const double r1 = remainder(1e-2), r2 = remainder(5e-3);
    if (r2 < 1e-14) continue;
    ratios.push_back(r1 / r2);
  }
  REQUIRE(ratios.size() > 30);
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  const double median = ratios[ratios.size() / 2];
  REQUIRE(median > 3.5);
  REQUIRE(median < 4.5);
}

TEST_CASE("rasterized field factors stay close to their analytic originals", "[photometric]") {
  TestRng rng(93);
  std::vector<double> errors;
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 20; ++trial) {
    const PhotoInstance ins = make_instance(rng);
    ImageRaster r1(128, 128), r2(128, 128);
    for (int v = 0; v < 128; ++v) {
      for (int u = 0; u < 128; ++u) {
        r1.at(u, v) = *ins.field1->value(Vec2(u, v));
        r2.at(u, v) = *ins.field2->value(Vec2(u, v));
      }
    }
    const RasterSource src1(std::move(r1)), src2(std::move(r2));
    const auto e_raster = photometric_error(src1, src2, ins.T, ins.X, ins.K);
    const auto e_field = photometric_error(*ins.field1, *ins.field2, ins.T, ins.X, ins.K);
    if (!e_raster || !e_field) continue;
    REQUIRE(std::abs(*e_raster - *e_field) < 1.0);
    const auto j_raster = photometric_jacobian_pose(src2, ins.T, ins.X, ins.K);
    const auto j_field = photometric_jacobian_pose(*ins.field2, ins.T, ins.X, ins.K);
    if (!j_raster || !j_field) continue;
    errors.push_back(scaled_jacobian_error(*j_raster, *j_field, 1e-1));
    ++checked;
  }
  REQUIRE(checked == 20);
  std::sort(errors.begin(), errors.end());
  REQUIRE(errors.back() < 0.25);   // interpolation bias only
  REQUIRE(errors[errors.size() / 2] < 0.1);
}
