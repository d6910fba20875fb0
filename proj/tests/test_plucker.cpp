#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "slamf/numdiff.hpp"
#include "slamf/plucker.hpp"
#include "support/test_utils.hpp"

namespace {

using namespace slamf;
using slamf::testing::TestRng;

PluckerLine random_line(TestRng& rng, double span = 4.0) {
  for (;;) {
    const Vec3 p1 = rng.vec3(span), p2 = rng.vec3(span);
    const PluckerLine L = line_from_two_points(p1, p2);
    if (L.m.norm() > 0.5 && L.d.norm() > 0.5) return L;
  }
}

struct LineInstance {
  PoseSE3 T_cw;
  Intrinsics K;
  OrthonormalLine o;
  LineObservation obs;
};

// A segment placed in front of the camera, observed with a couple of pixels
// of endpoint noise so residuals are generically nonzero.
LineInstance make_instance(TestRng& rng) {
  for (;;) {
    LineInstance ins;
    ins.K = Intrinsics{rng.uniform(80.0, 120.0), rng.uniform(80.0, 120.0), 64.0, 64.0};
    ins.T_cw = rng.pose(1.0, 1.5);
    const Vec3 pc1(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(2.0, 8.0));
    const Vec3 pc2(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(2.0, 8.0));
    if ((pc2 - pc1).norm() < 0.5) continue;
    const PoseSE3 T_wc = ins.T_cw.inverse();
    const PluckerLine L_w = line_from_two_points(T_wc * pc1, T_wc * pc2);
    if (L_w.m.norm() < 1e-2 || L_w.d.norm() < 1e-2) continue;
    ins.o = orthonormal_from_plucker(L_w);
    const auto p1 = project(ins.K, pc1), p2 = project(ins.K, pc2);
    if (!p1 || !p2) continue;
    ins.obs.x_s = Vec3(p1->x() + rng.uniform(-2.0, 2.0), p1->y() + rng.uniform(-2.0, 2.0), 1.0);
    ins.obs.x_e = Vec3(p2->x() + rng.uniform(-2.0, 2.0), p2->y() + rng.uniform(-2.0, 2.0), 1.0);
    return ins;
  }
}

Problem line_problem(const LineInstance& ins, std::shared_ptr<PluckerLineFactor>& factor,
                     VariableKind pose_kind = VariableKind::PoseSE3Global) {
  Problem problem;
  problem.add_variable(0, VariableKind::OrthonormalLineVar, ins.o);
  problem.add_variable(1, pose_kind, ins.T_cw);
  factor = std::make_shared<PluckerLineFactor>(0, 1, ins.obs, ins.K);
  problem.add_factor(factor);
  return problem;
}

}  // namespace

TEST_CASE("line transform is identity at the identity and rotation-only for pure rotations",
          "[plucker]") {
  TestRng rng(121);
  for (int trial = 0; trial < 20; ++trial) {
    const PluckerLine L = random_line(rng);
    const PluckerLine same = transform_line(PoseSE3::Identity(), L);
    REQUIRE((same.m - L.m).norm() == 0.0);
    REQUIRE((same.d - L.d).norm() == 0.0);

    PoseSE3 rot = PoseSE3::Identity();
    rot.R = exp_so3(rng.rotation_vector(2.0));
    const PluckerLine turned = transform_line(rot, L);
    REQUIRE((turned.m - rot.R * L.m).norm() < 1e-14);
    REQUIRE((turned.d - rot.R * L.d).norm() < 1e-14);
  }
}

TEST_CASE("line transform equals rebuilding the line from transformed points", "[plucker]") {
  TestRng rng(122);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 p1 = rng.vec3(4.0), p2 = rng.vec3(4.0);
    const PoseSE3 T = rng.pose(2.0, 2.0);
    const PluckerLine moved = transform_line(T, line_from_two_points(p1, p2));
    const PluckerLine rebuilt = line_from_two_points(T * p1, T * p2);
    const double scale = std::max(1.0, rebuilt.m.norm());
    REQUIRE((moved.m - rebuilt.m).norm() < 1e-12 * scale);
    REQUIRE((moved.d - rebuilt.d).norm() < 1e-12 * scale);
  }
}

TEST_CASE("line transform preserves the Klein quadric", "[plucker]") {
  TestRng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    PluckerLine L = random_line(rng);
    const double s = std::pow(10.0, rng.uniform(-2.0, 3.0));
    L.m *= s;
    L.d *= s;
    const PluckerLine Lc = transform_line(rng.pose(2.0, 2.0), L);
    REQUIRE(std::abs(Lc.m.dot(Lc.d)) <= 1e-12 * Lc.m.norm() * Lc.d.norm());
  }
}

TEST_CASE("line projection with unit intrinsics returns the moment", "[plucker]") {
  PluckerLine L;
  L.m = Vec3(0.0, 1.0, -2.0);
  L.d = Vec3(1.0, 0.0, 0.0);
  const auto l = project_line(Mat3::Identity(), L);
  REQUIRE(l.has_value());
  REQUIRE((*l - Vec3(0.0, 1.0, -2.0)).norm() == 0.0);

  const Intrinsics unit{1.0, 1.0, 0.0, 0.0};
  REQUIRE((line_intrinsic(unit) - Mat3::Identity()).norm() == 0.0);

  PluckerLine through_center;
  through_center.d = Vec3(0.0, 0.0, 1.0);
  REQUIRE_FALSE(project_line(Mat3::Identity(), through_center).has_value());
}

TEST_CASE("projected segment endpoints lie on the projected line", "[plucker]") {
  TestRng rng(124);
  for (int trial = 0; trial < 50; ++trial) {
    const Intrinsics K{rng.uniform(50.0, 150.0), rng.uniform(50.0, 150.0), rng.uniform(-20.0, 20.0),
                       rng.uniform(-20.0, 20.0)};
    const Vec3 pc1(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(1.0, 6.0));
    const Vec3 pc2(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(1.0, 6.0));
    const PluckerLine L_c = line_from_two_points(pc1, pc2);
    if (L_c.m.norm() < 1e-3) continue;
    const auto l = project_line(line_intrinsic(K), L_c);
    REQUIRE(l.has_value());
    for (const Vec3& pc : {pc1, pc2}) {
      const Vec3 x = (Vec3() << *project(K, pc), 1.0).finished();
      REQUIRE(std::abs(x.dot(*l)) / l->norm() < 1e-9);
    }
  }
}

TEST_CASE("point-to-line distances match hand values and are scale invariant", "[plucker]") {
  const Vec3 l(0.0, 1.0, -2.0);  // the line v = 2 in pixel coordinates
  LineObservation obs;
  obs.x_s = Vec3(3.0, 2.0, 1.0);
  obs.x_e = Vec3(3.0, 5.0, 1.0);
  const auto e = line_reprojection_error(l, obs);
  REQUIRE(e.has_value());
  REQUIRE(e->x() == 0.0);
  REQUIRE(e->y() == Catch::Approx(3.0).margin(1e-15));

  const auto scaled = line_reprojection_error(7.0 * l, obs);
  REQUIRE(scaled.has_value());
  REQUIRE((*scaled - *e).norm() < 1e-15);

  REQUIRE_FALSE(line_reprojection_error(Vec3(0.0, 0.0, 5.0), obs).has_value());
}

TEST_CASE("orthonormal construction matches the unit example and normalizes scale", "[plucker]") {
  PluckerLine L;
  L.m = Vec3(1.0, 0.0, 0.0);
  L.d = Vec3(0.0, 1.0, 0.0);
  const OrthonormalLine o = orthonormal_from_plucker(L);
  REQUIRE((o.U - Mat3::Identity()).norm() < 1e-15);
  Mat2 expected_w;
  const double r = 1.0 / std::sqrt(2.0);
  expected_w << r, -r, r, r;  // first column carries (|m|, |d|) / norm
  REQUIRE((o.W - expected_w).norm() < 1e-15);

  PluckerLine L5 = L;
  L5.m *= 5.0;
  L5.d *= 5.0;
  const OrthonormalLine o5 = orthonormal_from_plucker(L5);
  REQUIRE((o5.U - o.U).norm() < 1e-15);
  REQUIRE((o5.W - o.W).norm() < 1e-15);
}

TEST_CASE("orthonormal construction rejects degenerate and non-orthogonal inputs", "[plucker]") {
  PluckerLine no_moment;
  no_moment.d = Vec3(0.0, 0.0, 1.0);
  REQUIRE_THROWS_AS(orthonormal_from_plucker(no_moment), std::domain_error);
  PluckerLine no_direction;
  no_direction.m = Vec3(1.0, 0.0, 0.0);
  REQUIRE_THROWS_AS(orthonormal_from_plucker(no_direction), std::domain_error);
  PluckerLine skew;
  skew.m = Vec3(1.0, 0.0, 0.0);
  skew.d = Vec3(1.0, 1.0, 0.0);
  REQUIRE_THROWS_AS(orthonormal_from_plucker(skew), std::domain_error);
}

TEST_CASE("orthonormal factors are rotations for random lines", "[plucker]") {
  TestRng rng(125);
  for (int trial = 0; trial < 100; ++trial) {
    const OrthonormalLine o = orthonormal_from_plucker(random_line(rng));
    REQUIRE((o.U.transpose() * o.U - Mat3::Identity()).norm() < 1e-9);
    REQUIRE(o.U.determinant() > 0.0);
    REQUIRE(std::abs(o.W.determinant() - 1.0) < 1e-12);
    REQUIRE((o.W.transpose() * o.W - Mat2::Identity()).norm() < 1e-12);
  }
}

TEST_CASE("back conversion matches the unit example and round trips up to scale", "[plucker]") {
  OrthonormalLine o;
  o.U = Mat3::Identity();
  const double r = 1.0 / std::sqrt(2.0);
  o.W << r, -r, r, r;
  const PluckerLine L = plucker_from_orthonormal(o);
  REQUIRE((L.m - Vec3(r, 0.0, 0.0)).norm() < 1e-15);
  REQUIRE((L.d - Vec3(0.0, r, 0.0)).norm() < 1e-15);

  TestRng rng(126);
  for (int trial = 0; trial < 100; ++trial) {
    const PluckerLine original = random_line(rng);
    const PluckerLine back = plucker_from_orthonormal(orthonormal_from_plucker(original));
    REQUIRE(back.m.normalized().dot(original.m.normalized()) > 1.0 - 1e-10);
    REQUIRE(back.d.normalized().dot(original.d.normalized()) > 1.0 - 1e-10);
    REQUIRE(std::abs(back.m.dot(back.d)) < 1e-12);
  }
}

TEST_CASE("orthonormal update is a right rotation action with quadratic composition remainder",
          "[plucker]") {
  TestRng rng(127);
  const OrthonormalLine o = orthonormal_from_plucker(random_line(rng));

  const OrthonormalLine same = update_orthonormal(o, Vec4::Zero());
  REQUIRE((same.U - o.U).norm() == 0.0);
  REQUIRE((same.W - o.W).norm() == 0.0);

  Vec4 quarter = Vec4::Zero();
  quarter[3] = M_PI / 2.0;
  const OrthonormalLine swapped = update_orthonormal(o, quarter);
  const double w1 = o.W(0, 0), w2 = o.W(1, 0);
  REQUIRE(swapped.W(0, 0) == Catch::Approx(-w2).margin(1e-14));
  REQUIRE(swapped.W(1, 0) == Catch::Approx(w1).margin(1e-14));

  std::vector<double> ratios;
  for (int trial = 0; trial < 40; ++trial) {
    const Vec4 d1 = Vec4::NullaryExpr([&](int) { return rng.uniform(-1.0, 1.0); });
    const Vec4 d2 = Vec4::NullaryExpr([&](int) { return rng.uniform(-1.0, 1.0); });
    auto distance = [](const OrthonormalLine& a, const OrthonormalLine& b) {
      return (a.U - b.U).norm() + (a.W - b.W).norm();
    };
    auto remainder = [&](double s) {
      const OrthonormalLine two =
          update_orthonormal(update_orthonormal(o, Vec4(s * d1)), Vec4(s * d2));
      const OrthonormalLine one = update_orthonormal(o, Vec4(s * (d1 + d2)));
      return distance(two, one);
    };
    const double r1 = remainder(1e-2), r2 = remainder(5e-3);
    if (r2 < 1e-14) continue;
    ratios.push_back(r1 / r2);
  }
  REQUIRE(ratios.size() > 25);
  std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
  const double median = ratios[ratios.size() / 2];
  REQUIRE(median > 3.5);
  REQUIRE(median < 4.5);
}

TEST_CASE("distance jacobian rows match the hand-evaluated unit-normal example", "[plucker]") {
  LineObservation obs;
  obs.x_s = Vec3(3.0, 2.0, 1.0);
  obs.x_e = Vec3(5.0, 7.0, 1.0);
  const Mat23 J = detail::distance_jacobian_wrt_line(Vec3(0.0, 1.0, 0.0), obs);
  Mat23 expected;
  expected << 3.0, 0.0, 1.0, 5.0, 0.0, 1.0;
  REQUIRE((J - expected).norm() < 1e-15);
}

TEST_CASE("line jacobians match finite differences for both parameter blocks",
          "[plucker][numdiff]") {
  TestRng rng(128);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 2000 && checked < 200; ++trial) {
    const LineInstance ins = make_instance(rng);
    std::shared_ptr<PluckerLineFactor> factor;
    const Problem problem = line_problem(ins, factor);
    const auto report = check_factor_jacobians(problem, *factor, PerturbationSpec{1e-6}, 1e-2);
    if (!report.oracle_ok) continue;
    worst = std::max(worst, report.max_scaled_error);
    ++checked;
  }
  REQUIRE(checked == 200);
  CAPTURE(worst);
  REQUIRE(worst < 1e-5);
}

TEST_CASE("line jacobians transport to locally updated poses", "[plucker][numdiff]") {
  TestRng rng(129);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 600 && checked < 50; ++trial) {
    const LineInstance ins = make_instance(rng);
    std::shared_ptr<PluckerLineFactor> factor;
    const Problem problem = line_problem(ins, factor, VariableKind::PoseSE3Local);
    const auto report = check_factor_jacobians(problem, *factor, PerturbationSpec{1e-6}, 1e-2);
    if (!report.oracle_ok) continue;
    worst = std::max(worst, report.max_scaled_error);
    ++checked;
  }
  REQUIRE(checked == 50);
  CAPTURE(worst);
  REQUIRE(worst < 1e-5);
}

TEST_CASE("line factor flags lines through the optical center as invalid", "[plucker]") {
  TestRng rng(130);
  const PoseSE3 T_cw = rng.pose(1.0, 2.0);
  const PoseSE3 T_wc = T_cw.inverse();
  // Both generating points sit on the camera's optical axis, so the
  // camera-frame moment vanishes.
  const PluckerLine L_w = line_from_two_points(T_wc * Vec3(0.0, 0.0, 2.0),
                                               T_wc * Vec3(0.0, 0.0, 5.0));
  Problem problem;
  problem.add_variable(0, VariableKind::OrthonormalLineVar, orthonormal_from_plucker(L_w));
  problem.add_variable(1, VariableKind::PoseSE3Global, T_cw);
  auto factor = std::make_shared<PluckerLineFactor>(
      0, 1, LineObservation{Vec3(1.0, 1.0, 1.0), Vec3(2.0, 2.0, 1.0), Mat2::Identity()},
      Intrinsics{100.0, 100.0, 64.0, 64.0});
  problem.add_factor(factor);
  REQUIRE_FALSE(factor->evaluate(problem).valid);
}
