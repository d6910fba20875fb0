#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <vector>

#include "slamf/numdiff.hpp"
#include "slamf/pose_graph.hpp"
#include "support/oracles.hpp"
#include "support/test_utils.hpp"

namespace {

using namespace slamf;
using slamf::testing::TestRng;

struct EdgeInstance {
  PoseSE3 x_i;
  PoseSE3 x_j;
  PoseSE3 z;  // consistent measurement x_i^-1 * x_j
};

EdgeInstance consistent_edge(TestRng& rng, double rot_scale = 1.5) {
  EdgeInstance e;
  e.x_i = rng.pose(rot_scale, 2.0);
  e.x_j = rng.pose(rot_scale, 2.0);
  e.z = e.x_i.inverse() * e.x_j;
  return e;
}

Problem two_pose_problem(const PoseSE3& x_i, const PoseSE3& x_j, VariableKind kind_i,
                         VariableKind kind_j) {
  Problem problem;
  problem.add_variable(0, kind_i, x_i);
  problem.add_variable(1, kind_j, x_j);
  return problem;
}

}  // namespace

TEST_CASE("relative pose error vanishes on consistent edges", "[pose_graph]") {
  TestRng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const EdgeInstance e = consistent_edge(rng);
    REQUIRE(relative_pose_error(e.x_i, e.x_j, e.z).norm() < 1e-12);
  }
}

TEST_CASE("relative pose error of a measured offset between identity nodes is minus the offset",
          "[pose_graph]") {
  TestRng rng(102);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec6 xi = rng.twist(1.5, 2.0);
    const Vec6 e = relative_pose_error(PoseSE3::Identity(), PoseSE3::Identity(), exp_se3(xi));
    REQUIRE((e + xi).norm() < 1e-12);
  }
}

TEST_CASE("relative pose error refuses half-turn error rotations", "[pose_graph]") {
  const Vec3 axis = Vec3(1.0, 2.0, -0.5).normalized();
  Vec6 xi = Vec6::Zero();
  xi.head<3>() = axis * (M_PI - 1e-7);
  const PoseSE3 z = exp_se3(xi);
  REQUIRE_THROWS_AS(relative_pose_error(PoseSE3::Identity(), PoseSE3::Identity(), z),
                    std::domain_error);

  // The factor reports the same situation as an invalid evaluation.
  Problem problem = two_pose_problem(PoseSE3::Identity(), PoseSE3::Identity(),
                                     VariableKind::PoseSE3Global, VariableKind::PoseSE3Global);
  RelativePoseFactor factor(0, 1, z);
  REQUIRE_FALSE(factor.evaluate(problem).valid);
}

TEST_CASE("left perturbation of the second node maps through the adjoint exactly",
          "[pose_graph]") {
  TestRng rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    const EdgeInstance e = consistent_edge(rng);
    const Vec6 delta = rng.twist(1.0, 1.0);
    const double s = 1e-3;
    const PoseSE3 x_j_perturbed = exp_se3(Vec6(s * delta)) * e.x_j;
    const Vec6 err = relative_pose_error(e.x_i, x_j_perturbed, e.z);
    const Vec6 expected = s * adjoint_se3(e.x_j.inverse()) * delta;
    REQUIRE((err - expected).norm() < 1e-10);
  }
}

TEST_CASE("relative pose jacobians are plus and minus identity at a consistent edge anchored at "
          "the origin",
          "[pose_graph]") {
  TestRng rng(104);
  for (JrMode mode : {JrMode::FirstOrder, JrMode::Identity}) {
    for (int trial = 0; trial < 20; ++trial) {
      const PoseSE3 x_i = rng.pose(1.5, 2.0);
      const PoseSE3 x_j = PoseSE3::Identity();
      const PoseSE3 z = x_i.inverse();  // consistent: z = x_i^-1 * x_j
      const auto J = jacobians_relative_pose(x_i, x_j, z, mode);
      REQUIRE((J.j_j - Mat6::Identity()).norm() < 1e-12);
      REQUIRE((J.j_i + Mat6::Identity()).norm() < 1e-12);
    }
  }
}

TEST_CASE("relative pose jacobians are antisymmetric in the two nodes", "[pose_graph]") {
  TestRng rng(105);
  int checked = 0;
  for (int trial = 0; trial < 80 && checked < 40; ++trial) {
    const PoseSE3 x_i = rng.pose(1.0, 2.0);
    const PoseSE3 x_j = rng.pose(1.0, 2.0);
    const PoseSE3 z = rng.pose(1.0, 2.0);
    for (JrMode mode : {JrMode::FirstOrder, JrMode::Identity}) {
      try {
        const auto J = jacobians_relative_pose(x_i, x_j, z, mode);
        REQUIRE((J.j_i + J.j_j).norm() == 0.0);
        ++checked;
      } catch (const std::domain_error&) {
      }
    }
  }
  REQUIRE(checked >= 40);
}

TEST_CASE("jacobian modes agree at consistency and differ away from it", "[pose_graph]") {
  TestRng rng(106);
  const EdgeInstance e = consistent_edge(rng);
  const auto first = jacobians_relative_pose(e.x_i, e.x_j, e.z, JrMode::FirstOrder);
  const auto ident = jacobians_relative_pose(e.x_i, e.x_j, e.z, JrMode::Identity);
  REQUIRE((first.j_j - ident.j_j).norm() < 1e-12);

  const PoseSE3 x_j_off = exp_se3(rng.twist(0.3, 0.3)) * e.x_j;
  const auto first_off = jacobians_relative_pose(e.x_i, x_j_off, e.z, JrMode::FirstOrder);
  const auto ident_off = jacobians_relative_pose(e.x_i, x_j_off, e.z, JrMode::Identity);
  REQUIRE((first_off.j_j - ident_off.j_j).norm() > 1e-3);
}

TEST_CASE("relative pose factor matches finite differences at consistent edges for every "
          "registration convention",
          "[pose_graph][numdiff]") {
  TestRng rng(107);
  const VariableKind kinds[] = {VariableKind::PoseSE3Global, VariableKind::PoseSE3Local};
  double worst = 0.0;
  for (int trial = 0; trial < 120; ++trial) {
    const EdgeInstance e = consistent_edge(rng);
    const VariableKind kind_i = kinds[trial % 2];
    const VariableKind kind_j = kinds[(trial / 2) % 2];
    Problem problem = two_pose_problem(e.x_i, e.x_j, kind_i, kind_j);
    auto factor = std::make_shared<RelativePoseFactor>(0, 1, e.z);
    problem.add_factor(factor);
    const auto report = check_factor_jacobians(problem, *factor, PerturbationSpec{1e-6}, 0.1);
    REQUIRE(report.oracle_ok);
    worst = std::max(worst, report.max_scaled_error);
  }
  CAPTURE(worst);
  REQUIRE(worst < 1e-6);
}

TEST_CASE("first-order jacobian discrepancy shrinks linearly with the residual", "[pose_graph]") {
  TestRng rng(108);
  for (int trial = 0; trial < 5; ++trial) {
    const EdgeInstance e = consistent_edge(rng, 1.0);
    const Vec6 delta = rng.twist(1.0, 1.0);
    std::vector<double> discrepancy;
    for (double s : {0.2, 0.1, 0.05, 0.025}) {
      const PoseSE3 x_j_s = exp_se3(Vec6(s * delta)) * e.x_j;
      Problem problem = two_pose_problem(e.x_i, x_j_s, VariableKind::PoseSE3Global,
                                         VariableKind::PoseSE3Global);
      auto factor = std::make_shared<RelativePoseFactor>(0, 1, e.z);
      problem.add_factor(factor);
      const FactorEvaluation ev = factor->evaluate(problem);
      REQUIRE(ev.valid);
      double d = 0.0;
      for (int slot = 0; slot < 2; ++slot) {
        const auto numeric = numeric_factor_jacobian(problem, *factor, slot);
        REQUIRE(numeric.has_value());
        d = std::max(d, (ev.jacobians[slot] - *numeric).cwiseAbs().maxCoeff());
      }
      discrepancy.push_back(d);
    }
    CAPTURE(discrepancy[0], discrepancy[1], discrepancy[2], discrepancy[3]);
    for (std::size_t k = 1; k < discrepancy.size(); ++k) {
      REQUIRE(discrepancy[k] < discrepancy[k - 1]);
    }
    REQUIRE(discrepancy.back() <= 0.35 * discrepancy.front() + 1e-9);
  }
}

TEST_CASE("variant error vanishes for world-frame consistent measurements", "[pose_graph]") {
  TestRng rng(109);
  for (int trial = 0; trial < 50; ++trial) {
    const PoseSE3 x_i = rng.pose(1.5, 2.0);
    const PoseSE3 x_j = rng.pose(1.5, 2.0);
    const PoseSE3 z = x_j * x_i.inverse();
    REQUIRE(relative_pose_error_variant(x_i, x_j, z).norm() < 1e-12);
  }
}

TEST_CASE("variant jacobians at an all-identity edge are plus and minus identity",
          "[pose_graph]") {
  const auto J =
      jacobians_g2o_variant(PoseSE3::Identity(), PoseSE3::Identity(), PoseSE3::Identity());
  REQUIRE((J.j_i - Mat6::Identity()).norm() == 0.0);
  REQUIRE((J.j_j + Mat6::Identity()).norm() == 0.0);
}

TEST_CASE("variant factor matches finite differences at consistent edges for every registration "
          "convention",
          "[pose_graph][numdiff]") {
  TestRng rng(110);
  const VariableKind kinds[] = {VariableKind::PoseSE3Global, VariableKind::PoseSE3Local};
  double worst = 0.0;
  for (int trial = 0; trial < 120; ++trial) {
    const PoseSE3 x_i = rng.pose(1.5, 2.0);
    const PoseSE3 x_j = rng.pose(1.5, 2.0);
    const PoseSE3 z = x_j * x_i.inverse();
    Problem problem =
        two_pose_problem(x_i, x_j, kinds[trial % 2], kinds[(trial / 2) % 2]);
    auto factor = std::make_shared<RelativePoseFactorVariant>(0, 1, z);
    problem.add_factor(factor);
    const auto report = check_factor_jacobians(problem, *factor, PerturbationSpec{1e-6}, 0.1);
    REQUIRE(report.oracle_ok);
    worst = std::max(worst, report.max_scaled_error);
  }
  CAPTURE(worst);
  REQUIRE(worst < 1e-6);
}
