#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "slamf/graph.hpp"
#include "slamf/lie.hpp"
#include "slamf/variables.hpp"

namespace slamf {

// Twist error of a relative-pose constraint: e = Log(z^-1 * x_i^-1 * x_j)
// with z the measured i-to-j transform. Zero exactly when the edge is
// consistent; throws (via the logarithm) when the error rotation approaches a
// half turn.
inline Vec6 relative_pose_error(const PoseSE3& x_i, const PoseSE3& x_j, const PoseSE3& z) {
  return log_se3(z.inverse() * x_i.inverse() * x_j);
}

// How to treat the inverse right Jacobian weighting the error linearization.
enum class JrMode {
  Identity,    // drop the correction entirely
  FirstOrder,  // first-order polynomial in the error twist
};

inline Mat6 inv_right_jacobian_for(const Vec6& e, JrMode mode) {
  return mode == JrMode::Identity ? Mat6::Identity() : inv_right_jacobian_se3_approx(e);
}

struct RelativePoseJacobians {
  Mat6 j_i;
  Mat6 j_j;
};

// Jacobians of relative_pose_error for left-multiplicative increments
// exp(hat(d)) * x on each node: J_j = Jr^-1 * Ad(x_j^-1) and J_i = -J_j.
inline RelativePoseJacobians jacobians_relative_pose(const PoseSE3& x_i, const PoseSE3& x_j,
                                                     const PoseSE3& z,
                                                     JrMode mode = JrMode::FirstOrder) {
  const Vec6 e = relative_pose_error(x_i, x_j, z);
  const Mat6 j_j = inv_right_jacobian_for(e, mode) * adjoint_se3(x_j.inverse());
  return {-j_j, j_j};
}

// Alternative edge parameterization: e = Log(x_j^-1 * z * x_i), zero when
// z equals x_j * x_i^-1 (the relative motion expressed in the world frame).
inline Vec6 relative_pose_error_variant(const PoseSE3& x_i, const PoseSE3& x_j,
                                        const PoseSE3& z) {
  return log_se3(x_j.inverse() * z * x_i);
}

// Customary approximated Jacobians of the variant error for left increments:
// exact where the edge is consistent, off by O(|e|) elsewhere.
inline RelativePoseJacobians jacobians_g2o_variant(const PoseSE3& x_i, const PoseSE3& x_j,
                                                   const PoseSE3& z) {
  return {adjoint_se3(x_j.inverse() * z), -adjoint_se3(x_i.inverse() * z.inverse())};
}

// Pairwise pose constraint for graph optimization. The measurement is the
// i-to-j transform; Jacobians adapt to how each endpoint is registered
// (globally or locally updated).
class RelativePoseFactor final : public Factor {
 public:
  RelativePoseFactor(VariableId id_i, VariableId id_j, PoseSE3 measurement,
                     MatX information = MatX::Identity(6, 6), JrMode mode = JrMode::FirstOrder)
      : Factor({id_i, id_j}, std::move(information)), z_(std::move(measurement)), mode_(mode) {}

  std::string name() const override { return "relative_pose"; }
  int residual_dim() const override { return 6; }

  FactorEvaluation evaluate(const Problem& problem) const override {
    FactorEvaluation out;
    const PoseSE3& x_i = std::get<PoseSE3>(problem.value(ids_[0]));
    const PoseSE3& x_j = std::get<PoseSE3>(problem.value(ids_[1]));
    Vec6 e;
    try {
      e = relative_pose_error(x_i, x_j, z_);
    } catch (const std::domain_error&) {
      return out;  // error rotation too close to a half turn
    }
    const auto J = jacobians_relative_pose(x_i, x_j, z_, mode_);
    out.valid = true;
    out.residual = e;
    out.jacobians.push_back(detail::to_registered_convention(J.j_i, problem, ids_[0]));
    out.jacobians.push_back(detail::to_registered_convention(J.j_j, problem, ids_[1]));
    return out;
  }

  const PoseSE3& measurement() const { return z_; }

 private:
  PoseSE3 z_;
  JrMode mode_;
};

// Same constraint in the variant parameterization; expects the measurement in
// the world frame (z = x_j * x_i^-1 at consistency).
class RelativePoseFactorVariant final : public Factor {
 public:
  RelativePoseFactorVariant(VariableId id_i, VariableId id_j, PoseSE3 measurement,
                            MatX information = MatX::Identity(6, 6))
      : Factor({id_i, id_j}, std::move(information)), z_(std::move(measurement)) {}

  std::string name() const override { return "relative_pose_variant"; }
  int residual_dim() const override { return 6; }

  FactorEvaluation evaluate(const Problem& problem) const override {
    FactorEvaluation out;
    const PoseSE3& x_i = std::get<PoseSE3>(problem.value(ids_[0]));
    const PoseSE3& x_j = std::get<PoseSE3>(problem.value(ids_[1]));
    Vec6 e;
    try {
      e = relative_pose_error_variant(x_i, x_j, z_);
    } catch (const std::domain_error&) {
      return out;
    }
    const auto J = jacobians_g2o_variant(x_i, x_j, z_);
    out.valid = true;
    out.residual = e;
    out.jacobians.push_back(detail::to_registered_convention(J.j_i, problem, ids_[0]));
    out.jacobians.push_back(detail::to_registered_convention(J.j_j, problem, ids_[1]));
    return out;
  }

  const PoseSE3& measurement() const { return z_; }

 private:
  PoseSE3 z_;
};

}  // namespace slamf
