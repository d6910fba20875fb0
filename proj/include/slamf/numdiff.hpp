#pragma once

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "slamf/graph.hpp"

namespace slamf {

// Step sizes for the central-difference probes. The default suits additive
// and twist perturbations of smooth geometric residuals; intensity residuals
// use a larger step (documented per factor).
struct PerturbationSpec {
  double step = 1e-6;
};

// Central finite differences of an arbitrary residual of one variable,
// differentiated through apply_update — the same retraction the solver
// applies, so agreement with an analytic Jacobian certifies the pair
// (derivative, update rule) together.
//
// fn maps a Value to an optional residual; an empty result at any probe
// point aborts the oracle (callers report a diagnostic and skip).
template <typename Fn>
std::optional<MatX> numeric_value_jacobian(Fn&& fn, VariableKind kind, const Value& x,
                                           PerturbationSpec spec = {}) {
  const int dim = tangent_dim(kind);
  MatX jac;
  for (int j = 0; j < dim; ++j) {
    VecX d = VecX::Zero(dim);
    d[j] = spec.step;
    const auto plus = fn(apply_update(kind, x, d));
    d[j] = -spec.step;
    const auto minus = fn(apply_update(kind, x, d));
    if (!plus || !minus || plus->size() != minus->size()) return std::nullopt;
    if (j == 0) jac.resize(plus->size(), dim);
    jac.col(j) = (*plus - *minus) / (2.0 * spec.step);
  }
  return jac;
}

// Numeric Jacobian of one factor with respect to one of its variables.
inline std::optional<MatX> numeric_factor_jacobian(const Problem& problem, const Factor& factor,
                                                   VariableId target, PerturbationSpec spec = {}) {
  Problem probe = problem;
  const VariableKind kind = problem.kind(target);
  const Value original = problem.value(target);
  return numeric_value_jacobian(
      [&](const Value& v) -> std::optional<VecX> {
        probe.set_value(target, v);
        FactorEvaluation ev = factor.evaluate(probe);
        if (!ev.valid) return std::nullopt;
        return std::move(ev.residual);
      },
      kind, original, spec);
}

// Worst entry of |analytic - numeric| / max(|analytic|, |numeric|, denom_floor).
// With denom_floor = abs_floor / tol this makes "scaled error <= tol"
// equivalent to "|a - n| <= max(tol * max(|a|,|n|), abs_floor)".
inline double scaled_jacobian_error(const MatX& analytic, const MatX& numeric,
                                    double denom_floor = 1e-2) {
  double worst = 0.0;
  for (int r = 0; r < analytic.rows(); ++r) {
    for (int c = 0; c < analytic.cols(); ++c) {
      const double a = analytic(r, c), n = numeric(r, c);
      const double denom = std::max({std::abs(a), std::abs(n), denom_floor});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
  }
  return worst;
}

// Full analytic-vs-numeric comparison of every Jacobian block of a factor.
struct FactorJacobianReport {
  bool oracle_ok = false;  // residual evaluable at the center and all probes
  std::vector<VariableId> variables;
  std::vector<MatX> analytic;
  std::vector<MatX> numeric;
  double max_scaled_error = 0.0;
};

inline FactorJacobianReport check_factor_jacobians(const Problem& problem, const Factor& factor,
                                                   PerturbationSpec spec = {},
                                                   double denom_floor = 1e-2) {
  FactorJacobianReport report;
  const FactorEvaluation center = factor.evaluate(problem);
  if (!center.valid) return report;
  report.oracle_ok = true;
  const auto& ids = factor.variable_ids();
  for (std::size_t slot = 0; slot < ids.size(); ++slot) {
    auto numeric = numeric_factor_jacobian(problem, factor, ids[slot], spec);
    if (!numeric) {
      report.oracle_ok = false;
      return report;
    }
    report.variables.push_back(ids[slot]);
    report.analytic.push_back(center.jacobians[slot]);
    report.numeric.push_back(std::move(*numeric));
    report.max_scaled_error =
        std::max(report.max_scaled_error,
                 scaled_jacobian_error(report.analytic.back(), report.numeric.back(), denom_floor));
  }
  return report;
}

}  // namespace slamf
