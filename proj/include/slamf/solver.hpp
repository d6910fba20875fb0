#pragma once

#include <chrono>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slamf/graph.hpp"
#include "slamf/pose_graph.hpp"
#include "slamf/variables.hpp"

namespace slamf {

enum class SolveMethod { GaussNewton, LevenbergMarquardt };

struct SolverOptions {
  SolveMethod method = SolveMethod::GaussNewton;
  int max_iterations = 50;
  double abs_tolerance = 1e-10;   // on the step norm
  double rel_tolerance = 1e-12;   // on the relative error decrease
  int rel_stall_window = 3;       // consecutive stalled accepted steps before stopping
  double lm_lambda_init = 1e-4;
  double lm_lambda_up = 10.0;
  double lm_lambda_down = 10.0;
  double lm_lambda_max = 1e12;
  JrMode jr_mode = JrMode::FirstOrder;
  int num_threads = 1;
  // Wall time stays zero in the stats unless enabled, keeping iteration logs
  // byte-identical across reruns.
  bool record_millis = false;
};

struct IterationStats {
  int iteration = 0;
  double error = 0.0;
  double step_norm = 0.0;
  double lambda = 0.0;
  bool accepted = false;
  double millis = 0.0;
};

struct SolveReport {
  std::vector<IterationStats> iterations;
  double initial_error = 0.0;
  double final_error = 0.0;
  int accepted_steps = 0;
  bool converged = false;
  std::string termination;
};

// Packed tangent-space layout of the free variables, ordered by ascending id.
struct VariableOrdering {
  std::vector<VariableId> order;
  std::map<VariableId, int> offset;
  int dim = 0;
};

inline VariableOrdering free_variable_ordering(const Problem& problem) {
  VariableOrdering out;
  for (const auto& [id, var] : problem.variables()) {
    if (var.fixed) continue;
    out.order.push_back(id);
    out.offset[id] = out.dim;
    out.dim += tangent_dim(var.kind);
  }
  if (out.dim == 0) {
    throw std::invalid_argument("free_variable_ordering: problem has no free variables");
  }
  return out;
}

struct NormalEquations {
  MatX H;
  VecX b;
  double error = 0.0;
  int valid_factors = 0;
  int invalid_factors = 0;
};

// H = sum J^T Omega J and b = sum J^T Omega e over valid factors, scattered
// into the free-variable layout. Accumulation runs in factor registration
// order, so the result is bit-identical regardless of evaluation threading.
inline NormalEquations build_normal_equations(const Problem& problem,
                                              const VariableOrdering& ordering,
                                              const std::vector<FactorEvaluation>& evals) {
  NormalEquations ne;
  ne.H = MatX::Zero(ordering.dim, ordering.dim);
  ne.b = VecX::Zero(ordering.dim);
  const auto& factors = problem.factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (!evals[i].valid) {
      ++ne.invalid_factors;
      continue;
    }
    ++ne.valid_factors;
    const MatX& omega = factors[i]->information();
    ne.error += weighted_error(evals[i].residual, omega);
    const auto& ids = factors[i]->variable_ids();
    for (std::size_t a = 0; a < ids.size(); ++a) {
      const auto it_a = ordering.offset.find(ids[a]);
      if (it_a == ordering.offset.end()) continue;
      const int off_a = it_a->second;
      const int dim_a = tangent_dim(problem.kind(ids[a]));
      const MatX jt_omega = evals[i].jacobians[a].transpose() * omega;
      ne.b.segment(off_a, dim_a) += jt_omega * evals[i].residual;
      for (std::size_t c = 0; c < ids.size(); ++c) {
        const auto it_c = ordering.offset.find(ids[c]);
        if (it_c == ordering.offset.end()) continue;
        const int dim_c = tangent_dim(problem.kind(ids[c]));
        ne.H.block(off_a, it_c->second, dim_a, dim_c) += jt_omega * evals[i].jacobians[c];
      }
    }
  }
  ne.H = (0.5 * (ne.H + ne.H.transpose())).eval();
  return ne;
}

inline NormalEquations build_normal_equations(const Problem& problem) {
  return build_normal_equations(problem, free_variable_ordering(problem),
                                evaluate_all(problem));
}

// Solves (H + lambda I) delta = -b through a symmetric indefinite
// factorization and verifies the back-substituted residual; a failed check
// reports an indefinite or singular system for the caller (LM raises lambda).
inline VecX solve_spd(const MatX& H, const VecX& b, double lambda) {
  MatX damped = H;
  damped.diagonal().array() += lambda;
  const Eigen::LDLT<MatX> ldlt(damped);
  VecX delta;
  if (ldlt.info() == Eigen::Success) {
    delta = ldlt.solve(-b);
  }
  if (delta.size() != b.size() || !delta.allFinite() ||
      (damped * delta + b).norm() >= 1e-10 * (b.norm() + 1.0)) {
    throw std::runtime_error("solve_spd: indefinite or singular damped system");
  }
  return delta;
}

namespace detail {

inline void validate_options(const SolverOptions& opts) {
  if (!(opts.abs_tolerance > 0.0) || !(opts.rel_tolerance > 0.0)) {
    throw std::invalid_argument("solver options: tolerances must be positive");
  }
  if (!(opts.lm_lambda_up > 1.0) || !(opts.lm_lambda_down > 1.0)) {
    throw std::invalid_argument("solver options: lambda factors must exceed 1");
  }
  if (opts.max_iterations < 1) {
    throw std::invalid_argument("solver options: max_iterations must be at least 1");
  }
}

inline void apply_step(Problem& problem, const VariableOrdering& ordering, const VecX& delta) {
  for (const VariableId id : ordering.order) {
    problem.update_variable(
        id, delta.segment(ordering.offset.at(id), tangent_dim(problem.kind(id))));
  }
}

inline std::vector<Value> snapshot_values(const Problem& problem,
                                          const VariableOrdering& ordering) {
  std::vector<Value> out;
  out.reserve(ordering.order.size());
  for (const VariableId id : ordering.order) out.push_back(problem.value(id));
  return out;
}

inline void restore_values(Problem& problem, const VariableOrdering& ordering,
                           const std::vector<Value>& saved) {
  for (std::size_t i = 0; i < ordering.order.size(); ++i) {
    problem.set_value(ordering.order[i], saved[i]);
  }
}

inline void check_valid_fraction(const ErrorSummary& summary) {
  const int total = summary.valid_factors + summary.invalid_factors;
  if (total > 0 && 2 * summary.invalid_factors > total) {
    throw std::runtime_error("solver: more than half of the factors are invalid (" +
                             std::to_string(summary.invalid_factors) + " of " +
                             std::to_string(total) + ")");
  }
}

inline double elapsed_ms(const std::chrono::steady_clock::time_point& from, bool enabled) {
  if (!enabled) return 0.0;
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - from)
      .count();
}

}  // namespace detail

inline SolveReport gauss_newton(Problem& problem, const SolverOptions& opts = {}) {
  detail::validate_options(opts);
  const VariableOrdering ordering = free_variable_ordering(problem);

  auto evals = evaluate_all(problem, opts.num_threads);
  ErrorSummary summary = error_summary(problem, evals);
  detail::check_valid_fraction(summary);

  SolveReport report;
  report.initial_error = summary.total;
  double error = summary.total;
  int stalled = 0;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const auto started = std::chrono::steady_clock::now();
    const NormalEquations ne = build_normal_equations(problem, ordering, evals);
    VecX delta;
    try {
      delta = solve_spd(ne.H, ne.b, 0.0);
    } catch (const std::runtime_error& err) {
      throw std::runtime_error("gauss_newton iteration " + std::to_string(iter) + ": " +
                               err.what());
    }
    detail::apply_step(problem, ordering, delta);

    evals = evaluate_all(problem, opts.num_threads);
    summary = error_summary(problem, evals);
    detail::check_valid_fraction(summary);
    const double new_error = summary.total;

    IterationStats stats;
    stats.iteration = iter;
    stats.error = new_error;
    stats.step_norm = delta.norm();
    stats.lambda = 0.0;
    stats.accepted = true;
    stats.millis = detail::elapsed_ms(started, opts.record_millis);
    report.iterations.push_back(stats);
    ++report.accepted_steps;

    const double decrease = (error - new_error) / std::max(error, 1e-300);
    error = new_error;
    if (stats.step_norm < opts.abs_tolerance) {
      report.converged = true;
      report.termination = "step norm below tolerance";
      break;
    }
    stalled = (decrease < opts.rel_tolerance) ? stalled + 1 : 0;
    if (stalled >= opts.rel_stall_window) {
      report.converged = true;
      report.termination = "relative error decrease stalled";
      break;
    }
  }
  if (report.termination.empty()) report.termination = "max iterations reached";
  report.final_error = error;
  return report;
}

inline SolveReport levenberg_marquardt(Problem& problem, const SolverOptions& opts = {}) {
  detail::validate_options(opts);
  const VariableOrdering ordering = free_variable_ordering(problem);

  auto evals = evaluate_all(problem, opts.num_threads);
  ErrorSummary summary = error_summary(problem, evals);
  detail::check_valid_fraction(summary);

  SolveReport report;
  report.initial_error = summary.total;
  double error = summary.total;
  double lambda = opts.lm_lambda_init;
  int stalled = 0;
  bool rebuild = true;
  NormalEquations ne;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const auto started = std::chrono::steady_clock::now();
    if (rebuild) {
      ne = build_normal_equations(problem, ordering, evals);
      rebuild = false;
    }

    bool solve_failed = false;
    VecX delta;
    try {
      delta = solve_spd(ne.H, ne.b, lambda);
    } catch (const std::runtime_error&) {
      solve_failed = true;
    }

    bool accepted = false;
    double new_error = error;
    std::vector<FactorEvaluation> tentative_evals;
    if (!solve_failed) {
      const std::vector<Value> saved = detail::snapshot_values(problem, ordering);
      detail::apply_step(problem, ordering, delta);
      tentative_evals = evaluate_all(problem, opts.num_threads);
      const ErrorSummary tentative = error_summary(problem, tentative_evals);
      const int total = tentative.valid_factors + tentative.invalid_factors;
      const bool usable = total == 0 || 2 * tentative.invalid_factors <= total;
      if (usable && tentative.total < error) {
        accepted = true;
        new_error = tentative.total;
      } else {
        detail::restore_values(problem, ordering, saved);
      }
    }

    IterationStats stats;
    stats.iteration = iter;
    stats.error = accepted ? new_error : error;
    stats.step_norm = solve_failed ? 0.0 : delta.norm();
    stats.lambda = lambda;
    stats.accepted = accepted;
    stats.millis = detail::elapsed_ms(started, opts.record_millis);
    report.iterations.push_back(stats);

    if (accepted) {
      ++report.accepted_steps;
      evals = std::move(tentative_evals);
      rebuild = true;
      const double decrease = (error - new_error) / std::max(error, 1e-300);
      error = new_error;
      lambda /= opts.lm_lambda_down;
      if (stats.step_norm < opts.abs_tolerance) {
        report.converged = true;
        report.termination = "step norm below tolerance";
        break;
      }
      stalled = (decrease < opts.rel_tolerance) ? stalled + 1 : 0;
      if (stalled >= opts.rel_stall_window) {
        report.converged = true;
        report.termination = "relative error decrease stalled";
        break;
      }
    } else {
      lambda *= opts.lm_lambda_up;
      if (lambda > opts.lm_lambda_max) {
        report.termination = "stalled: damping exceeded " + std::to_string(opts.lm_lambda_max);
        break;
      }
    }
  }
  if (report.termination.empty()) report.termination = "max iterations reached";
  report.final_error = error;
  return report;
}

inline SolveReport solve(Problem& problem, const SolverOptions& opts = {}) {
  return opts.method == SolveMethod::GaussNewton ? gauss_newton(problem, opts)
                                                 : levenberg_marquardt(problem, opts);
}

// CSV export of the iteration log; %.17g keeps round trips exact and reruns
// byte-identical (wall time stays zero unless explicitly recorded).
inline std::string iteration_stats_csv(const SolveReport& report) {
  std::string out = "iter,E,step_norm,lambda,accepted,millis\n";
  char line[256];
  for (const IterationStats& s : report.iterations) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%d,%.17g\n", s.iteration, s.error,
                  s.step_norm, s.lambda, s.accepted ? 1 : 0, s.millis);
    out += line;
  }
  return out;
}

}  // namespace slamf
