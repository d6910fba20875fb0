#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "slamf/variables.hpp"

namespace slamf {

using VariableId = std::int64_t;

struct Variable {
  VariableKind kind;
  Value value;
  bool fixed = false;
};

// Residual and per-variable Jacobian blocks for one factor at the current
// state. Invalid evaluations (degenerate depth, out-of-image samples, ...)
// carry no blocks and contribute nothing to the normal equations.
struct FactorEvaluation {
  bool valid = false;
  VecX residual;
  std::vector<MatX> jacobians;
};

class Problem;

class Factor {
 public:
  Factor(std::vector<VariableId> ids, MatX information)
      : ids_(std::move(ids)), information_(std::move(information)) {}
  virtual ~Factor() = default;

  virtual std::string name() const = 0;
  virtual int residual_dim() const = 0;
  virtual FactorEvaluation evaluate(const Problem& problem) const = 0;

  const std::vector<VariableId>& variable_ids() const { return ids_; }
  const MatX& information() const { return information_; }

 protected:
  std::vector<VariableId> ids_;
  MatX information_;
};

using FactorPtr = std::shared_ptr<const Factor>;

// Variable registry plus factor set. Variables iterate in id order, which
// fixes the state ordering used by the solver and keeps runs deterministic.
class Problem {
 public:
  void add_variable(VariableId id, VariableKind kind, Value value, bool fixed = false) {
    if (variables_.count(id) != 0) {
      throw std::invalid_argument("Problem: duplicate variable id " + std::to_string(id));
    }
    variables_.emplace(id, Variable{kind, std::move(value), fixed});
  }

  void add_factor(FactorPtr factor) {
    for (VariableId id : factor->variable_ids()) {
      if (variables_.count(id) == 0) {
        throw std::invalid_argument("Problem: factor references unknown variable " +
                                    std::to_string(id));
      }
    }
    factors_.push_back(std::move(factor));
  }

  bool has_variable(VariableId id) const { return variables_.count(id) != 0; }

  const Variable& variable(VariableId id) const {
    const auto it = variables_.find(id);
    if (it == variables_.end()) {
      throw std::invalid_argument("Problem: unknown variable " + std::to_string(id));
    }
    return it->second;
  }

  const Value& value(VariableId id) const { return variable(id).value; }
  VariableKind kind(VariableId id) const { return variable(id).kind; }
  bool is_fixed(VariableId id) const { return variable(id).fixed; }

  void set_fixed(VariableId id, bool fixed) { mutable_variable(id).fixed = fixed; }

  void set_value(VariableId id, Value value) { mutable_variable(id).value = std::move(value); }

  // Retraction applied in place; the single mutation point between solver
  // iterations.
  void update_variable(VariableId id, const VecX& delta) {
    Variable& var = mutable_variable(id);
    var.value = apply_update(var.kind, var.value, delta);
  }

  const std::map<VariableId, Variable>& variables() const { return variables_; }
  const std::vector<FactorPtr>& factors() const { return factors_; }

 private:
  Variable& mutable_variable(VariableId id) {
    const auto it = variables_.find(id);
    if (it == variables_.end()) {
      throw std::invalid_argument("Problem: unknown variable " + std::to_string(id));
    }
    return it->second;
  }

  std::map<VariableId, Variable> variables_;
  std::vector<FactorPtr> factors_;
};

namespace detail {

// Left-increment Jacobians transport exactly to right-increment ones through
// the adjoint of the node pose: x * exp(d) = exp(Ad(x) d) * x.
inline MatX to_registered_convention(const MatX& j_left, const Problem& problem, VariableId id) {
  const VariableKind kind = problem.kind(id);
  if (kind == VariableKind::PoseSE3Global) return j_left;
  if (kind == VariableKind::PoseSE3Local) {
    return j_left * adjoint_se3(std::get<PoseSE3>(problem.value(id)));
  }
  throw std::invalid_argument("pose jacobian transport: variable is not a pose");
}

}  // namespace detail

inline double weighted_error(const VecX& e, const MatX& omega) {
  if (omega.rows() != e.size() || omega.cols() != e.size()) {
    throw std::invalid_argument("weighted_error: information matrix dimension mismatch");
  }
  return e.dot(omega * e);
}

// Evaluates every factor. Evaluations are pure reads of the shared problem
// state, so they may be sharded across threads; results land in per-factor
// slots, which makes the output independent of the thread count.
inline std::vector<FactorEvaluation> evaluate_all(const Problem& problem, int num_threads = 1) {
  const auto& factors = problem.factors();
  std::vector<FactorEvaluation> evals(factors.size());
  const int n = static_cast<int>(factors.size());
  num_threads = std::max(1, std::min(num_threads, n));
  if (num_threads <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) evals[i] = factors[i]->evaluate(problem);
    return evals;
  }
  std::vector<std::thread> workers;
  workers.reserve(num_threads);
  for (int t = 0; t < num_threads; ++t) {
    workers.emplace_back([&, t]() {
      for (int i = t; i < n; i += num_threads) {
        evals[i] = factors[i]->evaluate(problem);
      }
    });
  }
  for (auto& w : workers) w.join();
  return evals;
}

struct ErrorSummary {
  double total = 0.0;
  int valid_factors = 0;
  int invalid_factors = 0;
};

inline ErrorSummary error_summary(const Problem& problem,
                                  const std::vector<FactorEvaluation>& evals) {
  ErrorSummary s;
  const auto& factors = problem.factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (!evals[i].valid) {
      ++s.invalid_factors;
      continue;
    }
    ++s.valid_factors;
    s.total += weighted_error(evals[i].residual, factors[i]->information());
  }
  return s;
}

inline double total_error(const Problem& problem) {
  return error_summary(problem, evaluate_all(problem)).total;
}

}  // namespace slamf
