#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nreg/filters.hpp"
#include "nreg/problem.hpp"
#include "nreg/schedules.hpp"

namespace nreg {

/// How g_alpha(K*K)K* is applied inside each outer step.
enum class FilterPath {
  Iterative,  ///< the family's inner recurrence on the linearized actions
  Spectral,   ///< eigendecomposition of the materialized Jacobian
  Auto,       ///< spectral when the problem materializes a Jacobian of size <= 512
};

struct SolveConfig {
  FilterSpec filter = FilterSpec::landweber();
  AlphaSchedule schedule = AlphaSchedule::geometric(1.0, 0.5);
  double tau = 1.1;
  double delta = 0.0;
  long n_max = 60;
  Vector x0;
  /// Estimate ||F'(x0)|| and compare with min(1, sqrt(alpha_0)).
  bool scaling_check = true;
  /// Stop with ScalingViolation instead of only recording a warning.
  bool scaling_strict = false;
  FilterPath path = FilterPath::Auto;
  IterativeFilterOptions inner;
  /// Stopping floor on the residual when delta = 0.
  double residual_floor = 1e-14;
  std::optional<Vector> truth;
  bool keep_iterates = true;

  void validate() const;
};

enum class TerminationReason {
  Discrepancy,
  ResidualFloor,
  Budget,
  DomainExit,
  ScalingViolation,
  FilterBudgetExceeded,
  LinearSolveFailure,
};

std::string to_string(TerminationReason reason);

/// State at outer index n. `alpha` and `partial_sum` are alpha_n and s_n;
/// `inner_steps` counts the inner iterations spent leaving x_n (0 when no
/// step was taken from it).
struct IterationRecord {
  long n = 0;
  Vector iterate;  ///< empty unless SolveConfig::keep_iterates
  double residual_norm = 0.0;
  std::optional<double> error_norm;
  long inner_steps = 0;
  double alpha = 0.0;
  double partial_sum = 0.0;
};

struct IterationTrace {
  std::vector<IterationRecord> steps;
  TerminationReason reason = TerminationReason::Budget;
  std::optional<long> failure_step;
  std::string message;
  std::vector<std::string> warnings;
  std::optional<double> scaling_norm_estimate;
  double scaling_bound = 0.0;
  Vector final_iterate;

  /// Index of the last recorded iterate (n_delta for discrepancy stops).
  long stopping_index() const { return steps.empty() ? -1 : steps.back().n; }
  const IterationRecord& last() const { return steps.back(); }
  bool failed() const;
};

/// x_{n+1} = x_n - g_{alpha_n}(F'(x_n)*F'(x_n)) F'(x_n)*(F(x_n) - y_delta), stopped
/// by the discrepancy principle ||F(x_n) - y_delta|| <= tau delta, by the
/// residual floor when delta = 0, or after n_max steps.
///
/// Failures inside the iteration (domain exit, inner budget, linear solves,
/// strict scaling) end the trace with the matching reason and step index.
/// Invalid configurations throw std::invalid_argument.
IterationTrace solve(const InverseProblem& problem, const Vector& y_delta, const SolveConfig& cfg);

/// Checks the discrepancy bracket on a completed trace: the final residual is
/// <= tau delta and every earlier one is > tau delta.
bool discrepancy_bracket_holds(const IterationTrace& trace, double tau, double delta);

struct SourceConditionDiagnostic {
  double omega_norm = 0.0;
  /// ||excluded components of x0 - x_true|| / ||x0 - x_true||.
  double residual_of_fit = 0.0;
  std::size_t excluded_components = 0;
  double eigenvalue_floor = 0.0;
  double smallest_eigenvalue = 0.0;

  nlohmann::json to_json() const;
};

class MissingJacobianError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Minimum-norm omega with (T*T)^nu omega = x0 - x_true, T = F'(x_true),
/// dropping eigencomponents with eigenvalue below `eigenvalue_floor`.
SourceConditionDiagnostic source_condition_diagnostic(const InverseProblem& problem,
                                                      const Vector& x_truth, const Vector& x0,
                                                      double nu, double eigenvalue_floor = 1e-12);

/// One JSON object per step.
void write_trace_jsonl(std::ostream& os, const IterationTrace& trace);
/// n,residual_norm,error_norm,inner_steps,alpha,partial_sum
void write_trace_csv(std::ostream& os, const IterationTrace& trace);

}  // namespace nreg
