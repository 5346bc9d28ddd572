#include "nreg/newton.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace nreg {

namespace {

// The filter module works with Euclidean adjoints. With model weight wx and
// data weight wy the true adjoint is (wy/wx) J^T, so the step is computed for
// the rescaled operator sqrt(wy/wx) J and data sqrt(wy/wx) b, which yields
// the same g(K*K)K*b.
struct ScaledStep {
  LinearOperator op;
  double data_scale = 1.0;
};

ScaledStep make_step_operator(const InverseProblem& problem, const Linearization& lin) {
  const double scale = std::sqrt(problem.data_weight() / problem.model_weight());
  ScaledStep step;
  step.data_scale = scale;
  step.op.dim_in = problem.model_dim();
  step.op.dim_out = problem.data_dim();
  if (lin.jacobian) {
    step.op = LinearOperator::from_matrix(scale * *lin.jacobian);
    return step;
  }
  if (scale == 1.0) {
    step.op.apply = lin.derivative;
    step.op.apply_adjoint = lin.adjoint;
  } else {
    step.op.apply = [d = lin.derivative, scale](const Vector& h) -> Vector { return scale * d(h); };
    step.op.apply_adjoint = [a = lin.adjoint, scale](const Vector& w) -> Vector {
      return a(w) / scale;
    };
  }
  return step;
}

bool wants_jacobian(const InverseProblem& problem, const SolveConfig& cfg) {
  const bool available = problem.has_jacobian() && problem.model_dim() <= 512;
  switch (cfg.path) {
    case FilterPath::Spectral:
      return true;
    case FilterPath::Auto:
      return available;
    case FilterPath::Iterative:
      // Landweber sweeps stay on the problem's own actions; the implicit
      // families and exponential Euler prefer a materialized operator.
      return available && cfg.filter.family != FilterFamily::Landweber;
  }
  return false;
}

}  // namespace

void SolveConfig::validate() const {
  filter.validate();
  if (!(tau > 1.0)) throw std::invalid_argument("discrepancy parameter tau must be > 1");
  if (!(delta >= 0.0) || !std::isfinite(delta))
    throw std::invalid_argument("noise level delta must be finite and >= 0");
  if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
  if (schedule.last_index() >= 0 && schedule.last_index() < n_max)
    throw std::invalid_argument("explicit schedule needs at least n_max + 1 values");
}

std::string to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::Discrepancy:
      return "discrepancy";
    case TerminationReason::ResidualFloor:
      return "residual-floor";
    case TerminationReason::Budget:
      return "budget";
    case TerminationReason::DomainExit:
      return "domain-exit";
    case TerminationReason::ScalingViolation:
      return "scaling-violation";
    case TerminationReason::FilterBudgetExceeded:
      return "filter-budget-exceeded";
    case TerminationReason::LinearSolveFailure:
      return "linear-solve-failure";
  }
  return "unknown";
}

bool IterationTrace::failed() const {
  return reason == TerminationReason::DomainExit || reason == TerminationReason::ScalingViolation ||
         reason == TerminationReason::FilterBudgetExceeded ||
         reason == TerminationReason::LinearSolveFailure;
}

IterationTrace solve(const InverseProblem& problem, const Vector& y_delta, const SolveConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(cfg.x0.size()) != problem.model_dim())
    throw std::invalid_argument("initial guess has wrong dimension");
  if (static_cast<std::size_t>(y_delta.size()) != problem.data_dim())
    throw std::invalid_argument("data vector has wrong dimension");
  if (cfg.truth && static_cast<std::size_t>(cfg.truth->size()) != problem.model_dim())
    throw std::invalid_argument("truth vector has wrong dimension");
  if (cfg.path == FilterPath::Spectral && !problem.has_jacobian())
    throw std::invalid_argument("spectral filter path needs a materialized Jacobian");
  if (!problem.in_domain(cfg.x0)) throw std::invalid_argument("initial guess outside D(F)");

  const bool use_jacobian = wants_jacobian(problem, cfg);
  const bool spectral =
      cfg.path == FilterPath::Spectral || (cfg.path == FilterPath::Auto && use_jacobian);
  const double threshold = cfg.tau * cfg.delta;

  IterationTrace trace;
  Vector x = cfg.x0;
  Linearization lin = problem.linearize(x, use_jacobian);
  if (spectral && !lin.jacobian)
    throw std::invalid_argument("spectral filter path needs a materialized Jacobian");

  if (cfg.scaling_check) {
    trace.scaling_bound = std::min(1.0, std::sqrt(cfg.schedule.alpha0()));
    const NormEstimate est = estimate_operator_norm(
        lin.derivative, lin.adjoint, problem.model_dim(), {},
        [&](const Vector& a, const Vector& b) { return problem.model_dot(a, b); });
    trace.scaling_norm_estimate = est.value;
    if (est.value > trace.scaling_bound * (1.0 + 1e-9)) {
      const std::string msg = "estimated ||F'(x0)|| = " + std::to_string(est.value) +
                              " exceeds min(1, sqrt(alpha0)) = " +
                              std::to_string(trace.scaling_bound);
      if (cfg.scaling_strict) {
        trace.reason = TerminationReason::ScalingViolation;
        trace.failure_step = 0;
        trace.message = msg;
        trace.final_iterate = x;
        return trace;
      }
      trace.warnings.push_back(msg);
    }
  }

  for (long n = 0;; ++n) {
    const Vector residual = lin.value - y_delta;
    IterationRecord rec;
    rec.n = n;
    rec.residual_norm = problem.data_norm(residual);
    if (cfg.truth) rec.error_norm = problem.model_norm(x - *cfg.truth);
    if (cfg.keep_iterates) rec.iterate = x;
    rec.alpha = cfg.schedule.alpha_at(n);
    rec.partial_sum = cfg.schedule.partial_sum(n);
    trace.steps.push_back(rec);
    IterationRecord& current = trace.steps.back();

    if (cfg.delta > 0.0 && current.residual_norm <= threshold) {
      trace.reason = TerminationReason::Discrepancy;
      break;
    }
    if (cfg.delta == 0.0 && current.residual_norm <= cfg.residual_floor) {
      trace.reason = TerminationReason::ResidualFloor;
      break;
    }
    if (n >= cfg.n_max) {
      trace.reason = TerminationReason::Budget;
      break;
    }

    const double alpha = cfg.schedule.alpha_at(n);
    Vector update;
    try {
      const ScaledStep step = make_step_operator(problem, lin);
      const Vector b = -step.data_scale * residual;
      if (spectral) {
        update = apply_filter_spectral(cfg.filter, alpha, *step.op.matrix, b);
      } else {
        FilterApplication app = apply_filter_iterative(cfg.filter, alpha, step.op, b, cfg.inner);
        current.inner_steps = app.inner_steps;
        update = std::move(app.result);
      }
    } catch (const FilterBudgetError& e) {
      trace.reason = TerminationReason::FilterBudgetExceeded;
      trace.failure_step = n;
      trace.message = e.what();
      break;
    } catch (const LinearSolveError& e) {
      trace.reason = TerminationReason::LinearSolveFailure;
      trace.failure_step = n;
      trace.message = e.what();
      break;
    }
    if (spectral) current.inner_steps = inner_step_count(cfg.filter, alpha);

    Vector next = x + update;
    try {
      if (!problem.in_domain(next)) throw DomainExitError("iterate left D(F)");
      lin = problem.linearize(next, use_jacobian);
    } catch (const DomainExitError& e) {
      trace.reason = TerminationReason::DomainExit;
      trace.failure_step = n + 1;
      trace.message = e.what();
      break;
    }
    x = std::move(next);
  }
  trace.final_iterate = x;
  return trace;
}

bool discrepancy_bracket_holds(const IterationTrace& trace, double tau, double delta) {
  if (trace.reason != TerminationReason::Discrepancy || trace.steps.empty()) return false;
  const double threshold = tau * delta;
  if (!(trace.steps.back().residual_norm <= threshold)) return false;
  return std::all_of(trace.steps.begin(), trace.steps.end() - 1,
                     [&](const IterationRecord& r) { return r.residual_norm > threshold; });
}

nlohmann::json SourceConditionDiagnostic::to_json() const {
  return {{"omega_norm", omega_norm},
          {"residual_of_fit", residual_of_fit},
          {"excluded_components", excluded_components},
          {"eigenvalue_floor", eigenvalue_floor},
          {"smallest_eigenvalue", smallest_eigenvalue}};
}

SourceConditionDiagnostic source_condition_diagnostic(const InverseProblem& problem,
                                                      const Vector& x_truth, const Vector& x0,
                                                      double nu, double eigenvalue_floor) {
  if (!(nu > 0.0 && nu <= 0.5)) throw std::invalid_argument("source exponent nu must be in (0, 1/2]");
  if (!problem.has_jacobian())
    throw MissingJacobianError("source diagnostic needs a materialized Jacobian");
  const std::optional<DenseMatrix> jac = problem.jacobian_matrix(x_truth);
  if (!jac) throw MissingJacobianError("problem returned no Jacobian at x_truth");

  // Adjoint-consistent normal operator, see make_step_operator.
  const double scale = std::sqrt(problem.data_weight() / problem.model_weight());
  const DenseMatrix k = scale * *jac;
  const SymmetricEigenDecomposition eig = sym_eigen(k.transpose() * k, 1e-10);

  SourceConditionDiagnostic out;
  out.eigenvalue_floor = eigenvalue_floor;
  out.smallest_eigenvalue = eig.eigenvalues.minCoeff();
  const Vector e = x0 - x_truth;
  const Vector coeffs = eig.eigenvectors.transpose() * e;
  double omega_sq = 0.0, excluded_sq = 0.0;
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    const double lambda = eig.eigenvalues[i];
    if (lambda > eigenvalue_floor) {
      const double w = coeffs[i] / std::pow(lambda, nu);
      omega_sq += w * w;
    } else {
      excluded_sq += coeffs[i] * coeffs[i];
      ++out.excluded_components;
    }
  }
  out.omega_norm = std::sqrt(problem.model_weight() * omega_sq);
  const double total = coeffs.squaredNorm();
  out.residual_of_fit = total > 0.0 ? std::sqrt(excluded_sq / total) : 0.0;
  return out;
}

void write_trace_jsonl(std::ostream& os, const IterationTrace& trace) {
  for (const auto& rec : trace.steps) {
    nlohmann::json j = {{"n", rec.n},
                        {"residual_norm", rec.residual_norm},
                        {"inner_steps", rec.inner_steps},
                        {"alpha", rec.alpha},
                        {"partial_sum", rec.partial_sum}};
    j["error_norm"] = rec.error_norm ? nlohmann::json(*rec.error_norm) : nlohmann::json(nullptr);
    if (rec.iterate.size() > 0)
      j["iterate"] = std::vector<double>(rec.iterate.begin(), rec.iterate.end());
    os << j.dump() << '\n';
  }
}

void write_trace_csv(std::ostream& os, const IterationTrace& trace) {
  const auto old_precision = os.precision(17);
  os << "n,residual_norm,error_norm,inner_steps,alpha,partial_sum\n";
  for (const auto& rec : trace.steps) {
    os << rec.n << ',' << rec.residual_norm << ',';
    if (rec.error_norm) os << *rec.error_norm;
    os << ',' << rec.inner_steps << ',' << rec.alpha << ',' << rec.partial_sum << '\n';
  }
  os.precision(old_precision);
}

}  // namespace nreg
