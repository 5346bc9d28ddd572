#include "nreg/filters.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace nreg {

namespace {

constexpr double kLambdaSlack = 1e-12;

long floor_inverse(double alpha) {
  return static_cast<long>(std::floor(1.0 / alpha));
}

void check_alpha(const FilterSpec& spec, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw FilterDomainError("filter parameter alpha must be positive and finite");
  if ((spec.family == FilterFamily::Landweber || spec.family == FilterFamily::Lardy) &&
      alpha > 1.0)
    throw FilterDomainError(spec.name() + " filter requires 0 < alpha <= 1");
}

double check_lambda(double lambda) {
  if (!(lambda >= -kLambdaSlack && lambda <= 1.0 + kLambdaSlack))
    throw FilterDomainError("spectral variable lambda must lie in [0,1]");
  return std::clamp(lambda, 0.0, 1.0);
}

// Exponent x with r_alpha(lambda) = exp(x); -inf when the residual is zero.
// Callers have validated alpha and clamped lambda to [0,1].
double residual_exponent(const FilterSpec& spec, double alpha, double lambda) {
  switch (spec.family) {
    case FilterFamily::IteratedTikhonov:
      return -static_cast<double>(spec.order) * std::log1p(lambda / alpha);
    case FilterFamily::ExponentialEuler:
      return -lambda / alpha;
    case FilterFamily::Landweber:
      if (lambda >= 1.0) return -std::numeric_limits<double>::infinity();
      return static_cast<double>(floor_inverse(alpha)) * std::log1p(-lambda);
    case FilterFamily::Lardy:
      return -static_cast<double>(floor_inverse(alpha)) * std::log1p(lambda);
  }
  return 0.0;
}

double g_at_zero(const FilterSpec& spec, double alpha) {
  switch (spec.family) {
    case FilterFamily::IteratedTikhonov:
      return static_cast<double>(spec.order) / alpha;
    case FilterFamily::ExponentialEuler:
      return 1.0 / alpha;
    case FilterFamily::Landweber:
    case FilterFamily::Lardy:
      return static_cast<double>(floor_inverse(alpha));
  }
  return 0.0;
}

// Unchecked evaluation on lambda >= 0 (Landweber additionally up to 2).
double g_value(const FilterSpec& spec, double alpha, double lambda) {
  if (lambda <= 0.0) return g_at_zero(spec, alpha);
  if (spec.family == FilterFamily::Landweber && lambda >= 1.0) {
    const double k = static_cast<double>(floor_inverse(alpha));
    return (1.0 - std::pow(1.0 - lambda, k)) / lambda;
  }
  return -std::expm1(residual_exponent(spec, alpha, lambda)) / lambda;
}

Vector apply_normal_inverse_cg(const LinearOperator& op, double shift, const Vector& rhs,
                               const IterativeFilterOptions& opts) {
  // Solves (shift I + K*K) z = rhs. A constant inner-product weight on the
  // model space does not change the CG iterates.
  const int max_it = opts.cg_max_iterations > 0
                         ? opts.cg_max_iterations
                         : std::max<int>(200, 10 * static_cast<int>(op.dim_in));
  auto normal = [&](const Vector& v) -> Vector { return shift * v + op.apply_adjoint(op.apply(v)); };
  Vector z = Vector::Zero(rhs.size());
  Vector r = rhs;
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) return z;
  Vector p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_it; ++it) {
    const Vector ap = normal(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) throw LinearSolveError("CG breakdown: normal operator not positive definite");
    const double step = rr / pap;
    z += step * p;
    r -= step * ap;
    const double rr_new = r.squaredNorm();
    if (std::sqrt(rr_new) <= opts.cg_rel_tol * rhs_norm) return z;
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  // Recompute the true residual; CG recurrences drift near machine precision.
  const double true_res = (rhs - normal(z)).norm();
  if (true_res <= 1e3 * opts.cg_rel_tol * rhs_norm) return z;
  throw LinearSolveError("CG did not converge for the shifted normal equations");
}

class ShiftedNormalSolver {
 public:
  ShiftedNormalSolver(const LinearOperator& op, double shift, const IterativeFilterOptions& opts)
      : op_(op), shift_(shift), opts_(opts) {
    if (op.matrix) {
      const DenseMatrix& k = *op.matrix;
      DenseMatrix normal = k.transpose() * k;
      normal.diagonal().array() += shift;
      llt_.compute(normal);
      if (llt_.info() != Eigen::Success)
        throw LinearSolveError("Cholesky factorization of shifted normal matrix failed");
    }
  }

  Vector solve(const Vector& rhs) const {
    if (op_.matrix) return llt_.solve(rhs);
    return apply_normal_inverse_cg(op_, shift_, rhs, opts_);
  }

 private:
  const LinearOperator& op_;
  double shift_;
  const IterativeFilterOptions& opts_;
  Eigen::LLT<DenseMatrix> llt_;
};

// z <- z + M^{-1} K*(b - K z), `steps` times.
Vector implicit_sweeps(const LinearOperator& op, const Vector& b, double shift, long steps,
                       const IterativeFilterOptions& opts) {
  const ShiftedNormalSolver solver(op, shift, opts);
  Vector z = Vector::Zero(static_cast<Eigen::Index>(op.dim_in));
  for (long l = 0; l < steps; ++l) z += solver.solve(op.apply_adjoint(b - op.apply(z)));
  return z;
}

Vector exponential_euler_midpoint(const LinearOperator& op, double alpha, const Vector& b,
                                  const IterativeFilterOptions& opts, long& steps_out) {
  const NormEstimate norm = estimate_operator_norm(op.apply, op.apply_adjoint, op.dim_in);
  // 1% headroom covers the power-iteration underestimate.
  const double lambda_max = std::max(1.01 * norm.value * norm.value, 1e-300);
  const double horizon = 1.0 / alpha;
  const double steps_real = std::ceil(horizon * lambda_max / opts.ode_step_factor);
  if (steps_real > static_cast<double>(opts.max_inner_steps))
    throw FilterBudgetError(steps_real, opts.max_inner_steps);
  const long steps = std::max(1L, static_cast<long>(steps_real));
  const double dt = horizon / static_cast<double>(steps);

  const Vector kb = op.apply_adjoint(b);
  auto rhs = [&](const Vector& z) -> Vector { return kb - op.apply_adjoint(op.apply(z)); };
  Vector z = Vector::Zero(static_cast<Eigen::Index>(op.dim_in));
  for (long s = 0; s < steps; ++s) {
    const Vector mid = z + 0.5 * dt * rhs(z);
    z += dt * rhs(mid);
  }
  steps_out = steps;
  return z;
}

}  // namespace

FilterSpec FilterSpec::iterated_tikhonov(int order) {
  FilterSpec spec{FilterFamily::IteratedTikhonov, order};
  spec.validate();
  return spec;
}

std::string FilterSpec::name() const {
  switch (family) {
    case FilterFamily::IteratedTikhonov:
      return order == 1 ? "tikhonov" : "tikhonov" + std::to_string(order);
    case FilterFamily::ExponentialEuler:
      return "expeuler";
    case FilterFamily::Landweber:
      return "landweber";
    case FilterFamily::Lardy:
      return "lardy";
  }
  return "unknown";
}

FilterSpec FilterSpec::from_name(const std::string& name, int tikhonov_order) {
  if (name == "landweber") return landweber();
  if (name == "lardy") return lardy();
  if (name == "expeuler" || name == "exponential-euler") return exponential_euler();
  if (name == "tikhonov" || name == "levenberg-marquardt" || name == "lm")
    return iterated_tikhonov(tikhonov_order);
  if (name.rfind("tikhonov", 0) == 0) {
    const std::string digits = name.substr(8);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit))
      return iterated_tikhonov(std::stoi(digits));
  }
  throw std::invalid_argument("unknown filter '" + name + "'");
}

void FilterSpec::validate() const {
  if (family == FilterFamily::IteratedTikhonov && order < 1)
    throw std::invalid_argument("iterated Tikhonov order must be >= 1");
}

std::vector<FilterSpec> all_filter_families(int tikhonov_order) {
  return {FilterSpec::iterated_tikhonov(tikhonov_order), FilterSpec::exponential_euler(),
          FilterSpec::landweber(), FilterSpec::lardy()};
}

FilterBudgetError::FilterBudgetError(double requested, long cap)
    : std::runtime_error("filter inner loop needs " + std::to_string(requested) +
                         " steps, above the cap of " + std::to_string(cap)) {}

double eval_g(const FilterSpec& spec, double alpha, double lambda) {
  spec.validate();
  check_alpha(spec, alpha);
  return g_value(spec, alpha, check_lambda(lambda));
}

double eval_residual(const FilterSpec& spec, double alpha, double lambda) {
  spec.validate();
  check_alpha(spec, alpha);
  return std::exp(residual_exponent(spec, alpha, check_lambda(lambda)));
}

double log_residual(const FilterSpec& spec, double alpha, double lambda) {
  spec.validate();
  check_alpha(spec, alpha);
  return residual_exponent(spec, alpha, check_lambda(lambda));
}

long inner_step_count(const FilterSpec& spec, double alpha) {
  check_alpha(spec, alpha);
  switch (spec.family) {
    case FilterFamily::IteratedTikhonov:
      return spec.order;
    case FilterFamily::ExponentialEuler:
      return 0;
    case FilterFamily::Landweber:
    case FilterFamily::Lardy: {
      const double k = std::floor(1.0 / alpha);
      return k > static_cast<double>(std::numeric_limits<long>::max() / 2)
                 ? std::numeric_limits<long>::max() / 2
                 : static_cast<long>(k);
    }
  }
  return 0;
}

LinearOperator LinearOperator::from_matrix(DenseMatrix k) {
  LinearOperator op;
  op.dim_in = static_cast<std::size_t>(k.cols());
  op.dim_out = static_cast<std::size_t>(k.rows());
  auto shared = std::make_shared<const DenseMatrix>(std::move(k));
  op.apply = [shared](const Vector& x) -> Vector { return *shared * x; };
  op.apply_adjoint = [shared](const Vector& y) -> Vector { return shared->transpose() * y; };
  op.matrix = *shared;
  return op;
}

FilterApplication apply_filter_iterative(const FilterSpec& spec, double alpha,
                                         const LinearOperator& op, const Vector& b,
                                         const IterativeFilterOptions& opts) {
  spec.validate();
  check_alpha(spec, alpha);
  if (static_cast<std::size_t>(b.size()) != op.dim_out)
    throw std::invalid_argument("filter application: data vector has wrong length");

  FilterApplication out;
  switch (spec.family) {
    case FilterFamily::IteratedTikhonov:
      out.inner_steps = spec.order;
      out.result = implicit_sweeps(op, b, alpha, spec.order, opts);
      return out;
    case FilterFamily::Lardy: {
      const double k = std::floor(1.0 / alpha);
      if (k > static_cast<double>(opts.max_inner_steps))
        throw FilterBudgetError(k, opts.max_inner_steps);
      out.inner_steps = static_cast<long>(k);
      out.result = implicit_sweeps(op, b, 1.0, out.inner_steps, opts);
      return out;
    }
    case FilterFamily::Landweber: {
      const double k = std::floor(1.0 / alpha);
      if (k > static_cast<double>(opts.max_inner_steps))
        throw FilterBudgetError(k, opts.max_inner_steps);
      out.inner_steps = static_cast<long>(k);
      Vector z = Vector::Zero(static_cast<Eigen::Index>(op.dim_in));
      for (long l = 0; l < out.inner_steps; ++l) z += op.apply_adjoint(b - op.apply(z));
      out.result = std::move(z);
      return out;
    }
    case FilterFamily::ExponentialEuler:
      if (op.matrix) {
        out.result = apply_filter_spectral(spec, alpha, *op.matrix, b);
        return out;
      }
      out.result = exponential_euler_midpoint(op, alpha, b, opts, out.inner_steps);
      return out;
  }
  return out;
}

Vector apply_filter_spectral(const FilterSpec& spec, double alpha, const DenseMatrix& k,
                             const Vector& b) {
  spec.validate();
  check_alpha(spec, alpha);
  if (b.size() != k.rows())
    throw std::invalid_argument("spectral filter: data vector has wrong length");
  if (k.cols() == 0) return Vector::Zero(0);

  const DenseMatrix normal = k.transpose() * k;
  const SymmetricEigenDecomposition eig = sym_eigen(normal, 1e-10);
  Vector coeffs = eig.eigenvectors.transpose() * (k.transpose() * b);
  for (Eigen::Index i = 0; i < coeffs.size(); ++i)
    coeffs[i] *= g_value(spec, alpha, std::max(eig.eigenvalues[i], 0.0));
  return eig.eigenvectors * coeffs;
}

std::vector<double> default_lambda_grid(int interior_points) {
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(interior_points) + 2);
  grid.push_back(0.0);
  for (int i = 0; i < interior_points; ++i) {
    const double x = std::cos((2.0 * i + 1.0) * std::numbers::pi / (2.0 * interior_points));
    grid.push_back(0.5 * (1.0 - x));
  }
  grid.push_back(1.0);
  return grid;
}

std::vector<double> default_nu_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

nlohmann::json FilterBoundReport::to_json() const {
  return {{"filter", filter},
          {"schedule", schedule},
          {"max_g1_violation", max_g1_violation},
          {"observed_b2", observed_b2},
          {"max_g3_violation", max_g3_violation},
          {"grid",
           {{"lambda_points", lambda_points},
            {"lambda_min", lambda_min},
            {"lambda_max", lambda_max},
            {"nu", nu_grid}}},
          {"schedule_prefix_length", schedule_prefix_length}};
}

FilterBoundReport verify_a5_bounds(const FilterSpec& spec, const AlphaSchedule& schedule,
                                   long n_max, const std::vector<double>& lambda_grid,
                                   const std::vector<double>& nu_grid) {
  spec.validate();
  if (n_max < 0) throw std::invalid_argument("n_max must be >= 0");
  const std::size_t nl = lambda_grid.size();
  const auto terms = static_cast<std::size_t>(n_max + 1);

  FilterBoundReport report;
  report.filter = spec.name();
  report.schedule = schedule.label();
  report.lambda_points = nl;
  report.nu_grid = nu_grid;
  report.schedule_prefix_length = n_max + 1;
  if (nl > 0) {
    report.lambda_min = *std::min_element(lambda_grid.begin(), lambda_grid.end());
    report.lambda_max = *std::max_element(lambda_grid.begin(), lambda_grid.end());
  }

  std::vector<double> alpha(terms), sums(terms + 1);
  sums[0] = 0.0;  // s_{-1}
  for (std::size_t k = 0; k < terms; ++k) {
    alpha[k] = schedule.alpha_at(static_cast<long>(k));
    sums[k + 1] = schedule.partial_sum(static_cast<long>(k));
  }
  auto s = [&](long n) { return sums[static_cast<std::size_t>(n + 1)]; };

  // Prefix sums of log r_{alpha_k}(lambda_i) with a separate count of exact
  // zeros, so products over k = a..b are exp(log_prefix[b+1] - log_prefix[a])
  // unless a zero factor lies in the range.
  std::vector<std::vector<double>> log_prefix(terms + 1, std::vector<double>(nl, 0.0));
  std::vector<std::vector<int>> zero_prefix(terms + 1, std::vector<int>(nl, 0));
  std::vector<std::vector<double>> g_values(terms, std::vector<double>(nl));
  for (std::size_t k = 0; k < terms; ++k) {
    for (std::size_t i = 0; i < nl; ++i) {
      const double lr = log_residual(spec, alpha[k], lambda_grid[i]);
      const bool zero = std::isinf(lr);
      log_prefix[k + 1][i] = log_prefix[k][i] + (zero ? 0.0 : lr);
      zero_prefix[k + 1][i] = zero_prefix[k][i] + (zero ? 1 : 0);
      g_values[k][i] = eval_g(spec, alpha[k], lambda_grid[i]);
    }
  }
  auto product = [&](std::size_t from, std::size_t to_inclusive, std::size_t i) {
    if (from > to_inclusive) return 1.0;
    if (zero_prefix[to_inclusive + 1][i] - zero_prefix[from][i] > 0) return 0.0;
    return std::exp(log_prefix[to_inclusive + 1][i] - log_prefix[from][i]);
  };

  for (long n = 0; n <= n_max; ++n) {
    for (long j = 0; j <= n; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const auto nu_ = static_cast<std::size_t>(n);
      const double span = s(n) - s(j - 1);
      const double span_after = s(n) - s(j);
      for (double nu : nu_grid) {
        const double g1_bound = std::pow(span, -nu);
        const double g3_bound =
            2.0 * std::pow(alpha[ju], nu - 1.0) * std::pow(1.0 + alpha[ju] * span_after, -nu);
        for (std::size_t i = 0; i < nl; ++i) {
          const double lambda = lambda_grid[i];
          const double lam_nu = nu == 0.0 ? 1.0 : std::pow(lambda, nu);
          const double tail = product(ju + 1, nu_, i);
          const double g1 = lam_nu * product(ju, nu_, i);
          report.max_g1_violation =
              std::max({report.max_g1_violation, g1 - g1_bound, -g1});
          const double b2 = alpha[ju] * std::pow(span, nu) * lam_nu * g_values[ju][i] * tail;
          report.observed_b2 = std::max(report.observed_b2, b2);
          const double g3 = lam_nu / (alpha[ju] + lambda) * tail;
          report.max_g3_violation = std::max(report.max_g3_violation, g3 / g3_bound - 1.0);
        }
      }
    }
  }
  return report;
}

}  // namespace nreg
