#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nreg/linops.hpp"
#include "nreg/schedules.hpp"

namespace nreg {

enum class FilterFamily { IteratedTikhonov, ExponentialEuler, Landweber, Lardy };

/// Spectral filter g_alpha together with its family parameters.
struct FilterSpec {
  FilterFamily family = FilterFamily::Landweber;
  int order = 1;  ///< Tikhonov order N; ignored by the other families.

  static FilterSpec iterated_tikhonov(int order);
  static FilterSpec exponential_euler() { return {FilterFamily::ExponentialEuler, 1}; }
  static FilterSpec landweber() { return {FilterFamily::Landweber, 1}; }
  static FilterSpec lardy() { return {FilterFamily::Lardy, 1}; }

  /// "tikhonov", "tikhonov2", "expeuler", "landweber" or "lardy".
  std::string name() const;
  /// Accepts the names produced by name(); `tikhonov_order` applies to "tikhonov".
  static FilterSpec from_name(const std::string& name, int tikhonov_order = 1);

  void validate() const;
  bool operator==(const FilterSpec&) const = default;
};

/// All four families, Tikhonov with the given order.
std::vector<FilterSpec> all_filter_families(int tikhonov_order = 1);

class FilterDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class FilterBudgetError : public std::runtime_error {
 public:
  FilterBudgetError(double requested, long cap);
};

class LinearSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// g_alpha(lambda) for lambda in [0,1]; lambda = 0 returns the limit value.
double eval_g(const FilterSpec& spec, double alpha, double lambda);

/// r_alpha(lambda) = 1 - lambda g_alpha(lambda) in closed form.
double eval_residual(const FilterSpec& spec, double alpha, double lambda);

/// log r_alpha(lambda); -infinity where the residual vanishes.
double log_residual(const FilterSpec& spec, double alpha, double lambda);

/// Inner steps one application needs: N for Tikhonov, floor(1/alpha) for
/// Landweber and Lardy, 0 for exponential Euler.
long inner_step_count(const FilterSpec& spec, double alpha);

/// Linear operator K with its adjoint K*. When `matrix` is present it must
/// represent K, and K* must equal its transpose.
struct LinearOperator {
  LinearAction apply;
  LinearAction apply_adjoint;
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::optional<DenseMatrix> matrix;

  static LinearOperator from_matrix(DenseMatrix k);
};

struct IterativeFilterOptions {
  /// Landweber/Lardy inner-loop cap per application.
  long max_inner_steps = 1L << 22;
  /// Matrix-free exponential Euler: midpoint steps satisfy lambda_max dt <= this.
  double ode_step_factor = 0.1;
  /// Matrix-free CG for the Tikhonov/Lardy normal equations.
  double cg_rel_tol = 1e-14;
  int cg_max_iterations = 0;  ///< 0 selects max(200, 10 dim).
};

struct FilterApplication {
  Vector result;
  long inner_steps = 0;
};

/// g_alpha(K*K) K* b by the family's inner recurrence: N Tikhonov solves,
/// floor(1/alpha) Landweber sweeps, floor(1/alpha) Lardy solves. Exponential
/// Euler uses the spectral path when K is materialized and an explicit
/// midpoint integration of z' = K*(b - K z) on [0, 1/alpha] otherwise.
FilterApplication apply_filter_iterative(const FilterSpec& spec, double alpha,
                                         const LinearOperator& op, const Vector& b,
                                         const IterativeFilterOptions& opts = {});

/// Exact application through the eigendecomposition of K^T K.
Vector apply_filter_spectral(const FilterSpec& spec, double alpha, const DenseMatrix& k,
                             const Vector& b);

/// 512 Chebyshev points of the first kind mapped to [0,1], plus 0 and 1.
std::vector<double> default_lambda_grid(int interior_points = 512);
std::vector<double> default_nu_grid();

struct FilterBoundReport {
  std::string filter;
  std::string schedule;
  double max_g1_violation = 0.0;
  double observed_b2 = 0.0;
  /// Largest relative excess lhs/rhs - 1 of the derived (alpha+lambda)^{-1}
  /// product bound; values <= 0 mean the bound holds on the grid.
  double max_g3_violation = 0.0;
  std::size_t lambda_points = 0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  std::vector<double> nu_grid;
  long schedule_prefix_length = 0;

  nlohmann::json to_json() const;
};

/// Samples the filter-product bounds for 0 <= j <= n <= n_max on the grids.
FilterBoundReport verify_a5_bounds(const FilterSpec& spec, const AlphaSchedule& schedule,
                                   long n_max, const std::vector<double>& lambda_grid,
                                   const std::vector<double>& nu_grid);

}  // namespace nreg
