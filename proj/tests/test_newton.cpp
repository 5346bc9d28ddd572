#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nreg/bvp.hpp"
#include "nreg/experiment.hpp"
#include "nreg/newton.hpp"
#include "oracles.hpp"

namespace nreg {
namespace {

// Telescoped linear recursion: with exact data and x0 = 0 the n-th iterate is
// x_n = (I - prod_{j<n} r_{alpha_j}(T^T T)) x_true, evaluated on the SVD of T.
Vector linear_closed_form(const FilterSpec& spec, const AlphaSchedule& sched, const DenseMatrix& t,
                          const Vector& x_true, long n) {
  Eigen::JacobiSVD<DenseMatrix> svd(t, Eigen::ComputeFullV);
  const DenseMatrix& v = svd.matrixV();
  Vector sigma = Vector::Zero(t.cols());
  sigma.head(svd.singularValues().size()) = svd.singularValues();
  const Vector coeffs = v.transpose() * x_true;
  Vector out(coeffs.size());
  for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
    long double prod = 1.0L;
    for (long j = 0; j < n; ++j)
      prod *= oracle::residual(spec, sched.alpha_at(j), static_cast<long double>(sigma[i]) * sigma[i]);
    out[i] = static_cast<double>((1.0L - prod) * coeffs[i]);
  }
  return v * out;
}

SolveConfig noise_free_config(const FilterSpec& spec, long n_max, const Vector& x0) {
  SolveConfig cfg;
  cfg.filter = spec;
  cfg.schedule = AlphaSchedule::geometric(1.0, 0.5);
  cfg.delta = 0.0;
  cfg.n_max = n_max;
  cfg.x0 = x0;
  return cfg;
}

class DomainLimitedProblem : public LinearProblem {
 public:
  using LinearProblem::LinearProblem;
  bool in_domain(const Vector& x) const override { return x.allFinite() && x[0] < 0.5; }
};

class MatrixFreeProblem : public InverseProblem {
 public:
  explicit MatrixFreeProblem(DenseMatrix t) : t_(std::move(t)) {}
  std::size_t model_dim() const override { return static_cast<std::size_t>(t_.cols()); }
  std::size_t data_dim() const override { return static_cast<std::size_t>(t_.rows()); }
  bool in_domain(const Vector& x) const override { return x.allFinite(); }
  Vector evaluate(const Vector& x) const override { return t_ * x; }
  Vector derivative_apply(const Vector&, const Vector& h) const override { return t_ * h; }
  Vector adjoint_apply(const Vector&, const Vector& w) const override { return t_.transpose() * w; }

 private:
  DenseMatrix t_;
};

TEST(Solve, StartAtTruthStopsImmediately) {
  const auto ex = bvp::example1(100);
  const bvp::CoefficientProblem p(ex.spec);
  const Vector y = p.evaluate(ex.c_true);
  auto cfg = noise_free_config(FilterSpec::landweber(), 60, ex.c_true);
  const auto trace = solve(p, y, cfg);
  EXPECT_EQ(trace.reason, TerminationReason::ResidualFloor);
  EXPECT_EQ(trace.stopping_index(), 0);
  EXPECT_EQ(trace.final_iterate, ex.c_true);
  EXPECT_EQ(trace.last().residual_norm, 0.0);
}

TEST(Solve, DiagonalLinearClosedForm) {
  DenseMatrix t = DenseMatrix::Zero(3, 3);
  t.diagonal() << 0.9, 0.5, 0.1;
  const LinearProblem p(t);
  const Vector x_true = Vector::Ones(3);
  for (const auto& spec : all_filter_families()) {
    auto cfg = noise_free_config(spec, 10, Vector::Zero(3));
    const auto trace = solve(p, t * x_true, cfg);
    ASSERT_EQ(trace.steps.size(), 11u) << spec.name();
    for (const auto& rec : trace.steps) {
      const Vector expected = linear_closed_form(spec, cfg.schedule, t, x_true, rec.n);
      EXPECT_LE((rec.iterate - expected).cwiseAbs().maxCoeff(), 1e-10) << spec.name() << " n = " << rec.n;
    }
  }
}

TEST(Solve, RandomLinearClosedFormBothPaths) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 3; ++trial) {
    const int dim = 8 + 6 * trial;
    const DenseMatrix t = oracle::random_operator(dim, dim, 0.9, gen);
    const Vector x_true = oracle::random_vector(dim, gen);
    const LinearProblem p(t);
    for (const auto& spec : all_filter_families(2)) {
      for (FilterPath path : {FilterPath::Iterative, FilterPath::Spectral}) {
        auto cfg = noise_free_config(spec, 10, Vector::Zero(dim));
        cfg.path = path;
        const auto trace = solve(p, t * x_true, cfg);
        for (const auto& rec : trace.steps) {
          const Vector expected = linear_closed_form(spec, cfg.schedule, t, x_true, rec.n);
          EXPECT_LE((rec.iterate - expected).norm(), 1e-10 * std::max(1.0, expected.norm()))
              << spec.name() << " n = " << rec.n;
        }
      }
    }
  }
}

TEST(Solve, FilterPathIndependenceOnBvp) {
  const auto ex = bvp::example1(30);
  const bvp::CoefficientProblem p(ex.spec);
  const Vector y = p.evaluate(ex.c_true);
  for (const auto& spec : all_filter_families()) {
    auto cfg = noise_free_config(spec, 8, ex.c0);
    cfg.path = FilterPath::Iterative;
    const auto a = solve(p, y, cfg);
    cfg.path = FilterPath::Spectral;
    const auto b = solve(p, y, cfg);
    ASSERT_EQ(a.steps.size(), b.steps.size()) << spec.name();
    for (std::size_t i = 0; i < a.steps.size(); ++i)
      EXPECT_LE((a.steps[i].iterate - b.steps[i].iterate).norm(), 1e-8 * b.steps[i].iterate.norm())
          << spec.name() << " n = " << i;
  }
}

TEST(Solve, MatrixFreeProblemUsesIterativePath) {
  std::mt19937_64 gen(32);
  const DenseMatrix t = oracle::random_operator(10, 10, 0.9, gen);
  const Vector x_true = oracle::random_vector(10, gen);
  const MatrixFreeProblem p(t);
  for (const auto& spec : {FilterSpec::landweber(), FilterSpec::iterated_tikhonov(1), FilterSpec::lardy()}) {
    auto cfg = noise_free_config(spec, 6, Vector::Zero(10));
    const auto trace = solve(p, t * x_true, cfg);
    for (const auto& rec : trace.steps) {
      const Vector expected = linear_closed_form(spec, cfg.schedule, t, x_true, rec.n);
      EXPECT_LE((rec.iterate - expected).norm(), 1e-9 * std::max(1.0, expected.norm())) << spec.name();
    }
  }
  auto cfg = noise_free_config(FilterSpec::landweber(), 3, Vector::Zero(10));
  cfg.path = FilterPath::Spectral;
  EXPECT_THROW(solve(p, t * x_true, cfg), std::invalid_argument);
}

TEST(Solve, NoiseFreeResidualNonincreasing) {
  for (const auto& ex : {bvp::example1(100), bvp::example2(100)}) {
    const bvp::CoefficientProblem p(ex.spec);
    const Vector y = p.evaluate(ex.c_true);
    auto cfg = noise_free_config(FilterSpec::landweber(), 15, ex.c0);
    cfg.truth = ex.c_true;
    const auto trace = solve(p, y, cfg);
    ASSERT_EQ(trace.steps.size(), 16u);
    for (std::size_t i = 1; i < trace.steps.size(); ++i)
      EXPECT_LE(trace.steps[i].residual_norm, trace.steps[i - 1].residual_norm * (1.0 + 1e-12))
          << ex.name << " n = " << i;
    EXPECT_LT(*trace.last().error_norm, *trace.steps.front().error_norm);
  }
}

TEST(Solve, DiscrepancyBracketOnNoisyData) {
  const auto ex = bvp::example1(100);
  const bvp::CoefficientProblem p(ex.spec);
  const Vector y = p.evaluate(ex.c_true);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (double delta : {1e-2, 1e-3}) {
      const Vector y_delta = experiment::gen_noise(y, {seed, delta}, p.data_weight());
      SolveConfig cfg;
      cfg.delta = delta;
      cfg.x0 = ex.c0;
      const auto trace = solve(p, y_delta, cfg);
      EXPECT_EQ(trace.reason, TerminationReason::Discrepancy);
      EXPECT_TRUE(discrepancy_bracket_holds(trace, cfg.tau, delta));
      EXPECT_LE(trace.last().residual_norm, cfg.tau * delta);
      for (std::size_t i = 0; i + 1 < trace.steps.size(); ++i)
        EXPECT_GT(trace.steps[i].residual_norm, cfg.tau * delta);
      EXPECT_EQ(trace.last().iterate, trace.final_iterate);
    }
  }
}

TEST(Solve, RecordsScheduleAndInnerSteps) {
  DenseMatrix t = DenseMatrix::Zero(2, 2);
  t.diagonal() << 0.8, 0.3;
  const LinearProblem p(t);
  auto cfg = noise_free_config(FilterSpec::landweber(), 4, Vector::Zero(2));
  cfg.path = FilterPath::Iterative;
  const auto trace = solve(p, t * Vector::Ones(2), cfg);
  ASSERT_EQ(trace.steps.size(), 5u);
  for (const auto& rec : trace.steps) {
    EXPECT_DOUBLE_EQ(rec.alpha, std::pow(0.5, rec.n));
    EXPECT_DOUBLE_EQ(rec.partial_sum, std::pow(2.0, rec.n + 1) - 1.0);
  }
  EXPECT_EQ(trace.steps[0].inner_steps, 1);
  EXPECT_EQ(trace.steps[3].inner_steps, 8);
  EXPECT_EQ(trace.steps[4].inner_steps, 0);
  EXPECT_EQ(trace.reason, TerminationReason::Budget);
}

TEST(Solve, DomainExitIsReported) {
  const DomainLimitedProblem p(DenseMatrix::Identity(1, 1));
  auto cfg = noise_free_config(FilterSpec::landweber(), 5, Vector::Zero(1));
  const auto trace = solve(p, Vector::Ones(1), cfg);
  EXPECT_EQ(trace.reason, TerminationReason::DomainExit);
  EXPECT_EQ(trace.failure_step, 1);
  EXPECT_TRUE(trace.failed());
  EXPECT_EQ(trace.steps.size(), 1u);
  EXPECT_EQ(trace.final_iterate, Vector::Zero(1));
}

TEST(Solve, ScalingCheck) {
  const LinearProblem p(2.0 * DenseMatrix::Identity(3, 3));
  auto cfg = noise_free_config(FilterSpec::landweber(), 1, Vector::Zero(3));
  cfg.scaling_strict = true;
  const auto strict = solve(p, Vector::Ones(3), cfg);
  EXPECT_EQ(strict.reason, TerminationReason::ScalingViolation);
  EXPECT_EQ(strict.failure_step, 0);
  EXPECT_NEAR(*strict.scaling_norm_estimate, 2.0, 0.02);
  EXPECT_DOUBLE_EQ(strict.scaling_bound, 1.0);

  cfg.scaling_strict = false;
  const auto lenient = solve(p, Vector::Ones(3), cfg);
  EXPECT_EQ(lenient.reason, TerminationReason::Budget);
  EXPECT_EQ(lenient.warnings.size(), 1u);

  // sqrt(alpha0) tightens the bound below one.
  const LinearProblem q(0.8 * DenseMatrix::Identity(2, 2));
  auto tight = noise_free_config(FilterSpec::iterated_tikhonov(1), 1, Vector::Zero(2));
  tight.schedule = AlphaSchedule::geometric(0.25, 0.5);
  tight.scaling_strict = true;
  EXPECT_EQ(solve(q, Vector::Ones(2), tight).reason, TerminationReason::ScalingViolation);
}

TEST(Solve, InnerBudgetExceeded) {
  const LinearProblem p(0.5 * DenseMatrix::Identity(2, 2));
  auto cfg = noise_free_config(FilterSpec::landweber(), 10, Vector::Zero(2));
  cfg.path = FilterPath::Iterative;
  cfg.inner.max_inner_steps = 3;
  const auto trace = solve(p, Vector::Ones(2), cfg);
  EXPECT_EQ(trace.reason, TerminationReason::FilterBudgetExceeded);
  EXPECT_EQ(trace.failure_step, 2);
  EXPECT_FALSE(trace.message.empty());
}

TEST(Solve, InvalidConfiguration) {
  const LinearProblem p(DenseMatrix::Identity(2, 2));
  auto cfg = noise_free_config(FilterSpec::landweber(), 5, Vector::Zero(2));
  auto bad = cfg;
  bad.tau = 1.0;
  EXPECT_THROW(solve(p, Vector::Ones(2), bad), std::invalid_argument);
  bad = cfg;
  bad.delta = -1.0;
  EXPECT_THROW(solve(p, Vector::Ones(2), bad), std::invalid_argument);
  bad = cfg;
  bad.n_max = 0;
  EXPECT_THROW(solve(p, Vector::Ones(2), bad), std::invalid_argument);
  bad = cfg;
  bad.schedule = AlphaSchedule::explicit_values({1, 1, 1});
  EXPECT_THROW(solve(p, Vector::Ones(2), bad), std::invalid_argument);
  bad = cfg;
  bad.x0 = Vector::Zero(3);
  EXPECT_THROW(solve(p, Vector::Ones(2), bad), std::invalid_argument);
  EXPECT_THROW(solve(p, Vector::Ones(5), cfg), std::invalid_argument);
}

TEST(Solve, ExplicitScheduleOfExactLength) {
  const LinearProblem p(0.5 * DenseMatrix::Identity(2, 2));
  auto cfg = noise_free_config(FilterSpec::iterated_tikhonov(1), 3, Vector::Zero(2));
  cfg.schedule = AlphaSchedule::explicit_values({1.0, 0.5, 0.25, 0.125});
  const auto trace = solve(p, Vector::Ones(2), cfg);
  EXPECT_EQ(trace.reason, TerminationReason::Budget);
  EXPECT_EQ(trace.stopping_index(), 3);
}

TEST(DiscrepancyBracket, RejectsEarlyCrossing) {
  IterationTrace trace;
  trace.reason = TerminationReason::Discrepancy;
  for (double r : {1.0, 0.05, 0.2, 0.01}) {
    IterationRecord rec;
    rec.residual_norm = r;
    trace.steps.push_back(rec);
  }
  EXPECT_FALSE(discrepancy_bracket_holds(trace, 1.1, 0.1));
  trace.steps[1].residual_norm = 0.5;
  EXPECT_TRUE(discrepancy_bracket_holds(trace, 1.1, 0.1));
  trace.reason = TerminationReason::Budget;
  EXPECT_FALSE(discrepancy_bracket_holds(trace, 1.1, 0.1));
}

TEST(AdjointConsistency, RegisteredProblems) {
  std::mt19937_64 gen(33);
  const DenseMatrix t = oracle::random_matrix(7, 5, gen);
  const LinearProblem lin(t);
  const bvp::CoefficientProblem bvp_problem(bvp::example2(40).spec);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = oracle::random_vector(5, gen), h = oracle::random_vector(5, gen),
                 w = oracle::random_vector(7, gen);
    EXPECT_LE(std::abs(lin.data_dot(lin.derivative_apply(x, h), w) - lin.model_dot(h, lin.adjoint_apply(x, w))),
              1e-10 * lin.model_norm(h) * lin.data_norm(w));

    Vector c(40);
    for (auto& v : c) v = u(gen);
    const Vector hb = oracle::random_vector(40, gen), wb = oracle::random_vector(40, gen);
    const auto l = bvp_problem.linearize(c, false);
    EXPECT_LE(std::abs(bvp_problem.data_dot(l.derivative(hb), wb) - bvp_problem.model_dot(hb, l.adjoint(wb))),
              1e-10 * bvp_problem.model_norm(hb) * bvp_problem.data_norm(wb));
  }
}

TEST(SourceDiagnostic, TruthAsStart) {
  const auto ex = bvp::example1(50);
  const bvp::CoefficientProblem p(ex.spec);
  const auto d = source_condition_diagnostic(p, ex.c_true, ex.c_true, 0.5);
  EXPECT_EQ(d.omega_norm, 0.0);
  EXPECT_EQ(d.residual_of_fit, 0.0);
}

TEST(SourceDiagnostic, DiagonalCase) {
  DenseMatrix t = DenseMatrix::Zero(3, 3);
  t.diagonal() << 1.0, 0.5, 1e-7;
  const LinearProblem p(t);
  const Vector truth = Vector::Zero(3);
  Vector x0(3);
  x0 << 1.0, 1.0, 0.0;
  auto d = source_condition_diagnostic(p, truth, x0, 0.5);
  // (T^T T)^{1/2} = diag(1, 0.5, 1e-7): omega = (1, 2, 0).
  EXPECT_NEAR(d.omega_norm, std::sqrt(5.0), 1e-12);
  EXPECT_EQ(d.residual_of_fit, 0.0);
  EXPECT_EQ(d.excluded_components, 1u);
  EXPECT_NEAR(d.smallest_eigenvalue, 1e-14, 1e-16);

  x0 << 0.0, 0.0, 1.0;
  d = source_condition_diagnostic(p, truth, x0, 0.5);
  EXPECT_NEAR(d.residual_of_fit, 1.0, 1e-12);
  EXPECT_EQ(d.to_json().at("excluded_components"), 1);
}

TEST(SourceDiagnostic, Preconditions) {
  const MatrixFreeProblem mf(DenseMatrix::Identity(2, 2));
  EXPECT_THROW(source_condition_diagnostic(mf, Vector::Zero(2), Vector::Ones(2), 0.5), MissingJacobianError);
  const LinearProblem p(DenseMatrix::Identity(2, 2));
  EXPECT_THROW(source_condition_diagnostic(p, Vector::Zero(2), Vector::Ones(2), 0.0), std::invalid_argument);
  EXPECT_THROW(source_condition_diagnostic(p, Vector::Zero(2), Vector::Ones(2), 0.75), std::invalid_argument);
}

TEST(TraceWriters, CsvAndJsonl) {
  DenseMatrix t = DenseMatrix::Zero(2, 2);
  t.diagonal() << 0.8, 0.3;
  const LinearProblem p(t);
  auto cfg = noise_free_config(FilterSpec::landweber(), 2, Vector::Zero(2));
  cfg.truth = Vector::Ones(2);
  const auto trace = solve(p, t * Vector::Ones(2), cfg);

  std::ostringstream csv;
  write_trace_csv(csv, trace);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "n,residual_norm,error_norm,inner_steps,alpha,partial_sum");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 3);

  std::ostringstream jsonl;
  write_trace_jsonl(jsonl, trace);
  std::istringstream jl(jsonl.str());
  long n = 0;
  while (std::getline(jl, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("n"), n);
    EXPECT_DOUBLE_EQ(j.at("residual_norm").get<double>(), trace.steps[n].residual_norm);
    EXPECT_EQ(j.at("iterate").size(), 2u);
    ++n;
  }
  EXPECT_EQ(n, 3);
}

TEST(TerminationReason, Names) {
  EXPECT_EQ(to_string(TerminationReason::Discrepancy), "discrepancy");
  EXPECT_EQ(to_string(TerminationReason::ResidualFloor), "residual-floor");
  EXPECT_EQ(to_string(TerminationReason::DomainExit), "domain-exit");
}

}  // namespace
}  // namespace nreg
