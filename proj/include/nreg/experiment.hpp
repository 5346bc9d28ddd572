#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nreg/bvp.hpp"
#include "nreg/filters.hpp"
#include "nreg/newton.hpp"
#include "nreg/schedules.hpp"

namespace nreg::experiment {

/// Standard normal variates from mt19937_64 through the Box-Muller
/// transform, so a seed yields the same sequence on every platform.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}
  double next();

 private:
  double uniform_open();  ///< uniform on (0, 1]

  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct NoiseModel {
  std::uint64_t seed = 0;
  double target_delta = 0.0;
};

/// u + delta z / ||z||, z i.i.d. standard normal, norm weighted by `weight`.
bvp::GridFunction gen_noise(const bvp::GridFunction& u, const NoiseModel& model, double weight);

struct ExperimentRow {
  double delta = 0.0;
  double tau = 0.0;
  std::string filter;
  std::string schedule;
  std::uint64_t seed = 0;
  long n_delta = -1;
  double error = 0.0;
  double ratio = 0.0;  ///< error / sqrt(delta)
  double runtime_ms = 0.0;
  /// Termination reason of the solve, or the exception text if it threw.
  std::string status = "discrepancy";
  /// Discrepancy bracket (final residual <= tau delta < earlier residuals).
  bool bracket_holds = false;
  double initial_error = 0.0;
  std::optional<IterationTrace> trace;  ///< not serialized

  bool ok() const { return status == "discrepancy" || status == "residual-floor" || status == "budget"; }
};

struct AggregateRow {
  double delta = 0.0;
  double tau = 0.0;
  std::size_t samples = 0;
  double median_n_delta = 0.0;
  double median_error = 0.0;
  double median_ratio = 0.0;
};

struct SlopeFit {
  double tau = 0.0;
  double slope = 0.0;
  std::size_t points = 0;
};

struct ExperimentReport {
  std::string example;
  std::vector<ExperimentRow> rows;
  std::vector<AggregateRow> aggregates;
  std::vector<SlopeFit> slopes;

  /// Recomputes medians per (delta, tau) over successful rows and the
  /// least-squares slope of log(median error) against log(delta), delta > 0.
  void aggregate();
  const AggregateRow* find(double delta, double tau) const;
  const SlopeFit* slope_for(double tau) const;
  bool all_ok() const;
};

double median(std::vector<double> values);

struct ExperimentOptions {
  FilterSpec filter = FilterSpec::landweber();
  AlphaSchedule schedule = AlphaSchedule::geometric(1.0, 0.5);
  int m = 100;
  long n_max = 60;
  FilterPath path = FilterPath::Auto;
  bool keep_traces = true;
  unsigned threads = 0;  ///< 0 selects the hardware concurrency
  /// Directory for node/value CSV dumps of c_true, c0 and each final iterate.
  std::optional<std::string> dump_dir;
};

/// Runs every (tau, delta, seed) combination on `example`: synthesizes
/// y = F(c_true), perturbs it to noise level delta and solves from c0.
ExperimentReport run_example(const bvp::Example& example, const std::vector<double>& taus,
                             const std::vector<double>& deltas,
                             const std::vector<std::uint64_t>& seeds,
                             const ExperimentOptions& opts);

ExperimentReport run_example1(double tau, const std::vector<double>& deltas,
                              const std::vector<std::uint64_t>& seeds, const FilterSpec& filter,
                              const AlphaSchedule& schedule, ExperimentOptions opts = {});

ExperimentReport run_example2(double tau, const std::vector<double>& deltas,
                              const std::vector<std::uint64_t>& seeds, ExperimentOptions opts = {});

enum class ReportFormat { Csv, Json };

inline constexpr const char* kReportCsvHeader =
    "delta,tau,filter,schedule,seed,n_delta,error,ratio,runtime_ms";

void write_report_csv(std::ostream& os, const ExperimentReport& report);
nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport parse_report_csv(std::istream& is);
ExperimentReport report_from_json(const nlohmann::json& j);

/// Writes the report to `path`; I/O failures throw std::runtime_error naming the path.
void emit_report(const ExperimentReport& report, ReportFormat format, const std::string& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace nreg::experiment
