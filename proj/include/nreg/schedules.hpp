#pragma once

#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace nreg {

struct GeometricSchedule {
  double alpha0 = 1.0;
  double r = 0.5;
};

struct ExplicitSchedule {
  std::vector<double> values;
};

class ScheduleIndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A-priori regularization parameters alpha_n and their partial sums
/// s_n = sum_{j<=n} 1/alpha_j, with s_{-1} = 0.
///
/// Copies share the partial-sum cache; the cache only grows and is guarded
/// so concurrent readers always see a consistent prefix.
class AlphaSchedule {
 public:
  using Kind = std::variant<GeometricSchedule, ExplicitSchedule>;

  static AlphaSchedule geometric(double alpha0, double r);
  static AlphaSchedule explicit_values(std::vector<double> values);

  const Kind& kind() const { return kind_; }
  bool is_geometric() const { return std::holds_alternative<GeometricSchedule>(kind_); }

  /// Largest valid index, or -1 for an unbounded (geometric) schedule.
  long last_index() const;

  double alpha_at(long n) const;
  double partial_sum(long n) const;
  double alpha0() const { return alpha_at(0); }

  /// Comma-free label such as "geometric:1:0.5" or "explicit:20".
  std::string label() const;

  nlohmann::json to_json() const;
  static AlphaSchedule from_json(const nlohmann::json& j);

 private:
  explicit AlphaSchedule(Kind kind);

  struct Cache {
    std::mutex mutex;
    std::vector<double> sums;
  };

  Kind kind_;
  std::shared_ptr<Cache> cache_;
};

struct ScheduleAudit {
  long n_max = 0;
  double alpha0 = 0.0;
  bool satisfies_60 = false;
  double observed_c0 = 0.0;
  double observed_c1 = 0.0;
  /// Finite proxy for s_n -> infinity; see audit().
  bool divergence_proxy_holds = false;
  bool satisfies_geometric_bracket = false;
  double d0 = 0.0;
  double d1 = 0.0;
  double r_fit = 0.0;
  std::string note;

  nlohmann::json to_json() const;
};

/// Audits the admissibility conditions on alpha_0..alpha_{n_max}:
/// s_{n+1} <= c0 s_n, 0 < alpha_n <= c1, and divergence of s_n.
///
/// Divergence cannot be observed in finitely many terms. It is replaced by
/// the doubling test: the sum of all N = n_max+1 audited terms must be at
/// least twice the sum of the first floor(N/2) terms. Linear growth passes
/// with equality, logarithmic growth fails.
ScheduleAudit audit(const AlphaSchedule& sched, long n_max);

}  // namespace nreg
