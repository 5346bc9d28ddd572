#include "nreg/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nreg {

AlphaSchedule::AlphaSchedule(Kind kind)
    : kind_(std::move(kind)), cache_(std::make_shared<Cache>()) {}

AlphaSchedule AlphaSchedule::geometric(double alpha0, double r) {
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0))
    throw std::invalid_argument("geometric schedule needs alpha0 > 0");
  if (!(r > 0.0 && r < 1.0))
    throw std::invalid_argument("geometric schedule needs 0 < r < 1");
  return AlphaSchedule(GeometricSchedule{alpha0, r});
}

AlphaSchedule AlphaSchedule::explicit_values(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("explicit schedule is empty");
  for (double v : values)
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument("explicit schedule values must be positive and finite");
  return AlphaSchedule(ExplicitSchedule{std::move(values)});
}

long AlphaSchedule::last_index() const {
  if (const auto* e = std::get_if<ExplicitSchedule>(&kind_))
    return static_cast<long>(e->values.size()) - 1;
  return -1;
}

double AlphaSchedule::alpha_at(long n) const {
  if (n < 0) throw ScheduleIndexError("alpha index must be >= 0");
  if (const auto* g = std::get_if<GeometricSchedule>(&kind_))
    return g->alpha0 * std::pow(g->r, static_cast<double>(n));
  const auto& values = std::get<ExplicitSchedule>(kind_).values;
  if (n >= static_cast<long>(values.size()))
    throw ScheduleIndexError("alpha index " + std::to_string(n) +
                             " beyond explicit schedule of length " +
                             std::to_string(values.size()));
  return values[static_cast<std::size_t>(n)];
}

double AlphaSchedule::partial_sum(long n) const {
  if (n < -1) throw ScheduleIndexError("partial sum index must be >= -1");
  if (n == -1) return 0.0;
  static_cast<void>(alpha_at(n));  // range check before touching the cache

  std::lock_guard lock(cache_->mutex);
  auto& sums = cache_->sums;
  while (static_cast<long>(sums.size()) <= n) {
    const long k = static_cast<long>(sums.size());
    const double prev = sums.empty() ? 0.0 : sums.back();
    sums.push_back(prev + 1.0 / alpha_at(k));
  }
  return sums[static_cast<std::size_t>(n)];
}

std::string AlphaSchedule::label() const {
  std::ostringstream os;
  os.precision(17);
  if (const auto* g = std::get_if<GeometricSchedule>(&kind_)) {
    os << "geometric:" << g->alpha0 << ":" << g->r;
  } else {
    os << "explicit:" << std::get<ExplicitSchedule>(kind_).values.size();
  }
  return os.str();
}

nlohmann::json AlphaSchedule::to_json() const {
  if (const auto* g = std::get_if<GeometricSchedule>(&kind_))
    return {{"kind", "geometric"}, {"alpha0", g->alpha0}, {"r", g->r}};
  return {{"kind", "explicit"}, {"values", std::get<ExplicitSchedule>(kind_).values}};
}

AlphaSchedule AlphaSchedule::from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "geometric")
    return geometric(j.at("alpha0").get<double>(), j.at("r").get<double>());
  if (kind == "explicit") return explicit_values(j.at("values").get<std::vector<double>>());
  throw std::invalid_argument("unknown schedule kind '" + kind + "'");
}

nlohmann::json ScheduleAudit::to_json() const {
  return {{"n_max", n_max},
          {"alpha0", alpha0},
          {"satisfies_60", satisfies_60},
          {"observed_c0", observed_c0},
          {"observed_c1", observed_c1},
          {"divergence_proxy_holds", divergence_proxy_holds},
          {"satisfies_geometric_bracket", satisfies_geometric_bracket},
          {"d0", d0},
          {"d1", d1},
          {"r_fit", r_fit},
          {"note", note}};
}

ScheduleAudit audit(const AlphaSchedule& sched, long n_max) {
  if (n_max < 1) throw std::invalid_argument("audit needs n_max >= 1");
  if (sched.last_index() >= 0 && n_max > sched.last_index())
    throw ScheduleIndexError("audit horizon exceeds explicit schedule length");

  ScheduleAudit out;
  out.n_max = n_max;
  out.alpha0 = sched.alpha0();

  for (long n = 0; n <= n_max; ++n) out.observed_c1 = std::max(out.observed_c1, sched.alpha_at(n));
  for (long n = 0; n < n_max; ++n)
    out.observed_c0 = std::max(out.observed_c0, sched.partial_sum(n + 1) / sched.partial_sum(n));

  const long terms = n_max + 1;
  const double full = sched.partial_sum(terms - 1);
  const double half = sched.partial_sum(terms / 2 - 1);
  out.divergence_proxy_holds = full >= 2.0 * half * (1.0 - 1e-12);
  out.satisfies_60 = std::isfinite(out.observed_c0) && out.observed_c0 > 0.0 &&
                     std::isfinite(out.observed_c1) && out.divergence_proxy_holds;
  out.note =
      "s_n -> infinity checked by the finite doubling proxy "
      "s(N terms) >= 2 s(N/2 terms); a finite audit cannot verify the limit";

  // Least-squares fit log(alpha_n) = log(d) + n log(r).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (long n = 0; n <= n_max; ++n) {
    const double x = static_cast<double>(n);
    const double y = std::log(sched.alpha_at(n));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double cnt = static_cast<double>(terms);
  const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  out.r_fit = std::exp(slope);
  out.d0 = std::numeric_limits<double>::infinity();
  out.d1 = 0.0;
  for (long n = 0; n <= n_max; ++n) {
    const double scaled = sched.alpha_at(n) / std::pow(out.r_fit, static_cast<double>(n));
    out.d0 = std::min(out.d0, scaled);
    out.d1 = std::max(out.d1, scaled);
  }
  out.satisfies_geometric_bracket = out.r_fit > 0.0 && out.r_fit < 1.0 - 1e-12 &&
                                    out.d0 > 0.0 && std::isfinite(out.d1);
  return out;
}

}  // namespace nreg
