#include "nreg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

namespace nreg::experiment {

double NormalSource::uniform_open() {
  // 53 random bits mapped to (0, 1].
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double NormalSource::next() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  const double radius = std::sqrt(-2.0 * std::log(uniform_open()));
  const double angle = 2.0 * std::numbers::pi * uniform_open();
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

bvp::GridFunction gen_noise(const bvp::GridFunction& u, const NoiseModel& model, double weight) {
  if (!(model.target_delta >= 0.0) || !std::isfinite(model.target_delta))
    throw std::invalid_argument("noise level must be finite and >= 0");
  if (model.target_delta == 0.0) return u;
  NormalSource source(model.seed);
  bvp::GridFunction z(u.size());
  double norm = 0.0;
  while (norm == 0.0) {
    for (auto& v : z) v = source.next();
    norm = std::sqrt(weight * z.squaredNorm());
  }
  return u + (model.target_delta / norm) * z;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void ExperimentReport::aggregate() {
  aggregates.clear();
  slopes.clear();
  std::map<std::pair<double, double>, std::vector<const ExperimentRow*>> groups;
  for (const auto& row : rows)
    if (row.ok()) groups[{row.tau, row.delta}].push_back(&row);

  std::map<double, std::vector<std::pair<double, double>>> by_tau;
  for (const auto& [key, members] : groups) {
    AggregateRow agg;
    agg.tau = key.first;
    agg.delta = key.second;
    agg.samples = members.size();
    std::vector<double> n, err, ratio;
    for (const auto* r : members) {
      n.push_back(static_cast<double>(r->n_delta));
      err.push_back(r->error);
      ratio.push_back(r->ratio);
    }
    agg.median_n_delta = median(n);
    agg.median_error = median(err);
    agg.median_ratio = median(ratio);
    aggregates.push_back(agg);
    if (agg.delta > 0.0 && agg.median_error > 0.0)
      by_tau[agg.tau].emplace_back(std::log(agg.delta), std::log(agg.median_error));
  }
  std::sort(aggregates.begin(), aggregates.end(), [](const AggregateRow& a, const AggregateRow& b) {
    return a.tau != b.tau ? a.tau < b.tau : a.delta > b.delta;
  });

  for (const auto& [tau, pts] : by_tau) {
    if (pts.size() < 2) continue;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double k = static_cast<double>(pts.size());
    slopes.push_back({tau, (k * sxy - sx * sy) / (k * sxx - sx * sx), pts.size()});
  }
}

const AggregateRow* ExperimentReport::find(double delta, double tau) const {
  for (const auto& a : aggregates)
    if (a.delta == delta && a.tau == tau) return &a;
  return nullptr;
}

const SlopeFit* ExperimentReport::slope_for(double tau) const {
  for (const auto& s : slopes)
    if (s.tau == tau) return &s;
  return nullptr;
}

bool ExperimentReport::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const ExperimentRow& r) { return r.ok(); });
}

namespace {

std::string delta_tag(double v) {
  std::string s = format_double(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

ExperimentRow run_row(const bvp::Example& ex, const bvp::CoefficientProblem& problem,
                      const bvp::GridFunction& y, double tau, double delta, std::uint64_t seed,
                      const ExperimentOptions& opts) {
  ExperimentRow row;
  row.delta = delta;
  row.tau = tau;
  row.filter = opts.filter.name();
  row.schedule = opts.schedule.label();
  row.seed = seed;
  row.initial_error = problem.model_norm(ex.c0 - ex.c_true);

  const auto start = std::chrono::steady_clock::now();
  try {
    const bvp::GridFunction y_delta = gen_noise(y, {seed, delta}, problem.data_weight());
    SolveConfig cfg;
    cfg.filter = opts.filter;
    cfg.schedule = opts.schedule;
    cfg.tau = tau;
    cfg.delta = delta;
    cfg.n_max = opts.n_max;
    cfg.x0 = ex.c0;
    cfg.truth = ex.c_true;
    cfg.path = opts.path;
    cfg.keep_iterates = false;
    IterationTrace trace = solve(problem, y_delta, cfg);
    row.status = to_string(trace.reason);
    row.n_delta = trace.stopping_index();
    row.error = problem.model_norm(trace.final_iterate - ex.c_true);
    row.bracket_holds = discrepancy_bracket_holds(trace, tau, delta);
    if (opts.dump_dir) {
      const std::filesystem::path dir(*opts.dump_dir);
      bvp::write_grid_csv((dir / (ex.name + "_final_delta" + delta_tag(delta) + "_tau" +
                                  delta_tag(tau) + "_seed" + std::to_string(seed) + ".csv"))
                              .string(),
                          trace.final_iterate);
    }
    if (opts.keep_traces) row.trace = std::move(trace);
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
    row.n_delta = -1;
    row.error = std::nan("");
  }
  row.ratio = row.error / std::sqrt(delta);
  row.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace

ExperimentReport run_example(const bvp::Example& example, const std::vector<double>& taus,
                             const std::vector<double>& deltas,
                             const std::vector<std::uint64_t>& seeds,
                             const ExperimentOptions& opts) {
  for (double tau : taus)
    if (!(tau > 1.0)) throw std::invalid_argument("tau must be > 1");
  for (double d : deltas)
    if (!(d >= 0.0)) throw std::invalid_argument("noise levels must be >= 0");

  const bvp::CoefficientProblem problem(example.spec);
  const bvp::GridFunction y = bvp::forward(example.spec, example.c_true);

  if (opts.dump_dir) {
    std::filesystem::create_directories(*opts.dump_dir);
    const std::filesystem::path dir(*opts.dump_dir);
    bvp::write_grid_csv((dir / (example.name + "_c_true.csv")).string(), example.c_true);
    bvp::write_grid_csv((dir / (example.name + "_c0.csv")).string(), example.c0);
  }

  struct Job {
    double tau, delta;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double tau : taus)
    for (double delta : deltas)
      for (auto seed : seeds) jobs.push_back({tau, delta, seed});

  ExperimentReport report;
  report.example = example.name;
  report.rows.resize(jobs.size());

  // Rows land in their own slots, so the thread count never changes output.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++)
      report.rows[i] = run_row(example, problem, y, jobs[i].tau, jobs[i].delta, jobs[i].seed, opts);
  };
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  report.aggregate();
  return report;
}

ExperimentReport run_example1(double tau, const std::vector<double>& deltas,
                              const std::vector<std::uint64_t>& seeds, const FilterSpec& filter,
                              const AlphaSchedule& schedule, ExperimentOptions opts) {
  opts.filter = filter;
  opts.schedule = schedule;
  return run_example(bvp::example1(opts.m), {tau}, deltas, seeds, opts);
}

ExperimentReport run_example2(double tau, const std::vector<double>& deltas,
                              const std::vector<std::uint64_t>& seeds, ExperimentOptions opts) {
  return run_example(bvp::example2(opts.m), {tau}, deltas, seeds, opts);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("malformed number '" + s + "'");
  return v;
}

nlohmann::json number_json(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_double(v));
}

double number_from_json(const nlohmann::json& j) {
  return j.is_string() ? parse_double(j.get<std::string>()) : j.get<double>();
}

}  // namespace

void write_report_csv(std::ostream& os, const ExperimentReport& report) {
  os << kReportCsvHeader << '\n';
  for (const auto& r : report.rows) {
    os << format_double(r.delta) << ',' << format_double(r.tau) << ',' << r.filter << ','
       << r.schedule << ',' << r.seed << ',' << r.n_delta << ',' << format_double(r.error) << ','
       << format_double(r.ratio) << ',' << format_double(r.runtime_ms) << '\n';
  }
}

nlohmann::json report_to_json(const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"delta", number_json(r.delta)},
                    {"tau", number_json(r.tau)},
                    {"filter", r.filter},
                    {"schedule", r.schedule},
                    {"seed", r.seed},
                    {"n_delta", r.n_delta},
                    {"error", number_json(r.error)},
                    {"ratio", number_json(r.ratio)},
                    {"runtime_ms", number_json(r.runtime_ms)},
                    {"status", r.status},
                    {"bracket_holds", r.bracket_holds}});
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    aggregates.push_back({{"delta", number_json(a.delta)},
                          {"tau", number_json(a.tau)},
                          {"samples", a.samples},
                          {"median_n_delta", number_json(a.median_n_delta)},
                          {"median_error", number_json(a.median_error)},
                          {"median_ratio", number_json(a.median_ratio)}});
  }
  nlohmann::json slopes = nlohmann::json::array();
  for (const auto& s : report.slopes)
    slopes.push_back({{"tau", s.tau}, {"slope", number_json(s.slope)}, {"points", s.points}});
  return {{"example", report.example},
          {"rows", rows},
          {"aggregates", aggregates},
          {"slopes", slopes}};
}

ExperimentReport parse_report_csv(std::istream& is) {
  ExperimentReport report;
  std::string line;
  if (!std::getline(is, line) || line != kReportCsvHeader)
    throw std::invalid_argument("report CSV has an unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 9) throw std::invalid_argument("report CSV row needs 9 fields: " + line);
    ExperimentRow r;
    r.delta = parse_double(fields[0]);
    r.tau = parse_double(fields[1]);
    r.filter = fields[2];
    r.schedule = fields[3];
    r.seed = std::stoull(fields[4]);
    r.n_delta = std::stol(fields[5]);
    r.error = parse_double(fields[6]);
    r.ratio = parse_double(fields[7]);
    r.runtime_ms = parse_double(fields[8]);
    r.status = r.n_delta >= 0 ? "discrepancy" : "error";
    report.rows.push_back(std::move(r));
  }
  return report;
}

ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport report;
  report.example = j.value("example", "");
  for (const auto& jr : j.at("rows")) {
    ExperimentRow r;
    r.delta = number_from_json(jr.at("delta"));
    r.tau = number_from_json(jr.at("tau"));
    r.filter = jr.at("filter").get<std::string>();
    r.schedule = jr.at("schedule").get<std::string>();
    r.seed = jr.at("seed").get<std::uint64_t>();
    r.n_delta = jr.at("n_delta").get<long>();
    r.error = number_from_json(jr.at("error"));
    r.ratio = number_from_json(jr.at("ratio"));
    r.runtime_ms = number_from_json(jr.at("runtime_ms"));
    r.status = jr.at("status").get<std::string>();
    r.bracket_holds = jr.at("bracket_holds").get<bool>();
    report.rows.push_back(std::move(r));
  }
  report.aggregate();
  return report;
}

void emit_report(const ExperimentReport& report, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open report file '" + path + "' for writing");
  if (format == ReportFormat::Csv)
    write_report_csv(out, report);
  else
    out << report_to_json(report).dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed writing report file '" + path + "'");
}

}  // namespace nreg::experiment
