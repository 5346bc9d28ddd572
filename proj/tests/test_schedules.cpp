#include <gtest/gtest.h>

#include <cmath>
#include <thread>
#include <vector>

#include "nreg/schedules.hpp"

namespace nreg {
namespace {

TEST(AlphaAt, Examples) {
  const auto g = AlphaSchedule::geometric(1.0, 0.5);
  EXPECT_DOUBLE_EQ(g.alpha_at(3), 0.125);
  EXPECT_DOUBLE_EQ(g.alpha_at(0), 1.0);
  EXPECT_DOUBLE_EQ(AlphaSchedule::explicit_values({1, 1, 1}).alpha_at(2), 1.0);
}

TEST(AlphaAt, ExplicitOutOfRange) {
  const auto e = AlphaSchedule::explicit_values({1, 1, 1});
  EXPECT_THROW(e.alpha_at(3), ScheduleIndexError);
  EXPECT_THROW(e.alpha_at(-1), ScheduleIndexError);
  EXPECT_THROW(e.partial_sum(3), ScheduleIndexError);
  EXPECT_EQ(e.last_index(), 2);
  EXPECT_EQ(AlphaSchedule::geometric(1.0, 0.5).last_index(), -1);
}

TEST(AlphaAt, InvalidConstruction) {
  EXPECT_THROW(AlphaSchedule::geometric(0.0, 0.5), std::invalid_argument);
  EXPECT_THROW(AlphaSchedule::geometric(1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(AlphaSchedule::explicit_values({}), std::invalid_argument);
  EXPECT_THROW(AlphaSchedule::explicit_values({1.0, -1.0}), std::invalid_argument);
}

TEST(PartialSum, Examples) {
  const auto g = AlphaSchedule::geometric(1.0, 0.5);
  EXPECT_DOUBLE_EQ(g.partial_sum(2), 7.0);
  EXPECT_DOUBLE_EQ(g.partial_sum(-1), 0.0);
  EXPECT_DOUBLE_EQ(AlphaSchedule::explicit_values({2, 4}).partial_sum(1), 0.75);
  EXPECT_DOUBLE_EQ(AlphaSchedule::explicit_values({2, 4}).partial_sum(-1), 0.0);
}

TEST(PartialSum, IncrementMatchesReciprocal) {
  for (const auto& sched : {AlphaSchedule::geometric(1.0, 0.5), AlphaSchedule::geometric(0.3, 0.97),
                            AlphaSchedule::geometric(2.0, 0.99)}) {
    for (long n = 0; n <= 1000; ++n) {
      const double inc = sched.partial_sum(n) - sched.partial_sum(n - 1);
      const double expected = 1.0 / sched.alpha_at(n);
      if (!std::isfinite(expected)) break;
      // s_n is accumulated, so the difference carries the rounding of s_n itself.
      EXPECT_LE(std::abs(inc - expected), 1e-14 * std::max(expected, sched.partial_sum(n)))
          << sched.label() << " n = " << n;
    }
  }
}

TEST(PartialSum, GeometricClosedForm) {
  const double cases[][2] = {{1.0, 0.5}, {0.3, 0.9}, {2.0, 0.75}, {1.0, 0.99}};
  for (const auto& c : cases) {
    const auto sched = AlphaSchedule::geometric(c[0], c[1]);
    for (long n = 0; n <= 200; ++n) {
      const long double r = c[1];
      const long double closed =
          (std::pow(1.0L / r, static_cast<long double>(n + 1)) - 1.0L) / (c[0] * (1.0L / r - 1.0L));
      if (!std::isfinite(static_cast<double>(closed))) break;
      EXPECT_NEAR(sched.partial_sum(n), static_cast<double>(closed), 1e-12 * static_cast<double>(closed))
          << "alpha0 = " << c[0] << " r = " << c[1] << " n = " << n;
    }
  }
}

TEST(PartialSum, ConcurrentReadersSeeConsistentPrefix) {
  const auto sched = AlphaSchedule::geometric(1.0, 0.9);
  std::vector<std::thread> workers;
  std::vector<int> mismatches(4, 0);
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t] {
      const auto copy = sched;  // copies share the cache
      for (long n = (t % 2 == 0) ? 0 : 299; n >= 0 && n < 300; n += (t % 2 == 0) ? 1 : -1) {
        const double expected = (std::pow(1.0 / 0.9, n + 1) - 1.0) / (1.0 / 0.9 - 1.0);
        if (std::abs(copy.partial_sum(n) - expected) > 1e-11 * expected) ++mismatches[t];
      }
    });
  }
  for (auto& w : workers) w.join();
  for (int m : mismatches) EXPECT_EQ(m, 0);
}

TEST(Label, IsCommaFreeAndRoundTrips) {
  const auto g = AlphaSchedule::geometric(1.0, 0.5);
  EXPECT_EQ(g.label(), "geometric:1:0.5");
  EXPECT_EQ(AlphaSchedule::explicit_values({1, 2, 3}).label(), "explicit:3");
  const auto back = AlphaSchedule::from_json(g.to_json());
  EXPECT_EQ(back.label(), g.label());
  const auto e = AlphaSchedule::from_json(nlohmann::json::parse(R"({"kind":"explicit","values":[2,4]})"));
  EXPECT_DOUBLE_EQ(e.partial_sum(1), 0.75);
  EXPECT_THROW(AlphaSchedule::from_json(nlohmann::json::parse(R"({"kind":"cubic"})")),
               std::invalid_argument);
}

TEST(Audit, GeometricHalving) {
  const auto a = audit(AlphaSchedule::geometric(1.0, 0.5), 20);
  // s_{n+1}/s_n = (2^{n+2}-1)/(2^{n+1}-1) is largest at n = 0, where it is 3.
  EXPECT_DOUBLE_EQ(a.observed_c0, 3.0);
  EXPECT_DOUBLE_EQ(a.observed_c1, 1.0);
  EXPECT_TRUE(a.satisfies_60);
  EXPECT_TRUE(a.divergence_proxy_holds);
  EXPECT_TRUE(a.satisfies_geometric_bracket);
  EXPECT_NEAR(a.r_fit, 0.5, 1e-12);
  EXPECT_NEAR(a.d0, 1.0, 1e-10);
  EXPECT_NEAR(a.d1, 1.0, 1e-10);
  EXPECT_FALSE(a.note.empty());
}

TEST(Audit, ConstantSchedule) {
  const long n_max = 20;
  const auto a = audit(AlphaSchedule::explicit_values(std::vector<double>(n_max + 1, 1.0)), n_max);
  EXPECT_DOUBLE_EQ(a.observed_c0, 2.0);
  EXPECT_DOUBLE_EQ(a.observed_c1, 1.0);
  EXPECT_TRUE(a.satisfies_60);
  EXPECT_FALSE(a.satisfies_geometric_bracket);
}

TEST(Audit, HarmonicGrowthFailsDivergenceProxy) {
  const long n_max = 200;
  std::vector<double> values;
  for (long n = 0; n <= n_max; ++n) values.push_back(static_cast<double>(n + 1));
  const auto a = audit(AlphaSchedule::explicit_values(values), n_max);
  // s = H_{201} ~ 5.88 versus 2 H_{100} ~ 10.4.
  EXPECT_FALSE(a.divergence_proxy_holds);
  EXPECT_FALSE(a.satisfies_60);
  EXPECT_NE(a.note.find("proxy"), std::string::npos);
}

TEST(Audit, HarmonicSmallHorizonMatchesHighPrecisionSums) {
  // 21 terms: H_21 = 3.6453587047627295 < 2 H_10 = 5.857936507936508.
  std::vector<double> values;
  for (long n = 0; n <= 20; ++n) values.push_back(static_cast<double>(n + 1));
  const auto sched = AlphaSchedule::explicit_values(values);
  EXPECT_NEAR(sched.partial_sum(20), 3.6453587047627295, 1e-14);
  EXPECT_NEAR(2.0 * sched.partial_sum(9), 5.857936507936508, 1e-14);
  EXPECT_FALSE(audit(sched, 20).satisfies_60);
}

TEST(Audit, AnyGeometricSatisfiesConditions) {
  for (double r : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    for (double alpha0 : {0.01, 1.0, 5.0}) {
      const auto a = audit(AlphaSchedule::geometric(alpha0, r), 40);
      EXPECT_TRUE(a.satisfies_60) << r << " " << alpha0;
      EXPECT_LE(a.observed_c0, 1.0 / r + 1.0 + 1e-12) << r << " " << alpha0;
      EXPECT_GE(a.observed_c0, 1.0);
      EXPECT_DOUBLE_EQ(a.alpha0, alpha0);
    }
  }
}

TEST(Audit, Preconditions) {
  EXPECT_THROW(audit(AlphaSchedule::geometric(1.0, 0.5), 0), std::invalid_argument);
  EXPECT_THROW(audit(AlphaSchedule::explicit_values({1, 1, 1}), 3), ScheduleIndexError);
}

}  // namespace
}  // namespace nreg
