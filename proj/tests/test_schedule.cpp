#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "hscale/schedule.hpp"

using namespace hscale;

namespace {

// Direct scan of gamma_1 on a fixed step; returns the first and last feasible
// grid values (NaN when none).
std::pair<double, double> scan_feasible(const std::vector<int>& s, double lo, double hi, double step) {
  double first = NAN, last = NAN;
  for (double g = lo; g <= hi; g += step) {
    // explicit recursion, independent of gamma_sequence
    double prev = g;
    bool ok = g >= 1.0;
    for (std::size_t k = 1; k < s.size() && ok; ++k) {
      const double d = prev - double(s[k]) / double(s[k - 1]);
      if (d <= 0) {
        ok = false;
        break;
      }
      prev = prev / d;
      ok = prev >= 1.0;
    }
    if (ok) {
      if (std::isnan(first)) first = g;
      last = g;
    }
  }
  return {first, last};
}

}  // namespace

TEST(GammaSequence, Examples) {
  const std::vector<int> s12{1, 2};
  auto seq = gamma_sequence(3.0, s12);
  ASSERT_TRUE(seq.feasible);
  EXPECT_DOUBLE_EQ(seq.gamma[0], 3.0);
  EXPECT_DOUBLE_EQ(seq.gamma[1], 3.0);

  const std::vector<int> lad{1, 2, 11, 51};
  seq = gamma_sequence(2.4, lad);
  ASSERT_TRUE(seq.feasible);
  EXPECT_NEAR(seq.gamma[1], 6.0, 1e-12);
  EXPECT_NEAR(seq.gamma[2], 12.0, 1e-11);
  EXPECT_NEAR(seq.gamma[3], 12.0 / (12.0 - 51.0 / 11.0), 1e-11);
  EXPECT_NEAR(seq.gamma[3], 1.6296, 1e-4);

  const std::vector<int> s1211{1, 2, 11};
  seq = gamma_sequence(3.0, s1211);
  EXPECT_FALSE(seq.feasible);
  EXPECT_EQ(seq.failing_stage, 2);
}

TEST(GammaSequence, RecursionIsExact) {
  const std::vector<int> lad{1, 2, 11, 51};
  const auto seq = gamma_sequence(2.41, lad);
  ASSERT_TRUE(seq.feasible);
  for (std::size_t k = 1; k < lad.size(); ++k) {
    const double expect = seq.gamma[k - 1] / (seq.gamma[k - 1] - double(lad[k]) / lad[k - 1]);
    EXPECT_DOUBLE_EQ(seq.gamma[k], expect);
    EXPECT_GE(seq.gamma[k], 1.0);
  }
}

TEST(GammaSequence, RejectsInvalidLadder) {
  const std::vector<int> bad_start{2, 3};
  const std::vector<int> decreasing{1, 5, 3};
  EXPECT_THROW(gamma_sequence(2.0, bad_start), std::invalid_argument);
  EXPECT_THROW(gamma_sequence(2.0, decreasing), std::invalid_argument);
}

TEST(FeasibleRange, SingleStageIsHalfLine) {
  const std::vector<int> s{1};
  const auto r = feasible_gamma1_range(s);
  EXPECT_FALSE(r.empty);
  EXPECT_EQ(r.lower, 1.0);
  EXPECT_TRUE(r.unbounded());
}

TEST(FeasibleRange, ExperimentalLadderMatchesScanOracle) {
  const std::vector<int> lad{1, 2, 11, 51};
  const auto r = feasible_gamma1_range(lad);
  ASSERT_FALSE(r.empty);
  const auto [first, last] = scan_feasible(lad, 2.0, 3.0, 1e-5);
  EXPECT_NEAR(r.lower, first, 1.1e-5);
  EXPECT_NEAR(r.upper, last, 1.1e-5);
  // frozen from the scan oracle
  EXPECT_NEAR(r.lower, 2.3327, 1e-4);
  EXPECT_NEAR(r.upper, 2.4444, 1e-4);
}

TEST(FeasibleRange, TwoStageLowerEndIsTheRatio) {
  // gamma_2 = g / (g - 100) >= 1 holds for every g > 100, and fails below.
  const std::vector<int> s{1, 100};
  const auto r = feasible_gamma1_range(s);
  ASSERT_FALSE(r.empty);
  EXPECT_NEAR(r.lower, 100.0, 1e-8);
  EXPECT_TRUE(r.unbounded());
  const auto [first, last] = scan_feasible(s, 99.0, 101.0, 1e-5);
  EXPECT_NEAR(first, 100.0, 2e-5);
  EXPECT_FALSE(gamma_sequence(100.0 / 99.0, s).feasible);
}

TEST(FeasibleRange, ClosureProperty) {
  const std::vector<std::vector<int>> ladders{
      {1, 2}, {1, 3}, {1, 2, 3}, {1, 2, 5}, {1, 2, 11}, {1, 2, 11, 51}, {1, 3, 7}, {1, 2, 4, 8}, {1, 2, 51}};
  for (const auto& s : ladders) {
    const auto r = feasible_gamma1_range(s);
    if (r.empty) continue;
    const double hi = r.unbounded() ? r.lower + 50.0 : r.upper;
    for (int i = 1; i < 100; ++i) {
      const double g = r.lower + (hi - r.lower) * i / 100.0;
      EXPECT_TRUE(gamma_sequence(g, s).feasible) << "inside at " << g;
    }
    EXPECT_FALSE(gamma_sequence(r.lower - 1e-3, s).feasible);
    if (!r.unbounded()) {
      EXPECT_FALSE(gamma_sequence(r.upper + 1e-3, s).feasible);
    }
    EXPECT_TRUE(gamma_sequence(r.inner_lower(), s).feasible);
    EXPECT_TRUE(gamma_sequence(r.inner_upper() == INFINITY ? r.lower + 1 : r.inner_upper(), s).feasible);
  }
}

TEST(ConfidenceFactor, Examples) {
  EXPECT_NEAR(confidence_factor(1.0), 1.0, 1e-15);
  EXPECT_NEAR(confidence_factor(2.0), std::exp(0.7357), 1e-15);
  EXPECT_NEAR(confidence_factor(2.0), 2.0869, 1e-4);
  EXPECT_NEAR(confidence_factor(4.0), std::exp(0.7357 * 0.5), 1e-14);
  EXPECT_NEAR(confidence_factor(4.0), 1.4447, 1e-4);
}

TEST(ComputeD, FirstCoefficientIsHalf) {
  for (double g : {2.34, 2.4, 2.44}) EXPECT_DOUBLE_EQ(make_schedule({1, 2, 11, 51}, g).D[0], 0.5);
}

TEST(ComputeD, ExperimentalLadderCapsSecondCoefficient) {
  const Schedule sch = make_schedule({1, 2, 11, 51}, 2.4);
  ASSERT_EQ(sch.D.size(), 3u);
  // independent recomputation of the raw value and the cap
  const double raw2 = 1.0 + 2.4 * (1.0 / 12.0 + 1.0 / 264.0 + 1.0 / 102.0);
  EXPECT_NEAR(raw2, 1.2326, 1e-4);
  ASSERT_GE(2 * kPi * raw2 / 2.4, kPi);
  EXPECT_NEAR(sch.D[1], 1.2, 1e-12);
  // D_3: no middle sum; gamma_2 s_2 = 12
  const double g3 = sch.gamma[2];
  const double raw3 = 1.0 + 12.0 * (1.0 / (2.0 * 11.0 * g3) + 1.0 / 102.0);
  const double expect3 = 2 * kPi * raw3 / 12.0 >= kPi ? 6.0 : raw3;
  EXPECT_NEAR(sch.D[2], expect3, 1e-12);
}

TEST(ComputeD, TwoStageHasOnlyFirst) {
  const Schedule sch = make_schedule({1, 2}, 3.0);
  ASSERT_EQ(sch.D.size(), 1u);
  EXPECT_DOUBLE_EQ(sch.D[0], 0.5);
  EXPECT_TRUE(make_schedule({1}, 2.0).D.empty());
}

TEST(ComputeD, CapHoldsEverywhere) {
  std::mt19937_64 gen(5);
  const std::vector<std::vector<int>> ladders{{1, 2, 11, 51}, {1, 2, 5, 20}, {1, 3, 9, 27}};
  for (const auto& s : ladders) {
    const auto r = feasible_gamma1_range(s);
    ASSERT_FALSE(r.empty);
    const double hi = r.unbounded() ? r.lower + 10 : r.upper;
    std::uniform_real_distribution<double> u(r.inner_lower(), hi - 1e-9);
    for (int t = 0; t < 50; ++t) {
      const Schedule sch = make_schedule(s, u(gen));
      for (int k = 0; k + 1 < sch.stages(); ++k)
        EXPECT_LE(2 * kPi * sch.D[k] / (sch.gamma_prev(k) * sch.s_prev(k)), kPi + 1e-12);
    }
  }
}

TEST(MakeSchedule, RejectsInfeasible) {
  EXPECT_THROW(make_schedule({1, 2, 11}, 3.0), std::invalid_argument);
  EXPECT_THROW(make_schedule({1, 2}, 3.0, 0.0), std::invalid_argument);
}

TEST(ErrorBound, SingleStageClosedForm) {
  const Schedule sch = make_schedule({1}, 2.0);
  for (int n : {2, 10, 40, 1000}) {
    const double b = kDefaultB;
    const double expect = kPi * kPi / (2 * b * n) + 0.75 * kPi * kPi * std::exp(-b * n / 2.0);
    EXPECT_NEAR(error_upper_bound(sch, std::vector<int>{n}), expect, 1e-14 * expect);
    EXPECT_NEAR(error_upper_bound(sch, std::vector<int>{n}, 3.0), 3.0 * expect, 3e-14 * expect);
  }
}

TEST(ErrorBound, TwoStageArithmeticOracle) {
  const Schedule sch = make_schedule({1, 2}, 3.0);
  const double b = 0.7357;
  const double C1 = std::exp(b * std::pow(std::sin(kPi / 3.0), 2));
  const double failure = std::pow(2 * kPi * 0.5 / (1.0 * 1.0), 2) * std::pow(C1, -5.0);
  const double last = kPi * kPi / (2 * b * 10 * 4) + (3 * kPi * kPi / 16.0) * std::exp(-b * 5.0);
  EXPECT_NEAR(error_upper_bound(sch, std::vector<int>{10, 10}), failure + last, 1e-14);
}

TEST(ErrorBound, Monotonicity) {
  const Schedule sch = make_schedule({1, 2, 11, 51}, 2.4);
  std::mt19937_64 gen(7);
  std::uniform_int_distribution<int> h(1, 60);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> n{2 * h(gen), 2 * h(gen), 2 * h(gen), 2 * h(gen)};
    const double base = error_upper_bound(sch, n);
    std::vector<int> doubled = n;
    for (int& x : doubled) x *= 2;
    EXPECT_LE(error_upper_bound(sch, doubled), base);
    for (int k = 0; k < 4; ++k) {
      std::vector<int> more = n;
      more[k] += 2;
      EXPECT_LE(error_upper_bound(sch, more), base);
    }
  }
}

TEST(ErrorBound, RejectsBadCounts) {
  const Schedule sch = make_schedule({1, 2}, 3.0);
  EXPECT_THROW(error_upper_bound(sch, std::vector<int>{3, 4}), std::invalid_argument);
  EXPECT_THROW(error_upper_bound(sch, std::vector<int>{0, 4}), std::invalid_argument);
  EXPECT_THROW(error_upper_bound(sch, std::vector<int>{4}), std::invalid_argument);
}
