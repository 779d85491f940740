#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "glassclock/stats.hpp"

using namespace glassclock;

namespace {
double uniform_cdf(double x) { return std::clamp(x, 0.0, 1.0); }
}  // namespace

TEST(Wilson, ZeroSuccessesHasZeroLowerBound) {
  const auto ci = wilson_interval(0, 100);
  EXPECT_EQ(ci.lo, 0.0);
  EXPECT_GT(ci.hi, 0.0);
  EXPECT_LT(ci.hi, 0.05);
  EXPECT_EQ(wilson_interval(100, 100).hi, 1.0);
}

TEST(Wilson, KnownValue) {
  // 50 of 100: centre 0.5, half-width z sqrt(0.25/100 + z^2/40000) / (1 + z^2/100)
  const auto ci = wilson_interval(50, 100);
  EXPECT_NEAR(ci.lo, 0.4038, 1e-4);
  EXPECT_NEAR(ci.hi, 0.5962, 1e-4);
  EXPECT_THROW(wilson_interval(1, 0), InvalidParameter);
  EXPECT_THROW(wilson_interval(3, 2), InvalidParameter);
}

TEST(Wilson, CoverageNearNominal) {
  std::mt19937_64 rng(1);
  std::binomial_distribution<int> binom(200, 0.1);
  int covered = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    const auto ci = wilson_interval(static_cast<std::size_t>(binom(rng)), 200);
    covered += ci.lo <= 0.1 && 0.1 <= ci.hi;
  }
  EXPECT_NEAR(covered / static_cast<double>(trials), 0.95, 0.01);
}

TEST(RunningStats, MatchesTwoPassAndMerges) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(3.0, 2.0);
  std::vector<double> xs(1000);
  for (auto& x : xs) x = g(rng);
  RunningStats all, a, b;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    all.push(xs[i]);
    (i < 300 ? a : b).push(xs[i]);
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= xs.size() - 1;
  EXPECT_NEAR(all.mean(), mean, 1e-12);
  EXPECT_NEAR(all.variance(), var, 1e-10);
  a.merge(b);
  EXPECT_EQ(a.count(), 1000u);
  EXPECT_NEAR(a.mean(), mean, 1e-12);
  EXPECT_NEAR(a.variance(), var, 1e-10);
}

TEST(Kolmogorov, BothSeriesAgreeAtSwitchPoint) {
  // Evaluate the large-lambda series directly just below the switch.
  const double l = 1.0 - 1e-9;
  double sum = 0.0;
  for (int k = 1; k < 100; ++k) sum += (k % 2 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * l * l);
  EXPECT_NEAR(kolmogorov_sf(l), 2.0 * sum, 1e-12);
  EXPECT_EQ(kolmogorov_sf(0.0), 1.0);
  EXPECT_NEAR(kolmogorov_sf(1.3580986), 0.05, 1e-6);
  EXPECT_NEAR(kolmogorov_sf(0.2), 1.0, 1e-12);
}

TEST(KS, SingleSampleAtMedian) {
  const auto r = ks_statistic({0.5}, uniform_cdf);
  EXPECT_DOUBLE_EQ(r.statistic, 0.5);
}

TEST(KS, UniformSelfTestHasNominalLevel) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  int rejected = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> xs(500);
    for (auto& x : xs) x = u(rng);
    rejected += ks_statistic(xs, uniform_cdf).p_value < 0.05;
  }
  EXPECT_LE(rejected, 10);
}

TEST(KS, DetectsWrongDistribution) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> xs(2000);
  for (auto& x : xs) x = std::pow(u(rng), 1.2);
  EXPECT_LT(ks_statistic(xs, uniform_cdf).p_value, 1e-3);
}

TEST(KS, TwoSampleSelfTestAndTies) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> a(3000), b(2000);
  for (auto& x : a) x = g(rng);
  for (auto& x : b) x = g(rng);
  EXPECT_GT(ks_two_sample(a, b).p_value, 1e-3);
  EXPECT_EQ(ks_two_sample({1.0, 1.0, 2.0}, {1.0, 1.0, 2.0}).statistic, 0.0);
  for (auto& x : b) x += 0.3;
  EXPECT_LT(ks_two_sample(a, b).p_value, 1e-6);
}

TEST(EmpiricalCdf, RightContinuousSteps) {
  const auto F = empirical_cdf({3.0, 1.0, 2.0, 2.0});
  EXPECT_EQ(F(0.5), 0.0);
  EXPECT_EQ(F(1.0), 0.25);
  EXPECT_EQ(F(2.0), 0.75);
  EXPECT_EQ(F(10.0), 1.0);
}

TEST(ChiSquare, KnownValues) {
  EXPECT_NEAR(chi_square_sf(3.841458820694124, 1.0), 0.05, 1e-12);
  EXPECT_NEAR(chi_square_sf(2.0, 2.0), std::exp(-1.0), 1e-14);
  EXPECT_EQ(chi_square_sf(0.0, 3.0), 1.0);
}
