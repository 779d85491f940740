#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "glassclock/experiments.hpp"

using namespace glassclock;
using nlohmann::json;

namespace {

ExperimentConfig cfg_from(const json& j) { return experiment_from_json(j); }

// Small but complete configs for every experiment.
std::vector<ExperimentConfig> small_suite() {
  const json model = {{"N", 32}};
  const json suite = {
      {"seed", 11},
      {"experiments",
       json::array({
           {{"experiment", "aging"}, {"model", model}, {"backend", "rem"}, {"replicates", 40},
            {"theta", {0.0, 1.0}}},
           {{"experiment", "fixed-time-law"}, {"model", model}, {"backend", "rem"}, {"replicates", 40},
            {"t", {0.0, 0.5, 1.0}}},
           {{"experiment", "sup-distance"}, {"model", model}, {"backend", "rem"}, {"replicates", 20}},
           {{"experiment", "block-exceedance"}, {"model", model}, {"replicates", 2000},
            {"x", {0.5, 1.0}}},
           {{"experiment", "resample-exceedance"}, {"model", model}, {"replicates", 2000},
            {"x", {1.0}}, {"rho", {1.0, 4.0}}},
           {{"experiment", "poisson-blocks"}, {"model", model}, {"replicates", 30},
            {"delta", {1.0, 1e30}}},
           {{"experiment", "sa-constants"}, {"alpha", {0.2, 0.1}}},
           {{"experiment", "comparison-bound"}, {"instances", 4}, {"mc_samples", 2000}},
           {{"experiment", "bd-mixing"}, {"model", {{"N", {10, 12}}}}},
           {{"experiment", "pair-counts"}, {"model", model}, {"replicates", 3}, {"distance", {0, 1, 2}}},
       })}};
  return configs_from_json(suite);
}

std::string run_suite(unsigned threads) {
  std::string out;
  for (const auto& c : small_suite()) out += to_jsonl(run_experiment(c, {threads}));
  return out;
}

}  // namespace

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(cfg_from({{"experiment", "aging"}, {"replicate", 10}}), InvalidParameter);
  EXPECT_THROW(cfg_from({{"experiment", "aging"}, {"model", {{"Nn", 64}}}}), InvalidParameter);
  EXPECT_THROW(cfg_from({{"experiment", "aging"}, {"beta", 1.0}}), InvalidParameter);
  EXPECT_THROW(cfg_from({{"experiment", "ageing"}}), InvalidParameter);
  EXPECT_THROW(cfg_from({{"experiment", "aging"}, {"backend", "gpu"}}), InvalidParameter);
  EXPECT_THROW(configs_from_json({{"seed", 1}, {"extra", 2}, {"experiments", json::array()}}),
               InvalidParameter);
}

TEST(Config, ScalarsAndListsAndSeedPropagation) {
  const auto cs = configs_from_json(
      {{"seed", 5},
       {"experiments", json::array({{{"experiment", "aging"}, {"model", {{"N", {32, 64}}, {"beta", 0.75}}}},
                                    {{"experiment", "bd-mixing"}, {"seed", 9}}})}});
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs[0].seed, 5u);
  EXPECT_EQ(cs[1].seed, 9u);
  EXPECT_EQ(cs[0].N, (std::vector<int>{32, 64}));
  EXPECT_EQ(cs[0].beta, (std::vector<double>{0.75}));
  const auto grid = model_grid(cs[0]);
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_EQ(grid[0].N, 32);
  EXPECT_EQ(grid[1].beta, 0.75);
}

TEST(Config, InvalidCombinationRejectedBeforeWork) {
  const auto c = cfg_from({{"experiment", "aging"}, {"model", {{"N", {32, 64}}, {"omega", {0.81, 0.9}}}}});
  EXPECT_THROW(model_grid(c), InvalidParameter);
  EXPECT_THROW(run_experiment(c), InvalidParameter);
  EXPECT_THROW(validate_config(c), InvalidParameter);
}

TEST(Config, ValidationFollowsWhatEachExperimentUses) {
  // The block condition fails at N=10, but the distance chain does not care.
  EXPECT_NO_THROW(validate_config(cfg_from({{"experiment", "bd-mixing"}, {"model", {{"N", 10}}}})));
  EXPECT_THROW(validate_config(cfg_from({{"experiment", "pair-counts"}, {"model", {{"N", 10}}}})),
               InvalidParameter);
  EXPECT_THROW(validate_config(cfg_from({{"experiment", "sa-constants"}, {"alpha", {0.0}}})), InvalidParameter);
  EXPECT_THROW(validate_config(cfg_from({{"experiment", "comparison-bound"}, {"n_max", 1}})), InvalidParameter);
}

TEST(Config, MaskDensityAboveOneRejectedBeforeWork) {
  // alpha^2 = 64^-0.6 = 0.082, so rho = 100 asks for density 8.2.
  const auto bad = cfg_from({{"experiment", "resample-exceedance"}, {"model", {{"N", 64}}}});
  EXPECT_THROW(validate_config(bad), InvalidParameter);
  EXPECT_NO_THROW(validate_config(
      cfg_from({{"experiment", "resample-exceedance"}, {"model", {{"N", 4096}}}, {"rho", {1.0, 10.0, 100.0}}})));
}

TEST(TrialResult, JsonRoundTrip) {
  TrialResult r;
  r.experiment = "aging";
  r.params = {{"N", 64}, {"theta", 1.0}};
  r.estimate = 0.4;
  r.ci_lo = 0.3;
  r.ci_hi = 0.5;
  r.truncated_count = 2;
  r.replicates = 100;
  r.extra = {{"target", 0.5}};
  EXPECT_EQ(TrialResult::from_json(r.to_json()).to_json(), r.to_json());
}

TEST(Experiments, EveryExperimentProducesOrderedIntervals) {
  for (const auto& c : small_suite()) {
    const auto results = run_experiment(c);
    ASSERT_FALSE(results.empty()) << c.name;
    for (const auto& r : results) {
      EXPECT_EQ(r.experiment, c.name);
      EXPECT_LE(r.ci_lo, r.estimate) << c.name;
      EXPECT_LE(r.estimate, r.ci_hi) << c.name;
      EXPECT_GE(r.replicates, 1u);
    }
  }
}

TEST(Experiments, ReproducibleAcrossRunsAndThreadCounts) {
  const auto one = run_suite(1);
  EXPECT_EQ(one, run_suite(1));
  EXPECT_EQ(one, run_suite(3));
  EXPECT_EQ(one.find("wall_time"), std::string::npos);
}

TEST(Experiments, SeedChangesResults) {
  auto c = small_suite()[0];
  const auto a = to_jsonl(run_experiment(c));
  c.seed = 12;
  EXPECT_NE(a, to_jsonl(run_experiment(c)));
}

TEST(Aging, ZeroThetaAlwaysAges) {
  const auto results = run_experiment(small_suite()[0]);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[0].params["theta"], 0.0);
  EXPECT_EQ(results[0].estimate, 1.0);
  EXPECT_DOUBLE_EQ(results[1].extra["target"].get<double>(), 0.5);
}

TEST(Aging, AllTruncatedIsAnError) {
  // A single step cannot reach log t(N) = 22.6 unless X(0) > 3.5 or so.
  auto c = small_suite()[0];
  c.c = {0.1};
  c.horizon_factor = 1e-12;
  EXPECT_THROW(run_experiment(c), HorizonError);
  c.horizon_factor = 20.0;
  c.T = 1.0;
  c.replicates = 5;
  c.c = {0.3};
  for (const auto& r : run_experiment(c)) EXPECT_EQ(r.truncated_count, 0u);
}

TEST(FixedTimeLaw, TimeZeroIsPointMass) {
  const auto results = run_experiment(small_suite()[1]);
  ASSERT_EQ(results.size(), 3u);
  EXPECT_EQ(results[0].estimate, 0.0);
  EXPECT_EQ(results[0].extra["ks_max_p"], 1.0);
}

TEST(PoissonBlocks, UnreachableDepthGivesNoPoints) {
  const auto results = run_experiment(small_suite()[5]);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_EQ(results[1].estimate, 0.0);
  EXPECT_EQ(results[1].extra["gaps"], 0);
}

TEST(WindowedGaps, MatchesSimulatedPoissonProcess) {
  Rng rng(1);
  const double lambda = 3.0, T = 1.0;
  std::poisson_distribution<int> count(lambda * T);
  std::uniform_real_distribution<double> unif(0.0, T);
  std::vector<double> gaps;
  for (int w = 0; w < 20000; ++w) {
    std::vector<double> pts(static_cast<std::size_t>(count(rng)));
    for (auto& t : pts) t = unif(rng);
    std::sort(pts.begin(), pts.end());
    for (std::size_t k = 1; k < pts.size(); ++k) gaps.push_back(pts[k] - pts[k - 1]);
  }
  const auto windowed = ks_statistic(gaps, [&](double g) { return windowed_gap_cdf(lambda, T, g); });
  EXPECT_GT(windowed.p_value, 1e-3);
  // Ignoring the window biases gaps short; the naive exponential law is rejected.
  const auto naive = ks_statistic(gaps, [&](double g) { return -std::expm1(-lambda * g); });
  EXPECT_LT(naive.p_value, 1e-6);
  EXPECT_EQ(windowed_gap_cdf(lambda, T, 0.0), 0.0);
  EXPECT_EQ(windowed_gap_cdf(lambda, T, T), 1.0);
}

TEST(Streams, FixedWalkSharedAcrossReplicates) {
  ModelParams m;
  m.N = 32;
  const auto s = model_setup(m, "rem", 0);
  const ReplicateStreams streams(3, "aging", model_hash(m));
  auto a = make_rht_run(s, streams, 1, true);
  auto b = make_rht_run(s, streams, 2, true);
  auto c = make_rht_run(s, streams, 2, false);
  a.extend(300);
  b.extend(300);
  c.extend(300);
  EXPECT_EQ(a.trajectory(), b.trajectory());
  EXPECT_NE(a.record().energies, b.record().energies);
  EXPECT_NE(b.trajectory(), c.trajectory());
  EXPECT_EQ(b.record().holds, c.record().holds);
}

TEST(ModelSetup, BackendSelectionAndTimeScale) {
  ModelParams m;
  const auto rem = model_setup(m, "rem", 0);
  const auto exact = model_setup(m, "auto", 0);
  EXPECT_EQ(exact.backend, Backend::exact);
  EXPECT_EQ(exact.window, 4u * static_cast<std::size_t>(exact.scales.nu));
  EXPECT_DOUBLE_EQ(rem.time.r, exact.time.r * exact.scales.alpha * exact.scales.alpha);
  EXPECT_EQ(model_setup(m, "conditional", 7).window, 7u);
}

TEST(ComparisonBoundExperiment, BoundHoldsOnRandomInstances) {
  auto c = cfg_from({{"experiment", "comparison-bound"}, {"instances", 20}, {"mc_samples", 100000},
                     {"seed", 4}});
  for (const auto& r : run_experiment(c)) {
    EXPECT_TRUE(r.extra["holds"].get<bool>()) << r.params.dump();
    EXPECT_EQ(r.extra["bound_equal_inputs"], 0.0);
    EXPECT_LE(r.params["n"].get<int>(), 4);
  }
}

TEST(ComparisonBoundExperiment, RandomCorrelationIsValid) {
  Rng rng(2);
  for (int n = 2; n <= 6; ++n) {
    const auto c = random_correlation(n, rng);
    const auto L = cholesky(c);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double v = 0.0;
        for (int k = 0; k < n; ++k) v += L[i][k] * L[j][k];
        EXPECT_NEAR(v, c[i][j], 1e-12);
      }
  }
}

TEST(BdMixingExperiment, DeviationBelowThreshold) {
  for (const auto& r : run_experiment(small_suite()[8])) {
    EXPECT_LT(r.estimate, 1e-6);
    EXPECT_LT(r.extra["mass_error"].get<double>(), 1e-12);
  }
}

TEST(Output, CsvHasHeaderAndOneRowPerResult) {
  const auto results = run_experiment(small_suite()[3]);
  const auto csv = to_csv(results);
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_NE(header.find("N,"), std::string::npos);
  EXPECT_NE(header.find("estimate,ci_lo,ci_hi,truncated_count,replicates"), std::string::npos);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), results.size() + 1);
  EXPECT_EQ(to_csv({}), "");
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}
