#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "glassclock/scales.hpp"

using namespace glassclock;

namespace {

ModelParams small_model() {
  ModelParams m;
  m.N = 16;
  m.p = 2;
  m.beta = 1.0;
  m.c = 0.25;
  m.omega = 0.76;
  return m;
}

}  // namespace

TEST(DeriveScales, AlphaIsPowerOfN) {
  EXPECT_DOUBLE_EQ(derive_scales(small_model()).alpha, 0.5);
}

TEST(DeriveScales, LimitConstants) {
  const auto s = derive_scales(small_model());
  EXPECT_DOUBLE_EQ(s.K, 4.0);
  EXPECT_DOUBLE_EQ(s.K1, 2.0);
  EXPECT_DOUBLE_EQ(s.d_N, 0.5 * std::sqrt(2.0));
}

TEST(DeriveScales, JumpScaleClosedForm) {
  const auto s = derive_scales(small_model());
  const double expected = 2.0 * std::sqrt(32.0 * std::numbers::pi) * std::exp(2.0);
  EXPECT_NEAR(s.r, expected, 1e-10 * expected);
  EXPECT_NEAR(s.r, 148.17, 0.01);
  EXPECT_DOUBLE_EQ(s.log_t, 8.0);
}

TEST(DeriveScales, BlockSizeIsFloored) {
  auto m = small_model();
  EXPECT_EQ(derive_scales(m).nu, 8);  // 16^0.76 = 8.22
  m.N = 64;
  m.c = 0.3;
  m.omega = 0.81;
  EXPECT_EQ(derive_scales(m).nu, static_cast<int>(std::floor(std::pow(64.0, 0.81))));
}

TEST(DeriveScales, PureFunctionBitIdentical) {
  const auto a = derive_scales(small_model());
  const auto b = derive_scales(small_model());
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(DeriveScales, RemTimeScaleUsesFewerJumps) {
  const auto s = derive_scales(small_model());
  const auto rem = rem_time_scale(s);
  EXPECT_DOUBLE_EQ(rem.r, s.r * 0.25);
  EXPECT_DOUBLE_EQ(rem.K, 1.0);
  EXPECT_DOUBLE_EQ(correlated_time_scale(s).K, 4.0);
}

TEST(ThresholdLevel, Examples) {
  const auto s = derive_scales(small_model());
  EXPECT_DOUBLE_EQ(threshold_level(s, 16, 1.0, 1.0), 2.0);
  EXPECT_NEAR(threshold_level(s, 16, 1.0, std::numbers::e), 2.5, 1e-14);
  EXPECT_NEAR(threshold_level(s, 16, 1.0, 1.0 / std::numbers::e), 1.5, 1e-14);
}

TEST(ThresholdLevel, RejectsNonPositive) {
  const auto s = derive_scales(small_model());
  EXPECT_THROW(threshold_level(s, 16, 1.0, 0.0), DomainError);
  EXPECT_THROW(threshold_level(s, 16, 1.0, -1.0), DomainError);
}

TEST(PowerNormalize, Examples) {
  const double alpha = 0.3;
  EXPECT_DOUBLE_EQ(power_normalize(0.0, alpha), 1.0);
  EXPECT_EQ(power_normalize(-std::numeric_limits<double>::infinity(), alpha), 0.0);
  EXPECT_NEAR(power_normalize(std::log(3.0), 1.0), 3.0, 1e-15);
}

TEST(PowerNormalize, MonotoneInLogValue) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(power_normalize(a, 0.2), power_normalize(b, 0.2));
  }
}

TEST(Validate, RejectsOutOfRangeExponents) {
  auto m = small_model();
  m.c = 0.5;
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.c = 0.0;
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.omega = 0.7;  // below 1/2 + c
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.omega = 1.0;
  EXPECT_THROW(validate(m), InvalidParameter);
}

TEST(Validate, RejectsImaginaryBlockCoefficient) {
  ModelParams m;
  m.N = 64;
  m.omega = 0.9;  // nu = 42, p (nu - 1) = 82 >= 64
  try {
    validate(m);
    FAIL() << "expected rejection";
  } catch (const InvalidParameter& e) {
    EXPECT_NE(std::string(e.what()).find("p (nu - 1) < N"), std::string::npos);
  }
}

TEST(Validate, RejectsBadScalars) {
  auto m = small_model();
  m.beta = 0.0;
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.N = 1;
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.p = 1;
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.epsilon_aging = 1.0;
  EXPECT_THROW(validate(m), InvalidParameter);
  m = small_model();
  m.theta = -1.0;
  EXPECT_THROW(validate(m), InvalidParameter);
}

TEST(Validate, WarnsForThreeSpinOutsideProvenRange) {
  ModelParams m;
  m.N = 64;
  m.p = 3;
  m.c = 0.3;
  m.omega = 0.81;
  // nu = 29, p (nu - 1) = 84 >= 64: a smaller omega is needed for p = 3.
  EXPECT_THROW(validate(m), InvalidParameter);
  m.N = 128;
  m.c = 0.25;
  m.omega = 0.77;
  const auto warnings = validate(m);
  ASSERT_EQ(warnings.size(), 1u);
  m.c = 0.2;
  m.omega = 0.72;
  EXPECT_TRUE(validate(m).empty());
}

TEST(Validate, DefaultGridIsValidWithFiniteJumpScale) {
  for (int N : {32, 64, 128, 256}) {
    for (double beta : {0.75, 1.0}) {
      ModelParams m;
      m.N = N;
      m.beta = beta;
      EXPECT_NO_THROW(validate(m)) << N;
      EXPECT_TRUE(std::isfinite(derive_scales(m).r));
    }
  }
}

TEST(ParamsJson, RoundTrip) {
  const auto m = small_model();
  EXPECT_EQ(params_from_json(to_json(m)), m);
}

TEST(ParamsJson, RejectsUnknownKeys) {
  auto j = to_json(small_model());
  j["gamma"] = 1.0;
  EXPECT_THROW(params_from_json(j), InvalidParameter);
}

TEST(ParamsJson, OptionalFieldsDefault) {
  nlohmann::json j = {{"N", 16}, {"p", 2}, {"beta", 1.0}, {"c", 0.25}, {"omega", 0.76}};
  const auto m = params_from_json(j);
  EXPECT_DOUBLE_EQ(m.epsilon_aging, 0.5);
  EXPECT_DOUBLE_EQ(m.theta, 1.0);
}

TEST(ParamsJson, RejectsMissingOrMistypedFields) {
  EXPECT_THROW(params_from_json(nlohmann::json{{"N", 16}}), InvalidParameter);
  nlohmann::json j = to_json(small_model());
  j["N"] = "sixteen";
  EXPECT_THROW(params_from_json(j), InvalidParameter);
}
