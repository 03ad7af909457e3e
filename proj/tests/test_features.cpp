#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bayesnf/error.hpp"
#include "bayesnf/features.hpp"

using namespace bayesnf;

namespace {

FeatureSpec full_spec() {
  FeatureSpec s;
  s.dim = 2;
  s.use_time_space_interactions = true;
  s.use_space_space_interactions = true;
  s.seasonal = {{7.0, {1, 2, 3}}};
  s.spatial_fourier = {{0, 1}, {0, 1}};
  s.spatial_bounds = {{0.0, 1.0}, {0.0, 1.0}};
  return s;
}

}  // namespace

TEST(FeatureCount, LinearOnly) {
  FeatureSpec s;
  s.dim = 2;
  EXPECT_EQ(feature_count(s), 3u);
}

TEST(FeatureCount, AllBlocks) {
  // 3 linear + 2 time-space + 1 space-space + 6 seasonal + 8 fourier
  EXPECT_EQ(feature_count(full_spec()), 20u);
}

TEST(FeatureCount, EmptySpec) {
  FeatureSpec s;
  s.dim = 1;
  s.use_linear = false;
  EXPECT_EQ(feature_count(s), 0u);
}

TEST(FeatureCount, MatchesBuiltLength) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  const auto spec = full_spec();
  for (int k = 0; k < 50; ++k) {
    const auto fv = build_features(spec, {{u(rng), u(rng)}, u(rng)});
    EXPECT_EQ(fv.values.size(), feature_count(spec));
    EXPECT_EQ(fv.names.size(), feature_count(spec));
  }
}

TEST(BuildFeatures, EmissionOrder) {
  FeatureSpec s = full_spec();
  s.seasonal = {{7.0, {1}}};
  s.spatial_fourier = {{0}, {}};
  const auto fv = build_features(s, {{0.25, 0.5}, 2.0});
  const double two_pi = 2.0 * std::numbers::pi;
  const std::vector<double> expect = {2.0,
                                      0.25,
                                      0.5,
                                      2.0 * 0.25,
                                      2.0 * 0.5,
                                      0.25 * 0.5,
                                      std::cos(two_pi * 2.0 / 7.0),
                                      std::sin(two_pi * 2.0 / 7.0),
                                      std::cos(two_pi * 0.25),
                                      std::sin(two_pi * 0.25)};
  ASSERT_EQ(fv.values.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(fv.values[i], expect[i], 1e-15) << fv.names[i];
  EXPECT_EQ(fv.names[0], "t");
}

TEST(BuildFeatures, SeasonalAtZero) {
  FeatureSpec s;
  s.use_linear = false;
  s.seasonal = {{7.0, {1}}};
  const auto fv = build_features(s, {{0.3}, 0.0});
  EXPECT_EQ(fv.values[0], 1.0);
  EXPECT_EQ(fv.values[1], 0.0);
}

TEST(BuildFeatures, SeasonalHalfPeriod) {
  FeatureSpec s;
  s.use_linear = false;
  for (double p : {7.0, 12.0, 365.25}) {
    for (int h : {1, 2, 3}) {
      s.seasonal = {{p, {h}}};
      const auto fv = build_features(s, {{0.0}, p / (2.0 * h)});
      EXPECT_NEAR(fv.values[0], -1.0, 1e-12);
      EXPECT_NEAR(fv.values[1], 0.0, 1e-12);
    }
  }
}

TEST(BuildFeatures, SpatialQuarterCycle) {
  FeatureSpec s;
  s.use_linear = false;
  s.spatial_fourier = {{0}};
  s.spatial_bounds = {{10.0, 14.0}};
  const auto fv = build_features(s, {{11.0}, 0.0});  // normalized 0.25
  EXPECT_NEAR(fv.values[0], 0.0, 1e-12);
  EXPECT_NEAR(fv.values[1], 1.0, 1e-12);
}

TEST(BuildFeatures, PairsOnUnitCircleAndPeriodic) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50, 50);
  FeatureSpec s;
  s.dim = 2;
  s.use_linear = false;
  s.seasonal = {{7.0, {1, 2, 3}}, {30.44, {1, 5}}};
  s.spatial_fourier = {{0, 3}, {2}};
  s.spatial_bounds = {{-50, 50}, {-50, 50}};
  for (int k = 0; k < 100; ++k) {
    const SpaceTimeIndex idx{{u(rng), u(rng)}, u(rng)};
    const auto a = build_features(s, idx).values;
    for (std::size_t i = 0; i + 1 < a.size(); i += 2) EXPECT_NEAR(a[i] * a[i] + a[i + 1] * a[i + 1], 1.0, 1e-12);
    for (const auto& term : s.seasonal) {
      FeatureSpec one = s;
      one.seasonal = {term};
      one.spatial_fourier.clear();
      SpaceTimeIndex later = idx;
      later.time += term.period;
      const auto x = build_features(one, idx).values, y = build_features(one, later).values;
      for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-9);
    }
  }
}

TEST(BuildFeatures, Deterministic) {
  const auto spec = full_spec();
  const SpaceTimeIndex idx{{0.123, 0.456}, 17.5};
  EXPECT_EQ(build_features(spec, idx).values, build_features(spec, idx).values);
}

TEST(BuildFeatures, Errors) {
  const auto spec = full_spec();
  EXPECT_THROW(build_features(spec, {{0.1}, 0.0}), InputError);
  EXPECT_THROW(build_features(spec, {{0.1, NAN}, 0.0}), InputError);
  FeatureSpec bad;
  bad.seasonal = {{7.0, {4}}};  // floor(7/2) = 3
  EXPECT_THROW(bad.validate(), InputError);
  bad.seasonal = {{-1.0, {}}};
  EXPECT_THROW(bad.validate(), InputError);
  bad = FeatureSpec{};
  bad.spatial_bounds = {{1.0, 1.0}};
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(BuildFeatures, ExogenousAppendedRaw) {
  FeatureSpec s;
  s.exogenous = {"temp", "rain"};
  const std::vector<double> exo = {12.5, -3.0};
  const auto fv = build_features(s, {{0.0}, 1.0}, exo);
  ASSERT_EQ(fv.values.size(), 4u);
  EXPECT_EQ(fv.values[2], 12.5);
  EXPECT_EQ(fv.values[3], -3.0);
  EXPECT_EQ(fv.names[3], "rain");
}

TEST(BuildFeatures, PolynomialScalingOnlyTouchesPolynomialBlock) {
  FeatureSpec s;
  s.seasonal = {{4.0, {1}}};
  std::vector<SpaceTimeIndex> idx;
  for (int t = 0; t < 10; ++t) idx.push_back({{2.0 * t}, static_cast<double>(t)});
  FeatureSpec scaled = s;
  fit_polynomial_scaling(scaled, idx);
  // Standardized columns have mean 0 and unit variance over the fitting set.
  double m0 = 0, m1 = 0, v0 = 0;
  for (const auto& i : idx) {
    const auto x = build_features(scaled, i).values;
    m0 += x[0] / 10;
    m1 += x[1] / 10;
    v0 += x[0] * x[0] / 10;
    const auto raw = build_features(s, i).values;
    EXPECT_EQ(x[2], raw[2]);
    EXPECT_EQ(x[3], raw[3]);
  }
  EXPECT_NEAR(m0, 0.0, 1e-12);
  EXPECT_NEAR(m1, 0.0, 1e-12);
  EXPECT_NEAR(v0, 1.0, 1e-12);
}

TEST(SeasonalPeriod, Examples) {
  EXPECT_EQ(*seasonal_period(Frequency::kDaily, SeasonalEffect::kWeekly), 7.0);
  EXPECT_EQ(*seasonal_period(Frequency::kDaily, SeasonalEffect::kYearly), 365.25);
  EXPECT_EQ(*seasonal_period(Frequency::kHourly, SeasonalEffect::kMonthly), 730.5);
  EXPECT_FALSE(seasonal_period(Frequency::kDaily, SeasonalEffect::kHourly).has_value());
  EXPECT_FALSE(seasonal_period(Frequency::kYearly, SeasonalEffect::kMonthly).has_value());
}

TEST(SeasonalPeriod, Names) {
  EXPECT_EQ(parse_frequency("monthly"), Frequency::kMonthly);
  EXPECT_EQ(parse_seasonal_effect("quarterly"), SeasonalEffect::kQuarterly);
  EXPECT_EQ(to_string(Frequency::kHourly), "hourly");
  EXPECT_THROW(parse_frequency("fortnightly"), InputError);
  EXPECT_THROW(parse_seasonal_effect(""), InputError);
}
