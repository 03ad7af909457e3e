#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bayesnf/error.hpp"
#include "bayesnf/metrics.hpp"

using namespace bayesnf;

TEST(Metrics, HandValues) {
  const std::vector<double> y = {0.0, 0.0}, yhat = {3.0, 4.0};
  EXPECT_NEAR(rmse(y, yhat), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(rmse(y, yhat), 3.535534, 1e-6);
  EXPECT_NEAR(mae(y, yhat), 3.5, 1e-12);
  EXPECT_EQ(rmse(yhat, yhat), 0.0);
  EXPECT_EQ(rmse(std::vector<double>{1.0}, std::vector<double>{3.0}), 2.0);
}

TEST(Metrics, IntervalPenalties) {
  const std::vector<double> lo = {0.0}, hi = {1.0};
  EXPECT_NEAR(mis(std::vector<double>{5.0}, lo, hi), 161.0, 1e-9);
  EXPECT_NEAR(mis(std::vector<double>{-1.0}, lo, hi), 41.0, 1e-9);
  EXPECT_NEAR(mis(std::vector<double>{0.5}, lo, hi), 1.0, 1e-12);
  // alpha = 0.5 gives a factor of 4
  EXPECT_NEAR(mis(std::vector<double>{3.0}, lo, hi, 0.5), 1.0 + 4.0 * 2.0, 1e-12);
}

TEST(Metrics, Errors) {
  const std::vector<double> a = {1.0, 2.0}, b = {1.0};
  EXPECT_THROW(rmse(a, b), InputError);
  EXPECT_THROW(mae(std::vector<double>{}, std::vector<double>{}), InputError);
  EXPECT_THROW(mis(a, std::vector<double>{2.0, 0.0}, std::vector<double>{1.0, 1.0}), InputError);
  EXPECT_THROW(mis(a, a, a, 0.0), InputError);
  EXPECT_THROW(mis(a, a, a, 1.0), InputError);
}

TEST(Metrics, PermutationAndSignInvariance) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  std::vector<double> y(50), p(50), lo(50), hi(50);
  for (std::size_t i = 0; i < 50; ++i) {
    y[i] = z(rng);
    p[i] = z(rng);
    lo[i] = p[i] - std::abs(z(rng));
    hi[i] = p[i] + std::abs(z(rng));
  }
  const auto base = score(y, p, lo, hi);
  std::vector<std::size_t> order(50);
  for (std::size_t i = 0; i < 50; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> y2, p2, lo2, hi2;
  for (auto i : order) {
    y2.push_back(y[i]);
    p2.push_back(p[i]);
    lo2.push_back(lo[i]);
    hi2.push_back(hi[i]);
  }
  const auto perm = score(y2, p2, lo2, hi2);
  EXPECT_NEAR(perm.rmse, base.rmse, 1e-12);
  EXPECT_NEAR(perm.mae, base.mae, 1e-12);
  EXPECT_NEAR(perm.mis, base.mis, 1e-12);

  // Reflecting y and yhat flips every residual.
  std::vector<double> ny(y), np(p);
  for (auto& v : ny) v = -v;
  for (auto& v : np) v = -v;
  EXPECT_NEAR(mae(ny, np), base.mae, 1e-12);
  EXPECT_NEAR(rmse(ny, np), base.rmse, 1e-12);
}

TEST(Metrics, MisBoundedByWidth) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(30), lo(30), hi(30);
    double width = 0.0;
    bool all_in = true;
    for (std::size_t i = 0; i < 30; ++i) {
      y[i] = 2.0 * z(rng);
      lo[i] = -std::abs(z(rng)) - 1.0;
      hi[i] = std::abs(z(rng)) + 1.0;
      width += (hi[i] - lo[i]) / 30.0;
      all_in = all_in && lo[i] <= y[i] && y[i] <= hi[i];
    }
    const double m = mis(y, lo, hi);
    EXPECT_GE(m, width - 1e-12);
    if (all_in) {
      EXPECT_NEAR(m, width, 1e-12);
    } else {
      EXPECT_GT(m, width);
    }
  }
}

TEST(Metrics, WideningCoveredIntervalsIncreasesMis) {
  const std::vector<double> y = {0.0, 1.0, 2.0};
  std::vector<double> lo = {-1.0, 0.5, 1.0}, hi = {1.0, 1.5, 2.5};
  const double before = mis(y, lo, hi);
  for (auto& v : lo) v -= 0.1;
  for (auto& v : hi) v += 0.1;
  EXPECT_GT(mis(y, lo, hi), before);
}

TEST(ScoreReport, Formatting) {
  const std::vector<double> y = {0.0, 0.0}, p = {3.0, 4.0}, lo = {-1.0, -1.0}, hi = {1.0, 5.0};
  const auto r = score(y, p, lo, hi);
  EXPECT_EQ(r.n, 2u);
  EXPECT_EQ(ScoreReport::header(), "rmse,mae,mis,n,alpha");
  EXPECT_EQ(ScoreReport::header('\t'), "rmse\tmae\tmis\tn\talpha");
  EXPECT_EQ(r.to_record(), "3.5355339059327378,3.5,4,2,0.05");
  EXPECT_NE(r.to_text().find("MIS"), std::string::npos);
}
