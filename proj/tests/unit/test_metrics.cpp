#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fetqc/error.hpp"
#include "fetqc/metrics.hpp"
#include "fetqc/rng.hpp"
#include "oracles.hpp"

using namespace fetqc;

TEST(Classification, HandCase) {
  const std::vector<int> y{1, 1, 0, 0};
  const std::vector<double> s{0.9, 0.4, 0.6, 0.1};
  const auto m = classification_metrics(y, s);
  EXPECT_DOUBLE_EQ(*m.auc, 0.75);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1_weighted, 0.5);
}

TEST(Classification, ZeroDivisionCountsAsZero) {
  EXPECT_EQ(precision_score({1, 0}, {0, 0}), 0.0);
  EXPECT_EQ(recall_score({0, 0}, {1, 0}), 0.0);
}

TEST(Classification, SingleClassAucIsUndefined) {
  try {
    roc_auc({1, 1, 1}, {0.1, 0.2, 0.3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingleClassAUC);
  }
  EXPECT_FALSE(classification_metrics({1, 1}, {0.2, 0.9}).auc.has_value());
  EXPECT_THROW(classification_metrics({}, {}), Error);
}

TEST(Classification, AucInvariantUnderMonotoneScoreTransform) {
  Rng rng(1);
  std::vector<int> y;
  std::vector<double> s, t;
  for (int i = 0; i < 60; ++i) {
    y.push_back(uniform01(rng) < 0.4);
    s.push_back(std::round(10 * uniform01(rng)) / 10);
    t.push_back(std::exp(2 * s.back()) + 3);
  }
  EXPECT_DOUBLE_EQ(roc_auc(y, s), roc_auc(y, t));
}

TEST(Classification, MatchesOracles) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 60);
    std::vector<int> y(n), p(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = uniform01(rng) < 0.6;
      s[i] = std::round(20 * uniform01(rng)) / 20;  // ties on purpose
      p[i] = s[i] >= 0.5;
    }
    EXPECT_TRUE(oracle::close(weighted_f1(y, p), oracle::weighted_f1(y, p)));
    EXPECT_TRUE(oracle::close(precision_score(y, p), oracle::precision(y, p)));
    EXPECT_TRUE(oracle::close(recall_score(y, p), oracle::recall(y, p)));
    const bool both = std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0;
    if (both) EXPECT_TRUE(oracle::close(roc_auc(y, s), oracle::roc_auc(y, s)));
  }
}

TEST(Regression, HandCases) {
  EXPECT_DOUBLE_EQ(r2_score({1, 2, 3}, {3, 2, 1}), -3.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(mean_absolute_error({1, 2, 3}, {3, 2, 1}), 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(r2_score({1, 2, 3}, {1, 2, 3}), 1.0);
  try {
    r2_score({2, 2, 2}, {1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVariance);
  }
  EXPECT_TRUE(std::isnan(spearman({1, 1, 1}, {1, 2, 3})));
  const auto m = regression_metrics({2, 2, 2}, {1, 2, 3});
  EXPECT_FALSE(m.r2.has_value());
  EXPECT_TRUE(m.spearman.has_value() == false);
  EXPECT_THROW(regression_metrics({1}, {1}), Error);
}

TEST(Regression, MatchesOracles) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 3 + uniform_index(rng, 50);
    std::vector<double> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = std::round(8 * 4 * uniform01(rng)) / 8;
      p[i] = y[i] + normal(rng, 0, 0.8);
    }
    EXPECT_TRUE(oracle::close(mean_absolute_error(y, p), oracle::mae(y, p)));
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) continue;
    EXPECT_TRUE(oracle::close(r2_score(y, p), oracle::r2(y, p)));
    EXPECT_TRUE(oracle::close(spearman(y, p), oracle::spearman(y, p)));
  }
}

TEST(Agreement, KappaHandTable) {
  // 40 both include, 40 both exclude, 10 + 10 disagreements
  std::vector<int> a, b;
  for (int i = 0; i < 40; ++i) a.push_back(1), b.push_back(1);
  for (int i = 0; i < 40; ++i) a.push_back(0), b.push_back(0);
  for (int i = 0; i < 10; ++i) a.push_back(1), b.push_back(0);
  for (int i = 0; i < 10; ++i) a.push_back(0), b.push_back(1);
  EXPECT_NEAR(*cohen_kappa(a, b), 0.6, 1e-12);
  EXPECT_FALSE(cohen_kappa({1, 1}, {1, 1}).has_value());
}

TEST(Agreement, KappaMatchesOracle) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 40);
    std::vector<int> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = uniform01(rng) < 0.7;
      b[i] = uniform01(rng) < 0.3 ? 1 - a[i] : a[i];
    }
    const auto k = cohen_kappa(a, b);
    const auto want = oracle::kappa(a, b);
    ASSERT_EQ(k.has_value(), want.has_value());
    if (want) EXPECT_TRUE(oracle::close(*k, *want));
  }
}

TEST(Agreement, PairsCommonStacks) {
  const Labels a{{"s1", 0.5}, {"s2", 3.0}, {"s3", 2.0}, {"only_a", 1.0}};
  const Labels b{{"s1", 0.8}, {"s2", 2.5}, {"s3", 2.2}, {"only_b", 4.0}};
  const auto m = agreement_metrics(a, b);
  EXPECT_EQ(m.n, 3u);
  EXPECT_TRUE(oracle::close(m.pearson, oracle::pearson({0.5, 3.0, 2.0}, {0.8, 2.5, 2.2})));
  EXPECT_DOUBLE_EQ(*m.kappa, 1.0);
  try {
    agreement_metrics({{"x", 1}}, {{"x", 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoOverlap);
  }
  EXPECT_EQ(qc_label(1.0), 1);
  EXPECT_EQ(qc_label(0.99), 0);
}
