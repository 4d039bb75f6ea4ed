#include <gtest/gtest.h>

#include <cmath>

#include "glyconet/metrics.hpp"
#include "glyconet/rng.hpp"
#include "oracles/ap_bruteforce.hpp"

using namespace glyconet;

namespace {

std::vector<bool> as_bool(const std::vector<int>& v) { return {v.begin(), v.end()}; }

// Three-class probabilities, loosely informative.
std::vector<std::vector<double>> noisy_probs(Rng& rng, const std::vector<int>& truth) {
  std::vector<std::vector<double>> p;
  for (int t : truth) {
    std::vector<double> row(3);
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += row[c] = rng.uniform() + (c == t ? 0.6 : 0.0);
    for (auto& v : row) v /= s;
    p.push_back(row);
  }
  return p;
}

}  // namespace

TEST(Confusion, HandTally) {
  auto m = confusion_matrix({0, 0, 1, 2, 2, 2}, {0, 1, 1, 2, 0, 2}, 3);
  EXPECT_EQ(m, (ConfusionMatrix{{1, 1, 0}, {0, 1, 0}, {1, 0, 2}}));
  EXPECT_THROW(confusion_matrix({0, 3}, {0, 0}, 3), InternalError);
  EXPECT_THROW(confusion_matrix({0}, {0, 0}, 3), InternalError);
}

TEST(Confusion, PerfectAndConstantPredictors) {
  auto d = confusion_matrix({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(d[i][j], 0u);
  auto c = confusion_matrix({0, 1, 2, 1}, {0, 0, 0, 0}, 3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(c[i][1], 0u);
    EXPECT_EQ(c[i][2], 0u);
  }
  auto mm = macro_metrics(d);
  EXPECT_EQ(mm.recall, 1.0);
  EXPECT_EQ(mm.precision, 1.0);
  EXPECT_EQ(mm.f1, 1.0);
}

TEST(MacroMetrics, BinaryHandCase) {
  auto mm = macro_metrics({{8, 2}, {4, 6}});
  EXPECT_DOUBLE_EQ(mm.per_class[0].recall, 0.8);
  EXPECT_DOUBLE_EQ(mm.per_class[1].recall, 0.6);
  EXPECT_DOUBLE_EQ(mm.recall, 0.7);
  EXPECT_DOUBLE_EQ(mm.per_class[0].precision, 8.0 / 12.0);
  EXPECT_DOUBLE_EQ(mm.per_class[1].precision, 0.75);
  EXPECT_DOUBLE_EQ(mm.per_class[0].f1, 2 * 0.8 * (8.0 / 12.0) / (0.8 + 8.0 / 12.0));
}

TEST(MacroMetrics, AbsentClassExcludedAndZeroDivision) {
  // class 2 never true; class 1 never predicted
  auto mm = macro_metrics({{5, 0, 1}, {3, 0, 1}, {0, 0, 0}});
  EXPECT_EQ(mm.supported_classes, 2);
  EXPECT_EQ(mm.per_class[1].precision, 0.0);
  EXPECT_EQ(mm.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(mm.recall, (5.0 / 6.0 + 0.0) / 2.0);
}

TEST(AveragePrecision, ReferenceCase) {
  const std::vector<int> y = {1, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0,
                              0, 0, 1, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0};
  const std::vector<double> s = {0.0, 1.0, 0.3, 0.3, 0.9, 0.6, 0.5, 0.8, 0.0, 0.7,
                                 0.4, 0.1, 0.7, 0.9, 0.2, 0.6, 0.3, 0.7, 0.7, 0.2,
                                 0.8, 0.7, 0.7, 0.8, 0.4, 0.8, 0.9, 0.1, 0.8, 0.4,
                                 0.5, 0.1, 0.7, 0.3, 0.9, 0.3, 0.6, 0.4, 0.6, 0.2};
  EXPECT_NEAR(average_precision(s, as_bool(y)), 0.440974419529478, 1e-12);
}

TEST(AveragePrecision, FiveSampleHandCase) {
  // ranks: 0.9(+) 0.8(-) 0.7(+) 0.7(-) 0.2(+)
  // thresholds: R 1/3 P 1; R 1/3 P 1/2; R 2/3 P 2/4; R 1 P 3/5
  const std::vector<double> s = {0.9, 0.8, 0.7, 0.7, 0.2};
  const std::vector<int> y = {1, 0, 1, 0, 1};
  const double hand = 1.0 / 3.0 * 1.0 + 1.0 / 3.0 * 0.5 + 1.0 / 3.0 * 0.6;
  EXPECT_NEAR(average_precision(s, as_bool(y)), hand, 1e-15);
  EXPECT_NEAR(oracle::average_precision(s, y), hand, 1e-15);
}

TEST(AveragePrecision, MatchesBruteForceWithTies) {
  Rng rng(12, 0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(10)) / 10.0;
      y[i] = rng.uniform() < 0.3;
    }
    y[0] = 1;
    EXPECT_NEAR(average_precision(s, as_bool(y)), oracle::average_precision(s, y), 1e-12);
  }
}

TEST(AveragePrecision, SeparableAndNoPositives) {
  EXPECT_EQ(average_precision({0.9, 0.8, 0.1, 0.0}, {true, true, false, false}), 1.0);
  EXPECT_TRUE(std::isnan(average_precision({0.1, 0.2}, {false, false})));
}

TEST(AveragePrecision, RandomScoresNearPrevalence) {
  Rng rng(13, 0);
  const std::size_t n = 200000;
  std::vector<double> s(n);
  std::vector<bool> y(n);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.2;
    pos += y[i];
  }
  EXPECT_NEAR(average_precision(s, y), static_cast<double>(pos) / n, 0.01);
}

TEST(AveragePrecision, MonotoneTransformInvariant) {
  Rng rng(14, 0);
  std::vector<double> s(300), t(300);
  std::vector<bool> y(300);
  for (int i = 0; i < 300; ++i) {
    s[i] = std::round(rng.uniform() * 50.0) / 50.0;
    t[i] = std::exp(3.0 * s[i]) - 7.0;
    y[i] = rng.uniform() < s[i];
  }
  EXPECT_DOUBLE_EQ(average_precision(s, y), average_precision(t, y));
}

TEST(AveragePrecision, OneMisrankedNegativeStillAbovePrevalence) {
  // all positives above all negatives except one negative on top
  for (std::size_t npos = 1; npos < 20; ++npos)
    for (std::size_t nneg = 1; nneg < 20; ++nneg) {
      std::vector<double> s;
      std::vector<bool> y;
      s.push_back(10.0);
      y.push_back(false);
      for (std::size_t i = 0; i < npos; ++i) s.push_back(5.0), y.push_back(true);
      for (std::size_t i = 1; i < nneg; ++i) s.push_back(1.0), y.push_back(false);
      const double prevalence = static_cast<double>(npos) / static_cast<double>(npos + nneg);
      EXPECT_GE(average_precision(s, y), prevalence);
    }
}

TEST(Report, InvariantUnderPermutationAndDuplication) {
  Rng rng(15, 0);
  std::vector<int> truth;
  for (int i = 0; i < 120; ++i) truth.push_back(static_cast<int>(rng.below(3)));
  auto probs = noisy_probs(rng, truth);
  const auto base = evaluate_predictions(truth, probs, 3);

  std::vector<std::size_t> idx(truth.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<int> t2;
  std::vector<std::vector<double>> p2;
  for (auto i : idx) t2.push_back(truth[i]), p2.push_back(probs[i]);
  const auto perm = evaluate_predictions(t2, p2, 3);
  EXPECT_EQ(perm.confusion, base.confusion);
  EXPECT_DOUBLE_EQ(perm.macro_pr_auc, base.macro_pr_auc);
  EXPECT_DOUBLE_EQ(perm.macro_f1, base.macro_f1);

  std::vector<int> t3;
  std::vector<std::vector<double>> p3;
  for (int k = 0; k < 3; ++k) {
    t3.insert(t3.end(), truth.begin(), truth.end());
    p3.insert(p3.end(), probs.begin(), probs.end());
  }
  const auto dup = evaluate_predictions(t3, p3, 3);
  EXPECT_NEAR(dup.macro_recall, base.macro_recall, 1e-12);
  EXPECT_NEAR(dup.macro_precision, base.macro_precision, 1e-12);
  EXPECT_NEAR(dup.macro_f1, base.macro_f1, 1e-12);
  EXPECT_NEAR(dup.macro_pr_auc, base.macro_pr_auc, 1e-12);
}

TEST(Report, JsonRoundTripAndRanges) {
  Rng rng(16, 0);
  std::vector<int> truth = {0, 0, 1, 1, 1, 0, 1, 0};
  auto probs = noisy_probs(rng, truth);
  auto r = evaluate_predictions(truth, probs, 3);
  std::uint64_t sum = 0;
  for (const auto& row : r.confusion)
    for (auto v : row) sum += v;
  EXPECT_EQ(sum, r.samples);
  EXPECT_TRUE(std::isnan(r.per_class[2].pr_auc));
  EXPECT_EQ(r.supported_classes, 2);
  for (double v : {r.macro_recall, r.macro_precision, r.macro_f1, r.macro_pr_auc}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const auto j = report_to_json(r);
  EXPECT_EQ(j.at("pr_auc_definition"), kPrAucDefinition);
  const auto back = report_from_json(j);
  EXPECT_EQ(report_to_json(back).dump(), j.dump());
}

TEST(Report, ArgmaxTiesToLowestIndex) {
  EXPECT_EQ(argmax({0.4, 0.4, 0.2}), 0);
  EXPECT_EQ(argmax({0.1, 0.45, 0.45}), 1);
}
