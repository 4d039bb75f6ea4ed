#include <gtest/gtest.h>

#include <cmath>

#include "glyconet/labeling.hpp"
#include "glyconet/rng.hpp"
#include "oracles/sweep_labeler.hpp"

using namespace glyconet;

namespace {

GlucoseSeries grid(const std::vector<double>& values) {
  GlucoseSeries s{"s", 1000, 5, {}};
  for (std::size_t i = 0; i < values.size(); ++i)
    s.points.push_back({static_cast<std::int64_t>(5 * i), values[i]});
  return s;
}

GlucoseSeries random_series(Rng& rng, std::size_t n, double density) {
  GlucoseSeries s{"r", 0, 5, {}};
  std::int64_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = rng.uniform() < density ? rng.uniform(40.0, 70.0) : rng.uniform(71.0, 300.0);
    if (rng.uniform() < 0.03) v = kMissing;
    s.points.push_back({off, v});
    off += rng.uniform() < 0.02 ? 5 * static_cast<std::int64_t>(2 + rng.below(30)) : 5;
  }
  return s;
}

const ClassSetSpec kII = class_set(ClassSet::SET_II);

}  // namespace

TEST(AssignClasses, ThresholdIsInclusive) {
  auto l = assign_classes(grid({100, 70, 71}), kII).labels;
  EXPECT_EQ(l[1], 0);
  EXPECT_EQ(l[2], kNoRisk);
}

TEST(AssignClasses, FifteenMinutesBeforeIsClassOne) {
  auto l = assign_classes(grid({150, 140, 130, 120, 60}), kII).labels;
  EXPECT_EQ(l[1], 1);
  EXPECT_EQ(l[0], 2);
}

TEST(AssignClasses, NearestEventWins) {
  // index 0: 50 min before the event at index 10, 10 min before the one at 2
  std::vector<double> v(12, 150.0);
  v[2] = 60.0;
  v[10] = 60.0;
  auto l = assign_classes(grid(v), kII).labels;
  EXPECT_EQ(l[0], 1);
  EXPECT_EQ(l[3], 2);  // 35 min
}

TEST(AssignClasses, OneEventEnumeration) {
  std::vector<double> v(25, 150.0);
  v.push_back(60.0);
  auto ls = assign_classes(grid(v), kII);
  auto d = class_distribution({ls}, LabelScheme::SET_II);
  EXPECT_EQ(d.counts, (std::vector<std::uint64_t>{1, 3, 6, 15}));
  EXPECT_EQ(d.no_risk, 1u);
  EXPECT_EQ(d.unlabeled, 0u);
}

TEST(AssignClasses, MissingPointsUnlabeledAndBreakLeads) {
  auto l = assign_classes(grid({150, 150, kMissing, 150, 60}), kII).labels;
  EXPECT_EQ(l[2], kUnlabeled);
  EXPECT_EQ(l[1], kNoRisk);
  EXPECT_EQ(l[3], 1);
}

TEST(AssignClasses, GridDiscontinuityBreaksLeads) {
  GlucoseSeries s{"s", 0, 5, {{0, 150}, {5, 150}, {130, 150}, {135, 60}}};
  auto l = assign_classes(s, kII).labels;
  EXPECT_EQ(l[1], kNoRisk);
  EXPECT_EQ(l[2], 1);
}

TEST(BinaryRisk, Horizon) {
  std::vector<double> v(26, 150.0);
  v.push_back(65.0);
  auto l = assign_binary_risk(grid(v)).labels;
  EXPECT_EQ(l[26], kBinaryRisk);
  EXPECT_EQ(l[2], kBinaryRisk);    // 120 min
  EXPECT_EQ(l[1], kBinaryNoRisk);  // 125 min
}

TEST(ClassDistribution, EmptyInput) {
  auto d = class_distribution({}, LabelScheme::SET_I);
  EXPECT_EQ(d.counts, std::vector<std::uint64_t>(5, 0));
  EXPECT_EQ(d.labeled_total(), 0u);
}

TEST(Labels, AgreeWithSweepOracle) {
  Rng rng(5, 1);
  for (int t = 0; t < 150; ++t) {
    auto s = random_series(rng, 50 + rng.below(400), rng.uniform(0.0, 0.2));
    for (ClassSet cs : {ClassSet::SET_I, ClassSet::SET_II, ClassSet::SET_III}) {
      const auto spec = class_set(cs);
      ASSERT_EQ(assign_classes(s, spec).labels, oracle::sweep_labels(s, spec))
          << "trial " << t << " set " << to_string(cs);
    }
  }
}

TEST(Labels, StructuralProperties) {
  Rng rng(9, 2);
  for (int t = 0; t < 100; ++t) {
    auto s = random_series(rng, 300, 0.05);
    auto l1 = assign_classes(s, class_set(ClassSet::SET_I)).labels;
    auto l2 = assign_classes(s, kII).labels;
    auto lb = assign_binary_risk(s).labels;
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const double g = s.points[i].glucose;
      EXPECT_EQ(l2[i] == kUnlabeled, std::isnan(g));
      EXPECT_EQ(l1[i] == 0, l2[i] == 0);
      if (!std::isnan(g) && g <= 70.0) EXPECT_EQ(l2[i], 0);
      if (l2[i] != kUnlabeled)
        EXPECT_EQ(lb[i] == kBinaryRisk, l2[i] != kNoRisk);
    }
    // class non-increasing as the next event approaches, within a run
    for (std::size_t i = 1; i < s.points.size(); ++i) {
      const bool same_run = s.points[i].offset - s.points[i - 1].offset == 5;
      if (same_run && l2[i - 1] > 0 && l2[i] > 0) EXPECT_LE(l2[i], l2[i - 1]);
    }
  }
}

TEST(LabelAll, MatchesPerSeries) {
  Rng rng(3, 3);
  std::vector<GlucoseSeries> all;
  for (int i = 0; i < 8; ++i) all.push_back(random_series(rng, 200, 0.1));
  auto out = label_all(all, LabelScheme::SET_III);
  for (std::size_t i = 0; i < all.size(); ++i)
    EXPECT_EQ(out[i].labels, label_series(all[i], LabelScheme::SET_III).labels);
}
