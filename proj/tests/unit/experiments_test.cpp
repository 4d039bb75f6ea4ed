#include <gtest/gtest.h>

#include <set>

#include "glyconet/experiments.hpp"
#include "glyconet/log.hpp"
#include "support/pipeline.hpp"

using namespace glyconet;
using testing_support::prepare;

namespace {

SynthConfig tiny_cohort() {
  SynthConfig c;
  c.subjects_per_group = {3, 3, 3, 3};
  c.days = 3;
  c.episodes_per_day = 2.0;
  c.seed = 5;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 32;
  c.arch.channels = {8, 16, 8};
  c.finetune_epochs = 1;
  return c;
}

SubjectReport subject(const std::string& id, AgeGroup g, double f1) {
  SubjectReport s;
  s.subject_id = id;
  s.group = g;
  s.metrics.samples = 10;
  s.metrics.macro_f1 = f1;
  return s;
}

}  // namespace

TEST(Scope, Parse) {
  EXPECT_EQ(parse_scope("global").kind, ScopeKind::GLOBAL);
  auto s = parse_scope("age:0-13");
  EXPECT_EQ(s.kind, ScopeKind::AGE_GROUP);
  EXPECT_EQ(s.group, AgeGroup::G0_13);
  EXPECT_EQ(s.name(), "age:0-13");
  EXPECT_TRUE(s.includes(AgeGroup::G0_13));
  EXPECT_FALSE(s.includes(AgeGroup::G45_PLUS));
  EXPECT_THROW(parse_scope("age:unknown"), ConfigError);
  EXPECT_THROW(parse_scope("everyone"), ConfigError);
}

TEST(Config, JsonRoundTripAndValidation) {
  TrainConfig c = aspb_defaults();
  c.scheme = LabelScheme::SET_III;
  c.isl_minutes = 90;
  c.gamma = 0.5;
  c.weighted = false;
  c.adam.lr = 3e-4;
  c.arch.channels = {4, 8, 4};
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j, TrainConfig{})).dump(), j.dump());
  EXPECT_EQ(config_from_json(nlohmann::json::object(), c).batch_size, 264u);
  EXPECT_THROW(config_from_json({{"class_weights", "inverse"}}, c), ConfigError);
  EXPECT_THROW(config_from_json({{"batch_size", 1}}, c), ConfigError);
  EXPECT_THROW(config_from_json({{"epochs", "ten"}}, c), ConfigError);
  EXPECT_EQ(gpb_defaults().batch_size, 512u);
  EXPECT_EQ(ablation_defaults().batch_size, 128u);
}

TEST(Hashing, GitBlobIds) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Ablation, DefaultGridAndSubset) {
  const auto g = default_ablation_grid();
  ASSERT_EQ(g.size(), 13u);
  EXPECT_FALSE(g[0].weighted);
  int rate15 = 0;
  for (const auto& c : g) {
    rate15 += c.rate == 15;
    EXPECT_NO_THROW(check_window_config(c.isl_minutes, c.rate));
  }
  EXPECT_EQ(rate15, 5);

  SplitPlan plan;
  for (int i = 0; i < 20; ++i) plan.train[AgeGroup::G21_44].push_back("s" + std::to_string(100 + i));
  auto small = ablation_subset(plan, 48);
  EXPECT_EQ(small.train.size(), 1u);
  EXPECT_EQ(small.test.size(), 1u);
  auto half = ablation_subset(plan, 48, 0.5);
  EXPECT_EQ(half.train.size(), 7u);
  EXPECT_EQ(half.test.size(), 3u);
  for (const auto& id : half.test)
    EXPECT_FALSE(std::binary_search(half.train.begin(), half.train.end(), id));
  EXPECT_EQ(ablation_subset(plan, 48, 0.5).train, half.train);

  SplitPlan lone;
  lone.train[AgeGroup::G0_13] = {"only"};
  EXPECT_THROW(ablation_subset(lone, 1), DataError);
}

TEST(Ablation, GridFromJson) {
  auto g = ablation_grid_from_json(nlohmann::json::parse(
      R"([{"name":"x","class_set":"I","isl_minutes":45,"rate_minutes":15,"class_weights":"none"}])"));
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].scheme, LabelScheme::SET_I);
  EXPECT_FALSE(g[0].weighted);
  EXPECT_THROW(ablation_grid_from_json(nlohmann::json::array()), ConfigError);
  EXPECT_THROW(ablation_grid_from_json(nlohmann::json::parse(R"([{"name":"y","isl_minutes":40}])")),
               ConfigError);
}

TEST(ScopeData, LeakageAuditAndScoping) {
  SplitPlan bad;
  bad.train[AgeGroup::G0_13] = {"x"};
  bad.test[AgeGroup::G14_20] = {"x"};
  EXPECT_THROW(scope_data(WindowSet{}, bad, Scope{}), InternalError);

  auto p = prepare(tiny_cohort(), 1);
  const auto d = scope_data(p.windows, p.plan, parse_scope("age:14-20"));
  EXPECT_EQ(d.train_subjects, p.plan.train.at(AgeGroup::G14_20));
  std::set<std::string> train_ids(d.train_subjects.begin(), d.train_subjects.end());
  for (const auto* w : d.train) {
    EXPECT_TRUE(train_ids.count(w->subject_id));
    EXPECT_GE(w->label, 0);
  }
  ASSERT_EQ(d.personal.size(), 1u);
  EXPECT_EQ(d.personal[0].subject_id, p.plan.test.at(AgeGroup::G14_20)[0]);
  EXPECT_LT(d.personal[0].train.back().end_time, d.personal[0].test.front().end_time);
}

TEST(Population, TrainsEvaluatesAndIsDeterministic) {
  auto p = prepare(tiny_cohort(), 1);
  const auto cfg = tiny_train();
  auto a = train_population(p.windows, p.plan, Scope{}, cfg);
  auto b = train_population(p.windows, p.plan, Scope{}, cfg);
  EXPECT_EQ(population_report_to_json(a.report).dump(), population_report_to_json(b.report).dump());
  EXPECT_EQ(a.train_fingerprint, b.train_fingerprint);
  EXPECT_EQ(a.log.epoch_loss.size(), 1u);
  EXPECT_EQ(a.train_subjects, p.plan.all_train());
  for (const auto& [g, ids] : a.report.test_subjects) EXPECT_EQ(ids, p.plan.test.at(g));
  EXPECT_GT(a.report.overall.samples, 0u);

  auto again = evaluate_population(a.model, p.windows, p.plan, Scope{});
  EXPECT_EQ(population_report_to_json(again).dump(), population_report_to_json(a.report).dump());
  auto back = population_report_from_json(population_report_to_json(a.report));
  EXPECT_EQ(population_report_to_json(back).dump(), population_report_to_json(a.report).dump());

  auto wrong = cfg;
  wrong.isl_minutes = 60;
  EXPECT_THROW(train_population(p.windows, p.plan, Scope{}, wrong), ConfigError);
}

TEST(Finetune, ZeroEpochsKeepsBaseAndTinySubjectsSkipped) {
  auto p = prepare(tiny_cohort(), 1);
  auto cfg = tiny_train();
  auto run = train_population(p.windows, p.plan, Scope{}, cfg);
  cfg.finetune_epochs = 0;
  auto same = finetune(run.model, p.windows, p.plan, Scope{}, cfg);
  EXPECT_EQ(report_to_json(same.report.overall).dump(), report_to_json(run.report.overall).dump());

  cfg.finetune_epochs = 1;
  auto tuned = finetune(run.model, p.windows, p.plan, Scope{}, cfg);
  EXPECT_EQ(tuned.report.scope, "global+finetune");
  EXPECT_EQ(finetune(run.model, p.windows, p.plan, Scope{}, cfg).report.overall.confusion,
            tuned.report.overall.confusion);

  PersonalData lone;
  lone.subject_id = "z";
  lone.train.resize(1);
  lone.train[0].features.assign(static_cast<std::size_t>(run.model.length), 0.5);
  ScopedWarningCapture cap;
  EXPECT_FALSE(finetune_subject(run.model, lone, AgeGroup::G0_13, cfg).has_value());
  EXPECT_TRUE(cap.contains("fewer than 2"));
}

TEST(Compare, ExtremesTieBreakBySmallerId) {
  PopulationReport r;
  r.per_subject = {subject("b", AgeGroup::G0_13, 0.5), subject("a", AgeGroup::G0_13, 0.5),
                   subject("c", AgeGroup::G0_13, 0.2), subject("d", AgeGroup::G0_13, 0.2),
                   subject("e", AgeGroup::G14_20, 0.9)};
  auto e = extremes(r, AgeGroup::G0_13);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->best_subject, "a");
  EXPECT_EQ(e->worst_subject, "c");
  EXPECT_FALSE(extremes(r, AgeGroup::G45_PLUS).has_value());
}

TEST(Compare, DeltasAndSubjectMismatch) {
  PopulationReport gpb;
  gpb.test_subjects[AgeGroup::G0_13] = {"a", "b"};
  gpb.per_group[AgeGroup::G0_13].macro_recall = 0.6;
  PopulationReport aspb;
  aspb.test_subjects[AgeGroup::G0_13] = {"a", "b"};
  aspb.overall.macro_recall = 0.75;
  auto rows = compare_scopes(gpb, {{AgeGroup::G0_13, aspb}});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_DOUBLE_EQ(rows[0].d_recall, 0.15);
  aspb.test_subjects[AgeGroup::G0_13] = {"a"};
  EXPECT_THROW(compare_scopes(gpb, {{AgeGroup::G0_13, aspb}}), DataError);
}
