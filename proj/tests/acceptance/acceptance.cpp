// One PASS/FAIL line per acceptance criterion (2-11); exits 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "glyconet/cohort_stats.hpp"
#include "glyconet/experiments.hpp"
#include "glyconet/ingestion.hpp"
#include "glyconet/labeling.hpp"
#include "glyconet/log.hpp"
#include "glyconet/parallel.hpp"
#include "glyconet/preprocess.hpp"
#include "glyconet/synth.hpp"
#include "glyconet/windowing.hpp"
#include "oracles/grad_check.hpp"
#include "oracles/hsd_reference.hpp"
#include "oracles/q_table.hpp"
#include "oracles/stineman_reference.hpp"
#include "oracles/sweep_labeler.hpp"
#include "support/pipeline.hpp"
#include "support/temp_dir.hpp"

using namespace glyconet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const nn::FcnArchitecture reduced{{8, 16, 8}, {8, 5, 3}};
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0, skipped = 0;
  for (int L : {7, 25})
    for (int C : {4, 5}) {
      const std::uint64_t seed = 1000 + 10 * L + C;
      // every parameter of a reduced-width FCN
      const auto a = oracle::check_gradients(L, C, 4, reduced, seed);
      // sampled entries of every tensor at full width
      const auto b = oracle::check_gradients(L, C, 4, {}, seed + 1000, 40, 1e-5, 0.0);
      for (const auto* r : {&a, &b}) {
        checked += r->checked;
        skipped += r->skipped;
        if (r->worst > worst) {
          worst = r->worst;
          where = r->worst_param + " (L=" + std::to_string(L) + ", C=" + std::to_string(C) + ")";
        }
      }
    }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 120.0,
          "max relative error " + fmt(worst, 3) + " at " + where + " over " + std::to_string(checked) +
              " entries (" + std::to_string(skipped) + " kink-crossing skipped), " + fmt(t, 3) + " s"};
}

Outcome focal_reductions() {
  Rng rng(303, 0);
  double worst = 0.0;
  for (int b = 0; b < 1000; ++b) {
    const int C = 2 + static_cast<int>(rng.below(5));
    const int B = 1 + static_cast<int>(rng.below(64));
    nn::Mat z(C, B);
    std::vector<int> y(static_cast<std::size_t>(B));
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = rng.normal(0.0, 4.0);
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(C)));
    long double ce = 0.0L;
    for (int i = 0; i < B; ++i) {
      long double m = z(0, i), s = 0.0L;
      for (int c = 1; c < C; ++c) m = std::max<long double>(m, z(c, i));
      for (int c = 0; c < C; ++c) s += std::exp(static_cast<long double>(z(c, i)) - m);
      ce += m + std::log(s) - z(y[static_cast<std::size_t>(i)], i);
    }
    ce /= B;
    nn::FocalLossConfig cfg;
    cfg.gamma = 0.0;
    cfg.alpha.assign(static_cast<std::size_t>(C), 1.0);
    worst = std::max(worst, std::abs(nn::focal_loss_from_logits(z, y, cfg).loss - static_cast<double>(ce)));
  }
  nn::Mat p(2, 1);
  p << 0.5, 0.5;
  const double hand = std::abs(nn::focal_loss(p, {0}, nn::FocalLossConfig{}).loss - 0.25 * std::log(2.0));
  return {worst <= 1e-12 && hand <= 1e-12,
          "CE max |diff| " + fmt(worst, 3) + " over 1000 batches; |FL(p=0.5) - 0.25 ln 2| " + fmt(hand, 3)};
}

GlucoseSeries random_label_series(Rng& rng, std::size_t n, double density) {
  GlucoseSeries s{"r", 0, 5, {}};
  std::int64_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = rng.uniform() < density ? rng.uniform(40.0, 70.0) : rng.uniform(70.5, 400.0);
    if (rng.uniform() < 0.02) v = kMissing;
    s.points.push_back({off, v});
    off += rng.uniform() < 0.01 ? 5 * static_cast<std::int64_t>(2 + rng.below(40)) : 5;
  }
  return s;
}

Outcome labeling_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(404, 0);
  int mismatches = 0;
  std::size_t points = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto s = random_label_series(rng, 50 + rng.below(1951), rng.uniform(0.0, 0.2));
    points += s.points.size();
    for (ClassSet cs : {ClassSet::SET_I, ClassSet::SET_II, ClassSet::SET_III}) {
      const auto spec = class_set(cs);
      mismatches += assign_classes(s, spec).labels != oracle::sweep_labels(s, spec);
    }
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 60.0, std::to_string(mismatches) + " of 3000 series/set pairs disagree (" +
                                           std::to_string(points) + " points), " + fmt(t, 3) + " s"};
}

// Observed slots only; gaps injected as runs of absent grid points.
GlucoseSeries gapped_series(Rng& rng) {
  const int n = 200 + static_cast<int>(rng.below(400));
  std::vector<double> v(static_cast<std::size_t>(n));
  double g = rng.uniform(80.0, 250.0), d = 0.0;
  for (auto& x : v) {
    d = 0.8 * d + rng.normal(0.0, 3.0);
    g = std::clamp(g + d, 40.0, 500.0);
    x = g;
  }
  std::vector<bool> keep(v.size(), true);
  for (int k = 0, gaps = 2 + static_cast<int>(rng.below(8)); k < gaps; ++k) {
    const int len = 1 + static_cast<int>(rng.below(40));
    const int at = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 6)));
    for (int i = at; i < std::min(n - 1, at + len); ++i) keep[static_cast<std::size_t>(i)] = false;
  }
  GlucoseSeries s{"g", 0, 5, {}};
  for (int i = 0; i < n; ++i)
    if (keep[static_cast<std::size_t>(i)]) s.points.push_back({5 * i, v[static_cast<std::size_t>(i)]});
  return s;
}

Outcome imputation() {
  Rng rng(505, 0);
  double lin_err = 0.0, knot_err = 0.0, ref_err = 0.0;
  std::size_t lin = 0, stine = 0, open = 0, monotone_checked = 0;
  int bad_range = 0, bad_monotone = 0, bad_open = 0, bad_knots = 0;
  for (int t = 0; t < 500; ++t) {
    const GlucoseSeries s = gapped_series(rng);
    const auto [out, rep] = impute_series(s);
    const auto at = [&](std::int64_t off) -> const GlucosePoint& {
      return out.points[static_cast<std::size_t>((off - out.points.front().offset) / 5)];
    };
    for (const auto& p : s.points)
      if (at(p.offset).glucose != p.glucose) ++bad_knots;
    // observed knots in order, for outer-neighbour lookup
    std::vector<std::int64_t> knots;
    for (const auto& p : s.points) knots.push_back(p.offset);
    auto value_of = [&](std::int64_t off) {
      return std::lower_bound(s.points.begin(), s.points.end(), off,
                              [](const GlucosePoint& p, std::int64_t o) { return p.offset < o; })
          ->glucose;
    };
    for (const auto& g : rep.gaps) {
      const std::int64_t xa = g.start_offset - 5, xb = g.start_offset + g.length_minutes;
      if (g.treatment == GapTreatment::LEFT_OPEN) {
        if (g.length_minutes < 120) continue;  // edge runs
        ++open;
        for (std::int64_t x = g.start_offset; x < xb; x += 5)
          if (at(x).observed()) ++bad_open;
        continue;
      }
      if (g.length_minutes >= 120) ++bad_open;
      const double ya = value_of(xa), yb = value_of(xb);
      if (g.treatment == GapTreatment::LINEAR) {
        ++lin;
        for (std::int64_t x = g.start_offset; x < xb; x += 5) {
          const double line = ya + (yb - ya) * static_cast<double>(x - xa) / static_cast<double>(xb - xa);
          lin_err = std::max(lin_err, std::abs(at(x).glucose - line));
        }
        continue;
      }
      ++stine;
      const auto ia = static_cast<std::size_t>(std::lower_bound(knots.begin(), knots.end(), xa) - knots.begin());
      const std::size_t ib = ia + 1;
      const double secant = (yb - ya) / static_cast<double>(xb - xa);
      std::optional<double> s_before, s_after;
      double pa = secant, pb = secant;
      if (ia > 0) {
        const auto& k0 = s.points[ia - 1];
        s_before = (ya - k0.glucose) / static_cast<double>(xa - k0.offset);
        pa = oracle::stineman_slope(k0.offset, k0.glucose, xa, ya, xb, yb);
      }
      if (ib + 1 < s.points.size()) {
        const auto& k3 = s.points[ib + 1];
        s_after = (k3.glucose - yb) / static_cast<double>(k3.offset - xb);
        pb = oracle::stineman_slope(xa, ya, xb, yb, k3.offset, k3.glucose);
      }
      // knot slopes agreeing with the chord are capped at 3x the chord
      const auto cap = [&](double q) {
        return secant * q > 0.0 && std::abs(q) > 3.0 * std::abs(secant) ? 3.0 * secant : q;
      };
      pa = cap(pa);
      pb = cap(pb);
      // the interpolant passes through both anchors
      knot_err = std::max({knot_err, std::abs(oracle::stineman(xa, xa, ya, pa, xb, yb, pb) - ya),
                           std::abs(oracle::stineman(xb, xa, ya, pa, xb, yb, pb) - yb)});
      std::vector<double> path{ya};
      for (std::int64_t x = g.start_offset; x < xb; x += 5) {
        const double v = at(x).glucose;
        if (!(v >= 40.0 && v <= 500.0)) ++bad_range;
        const double ref = std::clamp(oracle::stineman(x, xa, ya, pa, xb, yb, pb), 40.0, 500.0);
        ref_err = std::max(ref_err, std::abs(v - ref));
        path.push_back(v);
      }
      path.push_back(yb);
      auto sign = [](double d) { return (d > 0.0) - (d < 0.0); };
      const int sg = sign(secant);
      if (sg != 0 && (!s_before || sign(*s_before) == sg) && (!s_after || sign(*s_after) == sg)) {
        ++monotone_checked;
        for (std::size_t i = 1; i < path.size(); ++i)
          if (sg * (path[i] - path[i - 1]) < -1e-9) {
            ++bad_monotone;
            break;
          }
      }
    }
  }
  const bool pass = lin > 0 && stine > 0 && open > 0 && monotone_checked > 0 && lin_err <= 1e-9 &&
                    knot_err <= 1e-9 && ref_err <= 1e-9 && bad_range == 0 && bad_monotone == 0 &&
                    bad_open == 0 && bad_knots == 0;
  return {pass, "(a) " + std::to_string(lin) + " linear gaps, max err " + fmt(lin_err, 3) + "; (b) " +
                    std::to_string(stine) + " Stineman gaps, knot err " + fmt(knot_err, 3) + ", reference err " +
                    fmt(ref_err, 3) + ", " + std::to_string(bad_range) + " out of range, " +
                    std::to_string(bad_monotone) + " of " + std::to_string(monotone_checked) +
                    " same-sign gaps with an interior extremum; (c) " + std::to_string(open) +
                    " gaps >= 120 min, " + std::to_string(bad_open) + " filled; " + std::to_string(bad_knots) +
                    " observed values changed"};
}

Outcome tukey() {
  const std::vector<double> a = {24.5, 23.5, 26.4, 27.1, 29.9};
  const std::vector<double> b = {28.4, 34.2, 29.5, 32.2, 30.1};
  const std::vector<double> c = {26.1, 28.3, 24.3, 26.2, 27.8};
  const auto r = tukey_hsd({{"a", a}, {"b", b}, {"c", c}});
  const auto ref = oracle::hsd({a, b, c}, oracle::kQ3_12);
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    worst = std::max({worst, std::abs(r.pairs[i].mean_diff - ref[i].diff), std::abs(r.pairs[i].ci_lower - ref[i].lo),
                      std::abs(r.pairs[i].ci_upper - ref[i].hi)});

  Rng rng(606, 0);
  int rejected = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::pair<std::string, std::vector<double>>> g;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> v(10000);
      for (auto& x : v) x = rng.normal(150.0, 40.0);
      g.push_back({std::to_string(k), std::move(v)});
    }
    bool any = false;
    for (const auto& p : tukey_hsd(g).pairs) any = any || p.reject_null;
    rejected += any;
  }
  const double rate = rejected / 200.0;
  return {worst <= 1e-6 && rate >= 0.01 && rate <= 0.12,
          "max |diff| vs formula " + fmt(worst, 3) + "; family-wise rejection rate " + fmt(rate, 3) +
              " over 200 trials of three n=10000 groups"};
}

Outcome windowing(const testing_support::Prepared& p) {
  const std::map<int, int> expect{{30, 7}, {45, 10}, {60, 13}, {90, 19}, {120, 25}};
  bool lengths = true;
  for (const auto& [isl, L] : expect) lengths = lengths && window_length(isl, 5) == L;

  bool counts = true;
  for (int isl : {30, 45, 60, 90, 120}) {
    const int L = window_length(isl, 5);
    for (std::size_t n : {std::size_t(L), std::size_t(100), std::size_t(2017)}) {
      GlucoseSeries s{"w", 0, 5, {}};
      for (std::size_t i = 0; i < n; ++i) s.points.push_back({static_cast<std::int64_t>(5 * i), 150.0});
      counts = counts && make_windows(assign_classes(s, class_set(ClassSet::SET_II)), isl, 5).size() ==
                             n - static_cast<std::size_t>(L) + 1;
    }
  }

  const std::int64_t span = static_cast<std::int64_t>(p.windows.length() - 1) * p.windows.rate;
  int overlaps = 0, subjects = 0;
  for (const auto& [id, wins] : windows_by_subject(p.windows.windows)) {
    const auto d = finetune_split(wins);
    if (!d) continue;
    ++subjects;
    // first test window must start after the last train window ends
    if (d->test.front().end_time - span <= d->train.back().end_time) ++overlaps;
  }
  return {lengths && counts && overlaps == 0 && subjects > 0,
          std::string("L counts ") + (lengths ? "match" : "differ") + "; window counts " +
              (counts ? "n-L+1" : "wrong") + "; " + std::to_string(overlaps) + " of " +
              std::to_string(subjects) + " synthetic subjects overlap"};
}

Outcome learnability(const testing_support::Prepared& p, int epochs) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg = gpb_defaults();
  cfg.batch_size = 128;
  cfg.epochs = epochs;
  const auto run = train_population(p.windows, p.plan, Scope{}, cfg);
  const auto& o = run.report.overall;
  const double t = seconds_since(t0);
  return {o.macro_recall >= 0.95 && o.macro_pr_auc >= 0.97 && t < 900.0 && p.plan.all_test().size() == 8 &&
              run.train_subjects.size() == 40,
          std::to_string(run.train_subjects.size()) + " train / " + std::to_string(p.plan.all_test().size()) +
              " test subjects, " + std::to_string(epochs) + " epochs: macro recall " + fmt(o.macro_recall) +
              ", PR-AUC " + fmt(o.macro_pr_auc) + ", " + fmt(t, 3) + " s"};
}

Outcome scope_sensitivity(int epochs) {
  SynthConfig sc;
  sc.seed = 7;
  sc.regimes[0].ramp_shift_minutes = 30;  // children descend earlier
  const auto p = testing_support::prepare(sc, 2);
  TrainConfig cfg = gpb_defaults();
  cfg.batch_size = 128;
  cfg.epochs = epochs;
  const auto gpb = train_population(p.windows, p.plan, Scope{}, cfg);
  const auto aspb = train_population(p.windows, p.plan, Scope{ScopeKind::AGE_GROUP, AgeGroup::G0_13}, cfg);
  const auto rows = compare_scopes(gpb.report, {{AgeGroup::G0_13, aspb.report}});
  const double d = rows.at(0).d_recall;
  return {d >= 0.03, "0-13 macro recall ASPB " + fmt(rows[0].aspb.macro_recall) + " vs GPB " +
                         fmt(rows[0].gpb.macro_recall) + " (delta " + fmt(d) + ")"};
}

Outcome determinism() {
  SynthConfig sc;
  sc.subjects_per_group = {3, 3, 3, 3};
  sc.days = 4;
  sc.seed = 10;
  TrainConfig cfg = gpb_defaults();
  cfg.batch_size = 128;
  cfg.epochs = 1;
  auto run_once = [&](int threads) {
    set_threads(threads);
    const auto p = testing_support::prepare(sc, 1);
    const auto r = train_population(p.windows, p.plan, Scope{}, cfg);
    set_threads(1);
    return std::pair{population_report_to_json(r.report).dump(2), nn::model_to_json(r.model).dump()};
  };
  const auto a = run_once(1), b = run_once(1), c = run_once(4);
  const bool repeat = a == b, threads = a == c;
  return {repeat && threads, std::string("repeat ") + (repeat ? "byte-identical" : "differs") +
                                 "; threads 1 vs 4 " + (threads ? "byte-identical" : "differs") +
                                 " (metrics JSON and model)"};
}

Outcome real_data() {
  const char* env = std::getenv("GLYCONET_DATA_DIR");
  if (!env || !*env) return {true, "not applicable: GLYCONET_DATA_DIR is not set, no real data supplied"};
  const fs::path dir(env);
  Cohort raw = make_cohort(ingest_glucose((dir / "glucose.csv").string()),
                           ingest_subjects((dir / "subjects.csv").string()));
  Cohort clean;
  clean.subjects = raw.subjects;
  for (auto& r : preprocess_all(raw.series, 5)) clean.series.push_back(std::move(r.series));
  const auto labeled = label_all(clean.series, LabelScheme::SET_II);
  const auto dist = class_distribution(labeled, LabelScheme::SET_II);
  std::uint64_t in_classes = 0;
  for (auto c : dist.counts) in_classes += c;
  const double frac = in_classes ? static_cast<double>(dist.counts.at(0)) / static_cast<double>(in_classes) : 0.0;
  const double reference = 5.9 / 18.0;  // class 0 share of the training set, class set II

  WindowSet ws;
  ws.windows = make_all_windows(labeled, clean, 30, 5);
  const SplitPlan plan = select_test_subjects(cohort_summary(clean.series, clean.subjects), kTestSubjectsPerGroup);
  TrainConfig cfg = gpb_defaults();
  const auto run = train_population(ws, plan, Scope{}, cfg);
  testing_support::TempDir out("acceptance_real");
  write_per_group_csv(run.report, out / "per_group.csv");
  const bool schema = fs::exists(out / "per_group.csv") && !run.report.per_group.empty();
  const bool pass = schema && std::abs(frac - reference) <= 0.5 * reference;
  return {pass, "class-0 fraction " + fmt(frac) + " vs " + fmt(reference) + " (+-50%); " +
                    std::to_string(run.report.per_group.size()) + " per-group reports"};
}

}  // namespace

int main() {
  ScopedWarningCapture quiet;
  int failures = 0;
  auto report = [&](int n, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
  };

  report(2, gradients);
  report(3, focal_reductions);
  report(4, labeling_oracle);
  report(5, imputation);
  report(6, tukey);

  std::optional<testing_support::Prepared> cohort;
  auto synth_cohort = [&]() -> const testing_support::Prepared& {
    if (!cohort) {
      SynthConfig sc;
      sc.seed = 7;
      cohort = testing_support::prepare(sc, 2);
    }
    return *cohort;
  };
  report(7, [&] { return windowing(synth_cohort()); });
  report(8, [&] { return learnability(synth_cohort(), 3); });
  cohort.reset();
  report(9, [] { return scope_sensitivity(5); });
  report(10, determinism);
  report(11, real_data);
  return failures == 0 ? 0 : 1;
}
