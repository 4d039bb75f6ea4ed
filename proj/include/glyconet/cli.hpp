#pragma once

// Command-line front end. Exit codes: 0 ok, 1 usage/config, 2 data, 3 runtime.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "glyconet/cohort_stats.hpp"
#include "glyconet/experiments.hpp"
#include "glyconet/ingestion.hpp"
#include "glyconet/labeling.hpp"
#include "glyconet/log.hpp"
#include "glyconet/parallel.hpp"
#include "glyconet/preprocess.hpp"
#include "glyconet/synth.hpp"
#include "glyconet/windowing.hpp"

namespace glyconet::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

// Flags shared by every subcommand. Values from --config fill in whatever
// was not given on the command line.
struct Common {
  std::string config_path;
  std::string artifact_dir = "artifacts";
  std::string data_dir;
  std::uint64_t seed = 48;
  int threads = 1;
  nlohmann::json file = nlohmann::json::object();

  CLI::App* active = nullptr;  // the subcommand that ran

  CLI::Option* opt(const std::string& name) const { return active->get_option_no_throw(name); }

  std::string path(const std::string& rel) const { return (fs::path(artifact_dir) / rel).string(); }
};

inline nlohmann::json read_json_file(const std::string& path) {
  if (!fs::exists(path)) throw DataError("'" + path + "' not found");
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline void require_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("input directory '" + dir + "' not found");
}

template <typename T>
void from_file(const CLI::Option* opt, T& var, const nlohmann::json& file, const char* key) {
  if (opt && opt->count() > 0) return;
  if (!file.contains(key)) return;
  try {
    var = file.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline void finish_common(Common& c) {
  if (!c.config_path.empty()) {
    c.file = read_json_file(c.config_path);
    if (!c.file.is_object()) throw ConfigError(c.config_path + ": expected a JSON object");
  }
  from_file(c.opt("--artifact-dir"), c.artifact_dir, c.file, "artifact_dir");
  from_file(c.opt("--data-dir"), c.data_dir, c.file, "data_dir");
  from_file(c.opt("--seed"), c.seed, c.file, "seed");
  from_file(c.opt("--threads"), c.threads, c.file, "threads");
  if (c.data_dir.empty())
    if (const char* env = std::getenv("GLYCONET_DATA_DIR"); env && *env) c.data_dir = env;
  if (c.threads < 1) throw ConfigError("--threads must be at least 1");
  set_threads(c.threads);
}

inline void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON configuration file; flags override its values");
  app->add_option("--artifact-dir", c.artifact_dir, "Root of the artifact layout")
                       ->capture_default_str();
  app->add_option("--data-dir", c.data_dir,
                               "Raw data directory (default: $GLYCONET_DATA_DIR)");
  app->add_option("--seed", c.seed, "Seed for every random stream")->capture_default_str();
  app->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")
                      ->capture_default_str();
}

inline std::string or_default(const std::string& v, const std::string& d) { return v.empty() ? d : v; }

inline void write_text(const std::string& path, const std::string& s) {
  auto out = csv::open_output(path);
  out << s;
}

inline void write_gaps_csv(const std::vector<GlucoseSeries>& series, const std::vector<PreprocessResult>& pre,
                           const std::string& path) {
  auto out = csv::open_output(path);
  out << "subject_id,start_offset,length_minutes,treatment\n";
  for (std::size_t i = 0; i < pre.size(); ++i)
    for (const auto& g : pre[i].gaps.gaps)
      out << series[i].subject_id << ',' << g.start_offset << ',' << g.length_minutes << ','
          << to_string(g.treatment) << '\n';
}

inline std::vector<LabeledSeries> labeled_from_artifact(const Artifact& a, const std::string& dir) {
  if (!a.labels) throw DataError("'" + dir + "' carries no labels; run the label subcommand first");
  std::vector<LabeledSeries> out;
  for (std::size_t i = 0; i < a.cohort.series.size(); ++i)
    out.push_back({a.cohort.series[i], a.labels->labels[i], a.labels->scheme});
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (auto f : csv::split(s)) {
    auto v = csv::parse_int(f);
    if (!v) throw ConfigError("bad integer '" + std::string(f) + "' in list '" + s + "'");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

// Training flags; unset ones fall back to the config file, then the
// protocol defaults of the scope.
struct TrainFlags {
  int epochs = 0, batch = 0, ft_epochs = 0;
  double lr = 0.0, gamma = 0.0, ft_lr = 0.0;
  std::string weights;

  void add(CLI::App* app) {
    app->add_option("--epochs", epochs, "Training epochs (GPB/ASPB default 100)");
    app->add_option("--batch-size", batch, "Batch size (GPB 512, ASPB 264)");
    app->add_option("--lr", lr, "Adam learning rate (default 0.001)");
    app->add_option("--gamma", gamma, "Focal loss gamma (default 2)");
    app->add_option("--class-weights", weights, "balanced or none (default balanced)")
        ->check(CLI::IsMember({"balanced", "none"}));
    app->add_option("--finetune-epochs", ft_epochs, "Fine-tuning epochs (default 5)");
    app->add_option("--finetune-lr", ft_lr, "Fine-tuning learning rate (default 0.0001)");
  }

  TrainConfig resolve(const Common& c, const Scope& scope, const WindowSet& ws) const {
    auto given = [&](const char* name) { return c.opt(name) && c.opt(name)->count() > 0; };
    TrainConfig cfg = scope.kind == ScopeKind::GLOBAL ? gpb_defaults() : aspb_defaults();
    cfg = config_from_json(c.file, cfg);
    cfg.seed = c.seed;
    cfg.scheme = ws.scheme;
    cfg.isl_minutes = ws.isl_minutes;
    cfg.rate = ws.rate;
    if (given("--epochs")) cfg.epochs = epochs;
    if (given("--batch-size")) cfg.batch_size = static_cast<std::size_t>(batch);
    if (given("--lr")) cfg.adam.lr = lr;
    if (given("--gamma")) cfg.gamma = gamma;
    if (given("--class-weights")) cfg.weighted = weights == "balanced";
    if (given("--finetune-epochs")) cfg.finetune_epochs = ft_epochs;
    if (given("--finetune-lr")) cfg.finetune_lr = ft_lr;
    if (cfg.batch_size < 2) throw ConfigError("--batch-size must be at least 2");
    if (cfg.epochs < 0 || cfg.finetune_epochs < 0) throw ConfigError("epochs must be non-negative");
    return cfg;
  }
};

inline nlohmann::json input_hashes(const std::vector<std::string>& paths) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : paths)
    if (fs::exists(p)) j[p] = hash_file(p);
  return j;
}

inline void write_report_dir(const std::string& dir, const PopulationReport& r) {
  fs::create_directories(dir);
  write_text((fs::path(dir) / "metrics.json").string(), population_report_to_json(r).dump(2) + "\n");
  write_report_csv(r.overall, (fs::path(dir) / "metrics.csv").string());
  write_confusion_csv(r.overall.confusion, (fs::path(dir) / "confusion.csv").string());
  write_per_group_csv(r, (fs::path(dir) / "per_group.csv").string());
}

inline PopulationReport load_report(const std::string& p) {
  const std::string path = fs::is_directory(p) ? (fs::path(p) / "metrics.json").string() : p;
  return population_report_from_json(read_json_file(path));
}

inline std::string scope_dir_name(const Scope& s) {
  return s.kind == ScopeKind::GLOBAL ? "gpb" : "aspb_" + to_string(s.group);
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"Hypoglycemia classification from CGM data: preprocessing, labelling, FCN training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kPipelineVersion);
  Common common;
  std::function<void()> action;

  // ingest
  std::string glucose_csv, subjects_csv, out_dir, in_dir;
  int rate = 5;
  {
    auto* s = app.add_subcommand("ingest", "Read glucose/subject CSVs into the canonical artifact");
    add_common(s, common);
    s->add_option("--glucose", glucose_csv, "Glucose CSV (default: <data-dir>/glucose.csv)");
    s->add_option("--subjects", subjects_csv, "Subjects CSV (default: <data-dir>/subjects.csv)");
    s->add_option("--rate", rate, "Sampling rate recorded in the artifact")->capture_default_str();
    s->add_option("--out", out_dir, "Output directory (default: <artifact-dir>/raw)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        const std::string g = or_default(glucose_csv, common.data_dir.empty() ? "" : (fs::path(common.data_dir) / "glucose.csv").string());
        const std::string sj = or_default(subjects_csv, common.data_dir.empty() ? "" : (fs::path(common.data_dir) / "subjects.csv").string());
        if (g.empty() || sj.empty()) throw ConfigError("give --glucose/--subjects or a data dir");
        if (!fs::exists(g)) throw DataError("glucose file '" + g + "' not found");
        if (!fs::exists(sj)) throw DataError("subjects file '" + sj + "' not found");
        const std::string out = or_default(out_dir, common.path("raw"));
        Cohort c = make_cohort(ingest_glucose(g, rate), ingest_subjects(sj));
        write_artifact(out, c, rate, nullptr, {{"inputs", input_hashes({g, sj})}});
        write_group_summary_csv(cohort_summary(c.series, c.subjects),
                                (fs::path(out) / "group_summary.csv").string());
        std::cout << "ingested " << c.series.size() << " series, " << c.subjects.size() << " subjects -> " << out << '\n';
      };
    });
  }

  // synth
  std::string synth_config;
  int days = 0, per_group = -1, shift = -1;
  {
    auto* s = app.add_subcommand("synth", "Generate a synthetic cohort with known episodes");
    add_common(s, common);
    s->add_option("--synth-config", synth_config, "JSON generator parameters (or key 'synth' in --config)");
    s->add_option("--days", days, "Days per subject (default 30)");
    s->add_option("--subjects-per-group", per_group, "Subjects in each age group (default 12)");
    s->add_option("--child-ramp-shift", shift, "Extra minutes of pre-event descent for 0-13 (default 0)");
    s->add_option("--out", out_dir, "Output directory (default: <artifact-dir>/raw)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        SynthConfig sc;
        if (common.file.contains("synth")) sc = synth_config_from_json(common.file.at("synth"), sc);
        if (!synth_config.empty()) sc = synth_config_from_json(read_json_file(synth_config), sc);
        sc.seed = common.seed;
        if (days > 0) sc.days = days;
        if (per_group >= 0) sc.subjects_per_group.fill(per_group);
        if (shift >= 0) sc.regimes[0].ramp_shift_minutes = shift;
        const std::string out = or_default(out_dir, common.path("raw"));
        const SynthCohort sy = generate_cohort(sc);
        write_artifact(out, sy.cohort, 5, nullptr, {{"synth", synth_config_to_json(sc)}});
        write_episodes_csv(sy.episodes, (fs::path(out) / "episodes.csv").string());
        write_text((fs::path(out) / "synth_config.json").string(), synth_config_to_json(sc).dump(2) + "\n");
        std::cout << "generated " << sy.cohort.series.size() << " subjects, " << sy.episodes.size()
                  << " episodes -> " << out << '\n';
      };
    });
  }

  // preprocess
  {
    auto* s = app.add_subcommand("preprocess", "Resample, remove outliers, clamp and impute");
    add_common(s, common);
    s->add_option("--in", in_dir, "Raw artifact directory (default: <artifact-dir>/raw)");
    s->add_option("--out", out_dir, "Output directory (default: <in>/cleaned)");
    s->add_option("--rate", rate, "Target grid in minutes")->capture_default_str()->check(CLI::IsMember({5, 15}));
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        from_file(common.opt("--rate"), rate, common.file, "rate_minutes");
        if (rate != 5 && rate != 15) throw ConfigError("rate must be 5 or 15");
        const std::string in = or_default(in_dir, common.path("raw"));
        require_dir(in);
        const std::string out = or_default(out_dir, (fs::path(in) / "cleaned").string());
        Artifact a = read_artifact(in);
        const auto pre = preprocess_all(a.cohort.series, rate);
        Cohort c;
        c.subjects = a.cohort.subjects;
        for (const auto& p : pre) c.series.push_back(p.series);
        write_artifact(out, c, rate);
        write_gaps_csv(c.series, pre, (fs::path(out) / "gaps.csv").string());
        write_group_summary_csv(cohort_summary(c.series, c.subjects),
                                (fs::path(out) / "group_summary.csv").string());
        std::cout << "cleaned " << c.series.size() << " series -> " << out << '\n';
      };
    });
  }

  // stats
  std::string per_age_out, tukey_out, edges = "14,21,45";
  {
    auto* s = app.add_subcommand("stats", "Cohort statistics");
    s->require_subcommand(1);
    auto* sum = s->add_subcommand("summary", "Per-age CGM summary");
    add_common(sum, common);
    sum->add_option("--in", in_dir, "Cleaned artifact (default: <artifact-dir>/raw/cleaned)");
    sum->add_option("--per-age", per_age_out, "Output CSV, one row per age")->required();
    sum->callback([&, sum] {
      common.active = sum;
      action = [&] {
        const std::string in = or_default(in_dir, common.path("raw/cleaned"));
        require_dir(in);
        Artifact a = read_artifact(in);
        write_age_summary_csv(summary_per_age(a.cohort.series, a.cohort.subjects), per_age_out);
      };
    });
    auto* tk = s->add_subcommand("tukey", "Tukey HSD between the age bins cut at --edges");
    add_common(tk, common);
    tk->add_option("--in", in_dir, "Cleaned artifact (default: <artifact-dir>/raw/cleaned)");
    tk->add_option("--edges", edges, "Comma-separated lower ages of bins 2..n")->capture_default_str();
    tk->add_option("--out", tukey_out, "Output CSV, one row per pair")->required();
    tk->callback([&, tk] {
      common.active = tk;
      action = [&] {
        const std::string in = or_default(in_dir, common.path("raw/cleaned"));
        require_dir(in);
        Artifact a = read_artifact(in);
        const auto ev = evaluate_split(a.cohort.series, a.cohort.subjects, parse_int_list(edges));
        if (!ev.feasible) {
          std::string bins;
          for (const auto& b : ev.empty_bins) bins += (bins.empty() ? "" : ", ") + b;
          throw DataError("split infeasible: empty bins " + bins);
        }
        if (ev.tukey) write_tukey_csv(*ev.tukey, tukey_out);
        else write_text(tukey_out, "group_a,group_b,mean_diff,ci_lower,ci_upper,reject_null\n");
        std::cout << "all pairs significant: " << (ev.all_pairs_significant ? "yes" : "no") << '\n';
      };
    });
  }

  // label
  std::string class_set = "II";
  bool binary = false;
  {
    auto* s = app.add_subcommand("label", "Assign class labels to every point");
    add_common(s, common);
    s->add_option("--in", in_dir, "Cleaned artifact (default: <artifact-dir>/raw/cleaned)");
    s->add_option("--out", out_dir, "Output directory (default: same as --in)");
    s->add_option("--class-set", class_set, "Class set I, II or III")->capture_default_str();
    s->add_flag("--binary", binary, "Binary RISK / NO_RISK labels instead of a class set");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        from_file(common.opt("--class-set"), class_set, common.file, "class_set");
        const std::string in = or_default(in_dir, common.path("raw/cleaned"));
        require_dir(in);
        const std::string out = or_default(out_dir, in);
        const LabelScheme scheme = binary ? LabelScheme::BINARY : scheme_of(parse_class_set(class_set));
        Artifact a = read_artifact(in);
        const auto labeled = label_all(a.cohort.series, scheme);
        SeriesLabels sl{scheme, {}};
        for (const auto& l : labeled) sl.labels.push_back(l.labels);
        write_artifact(out, a.cohort, a.sampling_rate_minutes, &sl);
        write_class_distribution_csv(class_distribution(labeled, scheme),
                                     (fs::path(out) / "class_distribution.csv").string());
        std::cout << "labelled " << labeled.size() << " series (class set " << to_string(scheme) << ") -> " << out << '\n';
      };
    });
  }

  // split
  std::size_t test_per_group = kTestSubjectsPerGroup;
  {
    auto* s = app.add_subcommand("split", "Hold out test subjects per age group");
    add_common(s, common);
    s->add_option("--in", in_dir, "Cleaned artifact (default: <artifact-dir>/raw/cleaned)");
    s->add_option("--per-group", test_per_group, "Test subjects per age group")->capture_default_str();
    s->add_option("--out", out_dir, "Output JSON (default: <artifact-dir>/split.json)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        const std::string in = or_default(in_dir, common.path("raw/cleaned"));
        require_dir(in);
        const std::string out = or_default(out_dir, common.path("split.json"));
        Artifact a = read_artifact(in);
        const SplitPlan plan = select_test_subjects(cohort_summary(a.cohort.series, a.cohort.subjects), test_per_group);
        if (auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
        write_text(out, split_to_json(plan).dump(2) + "\n");
        std::cout << "split: " << plan.all_test().size() << " test, " << plan.all_train().size() << " train -> " << out << '\n';
      };
    });
  }

  // windows
  int isl = 30;
  {
    auto* s = app.add_subcommand("windows", "Cut labelled series into model inputs");
    add_common(s, common);
    s->add_option("--in", in_dir, "Labelled artifact (default: <artifact-dir>/raw/cleaned)");
    s->add_option("--isl", isl, "Input sequence length in minutes")->capture_default_str();
    s->add_option("--out", out_dir, "Output directory (default: <artifact-dir>/windows)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        from_file(common.opt("--isl"), isl, common.file, "isl_minutes");
        const std::string in = or_default(in_dir, common.path("raw/cleaned"));
        require_dir(in);
        const std::string out = or_default(out_dir, common.path("windows"));
        Artifact a = read_artifact(in);
        const auto labeled = labeled_from_artifact(a, in);
        WindowSet ws;
        ws.isl_minutes = isl;
        ws.rate = a.sampling_rate_minutes;
        ws.scheme = a.labels->scheme;
        check_window_config(isl, ws.rate);
        ws.windows = make_all_windows(labeled, a.cohort, isl, ws.rate, ws.scaler);
        write_windows(out, ws);
        std::cout << ws.windows.size() << " windows of length " << ws.length() << " -> " << out << '\n';
      };
    });
  }

  // train / evaluate / finetune
  std::string windows_dir, split_path, scope_str = "global", model_path;
  TrainFlags tflags;
  auto add_run_inputs = [&](CLI::App* s) {
    s->add_option("--windows", windows_dir, "Windows directory (default: <artifact-dir>/windows)");
    s->add_option("--split", split_path, "Split JSON (default: <artifact-dir>/split.json)");
    s->add_option("--scope", scope_str, "global or age:<group>, e.g. age:0-13")->capture_default_str();
  };
  struct Loaded {
    WindowSet ws;
    SplitPlan plan;
    Scope scope;
    std::string windows_dir, split_path;
  };
  auto load_inputs = [&]() {
    Loaded l;
    l.windows_dir = or_default(windows_dir, common.path("windows"));
    l.split_path = or_default(split_path, common.path("split.json"));
    from_file(common.opt("--scope"), scope_str, common.file, "scope");
    l.scope = parse_scope(scope_str);
    require_dir(l.windows_dir);
    l.ws = read_windows(l.windows_dir);
    l.plan = split_from_json(read_json_file(l.split_path));
    return l;
  };
  auto hashes_of = [](const Loaded& l) {
    return input_hashes({(fs::path(l.windows_dir) / "windows.csv").string(),
                         (fs::path(l.windows_dir) / "windows.json").string(), l.split_path});
  };
  {
    auto* s = app.add_subcommand("train", "Train a population model (GPB or ASPB)");
    add_common(s, common);
    add_run_inputs(s);
    tflags.add(s);
    s->add_option("--out", out_dir, "Run directory (default: <artifact-dir>/runs/<gpb|aspb_group>)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        Loaded l = load_inputs();
        const TrainConfig cfg = tflags.resolve(common, l.scope, l.ws);
        const std::string out = or_default(out_dir, common.path("runs/" + scope_dir_name(l.scope)));
        const PopulationRun r = train_population(l.ws, l.plan, l.scope, cfg);
        write_population_run(out, r, {{"inputs", hashes_of(l)}});
        std::cout << r.scope.name() << ": macro recall " << r.report.overall.macro_recall << ", PR-AUC "
                  << r.report.overall.macro_pr_auc << " -> " << out << '\n';
      };
    });
  }
  {
    auto* s = app.add_subcommand("evaluate", "Evaluate a saved model on personal test portions");
    add_common(s, common);
    add_run_inputs(s);
    s->add_option("--model", model_path, "model.json")->required();
    s->add_option("--out", out_dir, "Output directory")->required();
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        Loaded l = load_inputs();
        if (!fs::exists(model_path)) throw DataError("model '" + model_path + "' not found");
        nn::FcnModel m = nn::load_model(model_path);
        const PopulationReport r = evaluate_population(m, l.ws, l.plan, l.scope);
        write_report_dir(out_dir, r);
        nlohmann::json man{{"pipeline_version", kPipelineVersion},
                           {"created_utc", created_utc_now()},
                           {"scope", l.scope.name()},
                           {"inputs", hashes_of(l)}};
        man["inputs"][model_path] = hash_file(model_path);
        write_text((fs::path(out_dir) / "run_manifest.json").string(), man.dump(2) + "\n");
        std::cout << "macro recall " << r.overall.macro_recall << " -> " << out_dir << '\n';
      };
    });
  }
  {
    auto* s = app.add_subcommand("finetune", "Fine-tune a population model per test subject");
    add_common(s, common);
    add_run_inputs(s);
    tflags.add(s);
    s->add_option("--model", model_path, "Base model.json")->required();
    s->add_option("--out", out_dir, "Output directory")->required();
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        Loaded l = load_inputs();
        if (!fs::exists(model_path)) throw DataError("model '" + model_path + "' not found");
        nn::FcnModel base = nn::load_model(model_path);
        const TrainConfig cfg = tflags.resolve(common, l.scope, l.ws);
        const FinetuneRun r = finetune(base, l.ws, l.plan, l.scope, cfg);
        const PopulationReport before = evaluate_population(base, l.ws, l.plan, l.scope);
        write_report_dir(out_dir, r.report);
        write_text((fs::path(out_dir) / "base_metrics.json").string(),
                   population_report_to_json(before).dump(2) + "\n");
        nlohmann::json man{{"pipeline_version", kPipelineVersion},
                           {"created_utc", created_utc_now()},
                           {"scope", l.scope.name()},
                           {"config", config_to_json(cfg)},
                           {"seeds", {{"shuffle", cfg.seed}}},
                           {"skipped_subjects", r.skipped},
                           {"inputs", hashes_of(l)}};
        man["inputs"][model_path] = hash_file(model_path);
        write_text((fs::path(out_dir) / "run_manifest.json").string(), man.dump(2) + "\n");
        std::cout << "fine-tuned macro recall " << r.report.overall.macro_recall << " (base "
                  << before.overall.macro_recall << ") -> " << out_dir << '\n';
      };
    });
  }

  // ablate
  std::string grid_path, seeds_str = "48,0,1234";
  double fraction = 0.1;
  int ab_epochs = -1;
  {
    auto* s = app.add_subcommand("ablate", "Run the ablation grid on a subject subset");
    add_common(s, common);
    s->add_option("--in", in_dir, "Raw (uncleaned) artifact (default: <artifact-dir>/raw)");
    s->add_option("--split", split_path, "Split JSON (default: <artifact-dir>/split.json)");
    s->add_option("--grid", grid_path, "JSON array of cells (default: the standard 13-cell grid)");
    s->add_option("--seeds", seeds_str, "Comma-separated seeds averaged per cell")->capture_default_str();
    s->add_option("--fraction", fraction, "Share of train subjects in the subset")->capture_default_str();
    s->add_option("--epochs", ab_epochs, "Epochs per cell (default 20)");
    s->add_option("--out", out_dir, "Output directory (default: <artifact-dir>/ablation)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        const std::string in = or_default(in_dir, common.path("raw"));
        require_dir(in);
        const std::string sp = or_default(split_path, common.path("split.json"));
        const std::string out = or_default(out_dir, common.path("ablation"));
        TrainConfig base = config_from_json(common.file, ablation_defaults());
        if (ab_epochs >= 0) base.epochs = ab_epochs;
        std::vector<std::uint64_t> seeds;
        for (int v : parse_int_list(seeds_str)) seeds.push_back(static_cast<std::uint64_t>(v));
        if (seeds.empty()) throw ConfigError("--seeds is empty");
        const auto grid = grid_path.empty() ? default_ablation_grid() : ablation_grid_from_json(read_json_file(grid_path));
        Artifact a = read_artifact(in);
        const SplitPlan plan = split_from_json(read_json_file(sp));
        const AblationSubset sub = ablation_subset(plan, common.seed, fraction);
        const auto rows = run_ablation(a.cohort, sub, grid, base, seeds);
        fs::create_directories(out);
        write_ablation_csv(rows, (fs::path(out) / "ablation.csv").string());
        nlohmann::json man{{"pipeline_version", kPipelineVersion},
                           {"created_utc", created_utc_now()},
                           {"config", config_to_json(base)},
                           {"subset_seed", sub.seed},
                           {"seeds", seeds},
                           {"train_subjects", sub.train},
                           {"test_subjects", sub.test},
                           {"inputs", input_hashes({(fs::path(in) / "manifest.json").string(), sp})}};
        nlohmann::json failures = nlohmann::json::object();
        for (const auto& r : rows)
          if (!r.ok) failures[r.cell.name] = r.error;
        man["failed_cells"] = failures;
        write_text((fs::path(out) / "run_manifest.json").string(), man.dump(2) + "\n");
        std::cout << rows.size() << " cells (" << failures.size() << " failed) -> " << out << '\n';
        if (failures.size() == rows.size()) throw DataError("every ablation cell failed");
      };
    });
  }

  // compare
  std::string gpb_path;
  std::vector<std::string> aspb_paths;
  {
    auto* s = app.add_subcommand("compare", "Per-group GPB vs ASPB table with deltas");
    add_common(s, common);
    s->add_option("--gpb", gpb_path, "GPB run directory or metrics.json")->required();
    s->add_option("--aspb", aspb_paths, "ASPB run directories or metrics.json files")->required();
    s->add_option("--out", out_dir, "Output directory (default: <artifact-dir>/compare)");
    s->callback([&, s] {
      common.active = s;
      action = [&] {
        const PopulationReport g = load_report(gpb_path);
        std::map<AgeGroup, PopulationReport> aspb;
        for (const auto& p : aspb_paths) {
          PopulationReport r = load_report(p);
          const Scope sc = parse_scope(r.scope);
          if (sc.kind != ScopeKind::AGE_GROUP) throw DataError("'" + p + "' is not an age-group report");
          aspb[sc.group] = std::move(r);
        }
        const auto rows = compare_scopes(g, aspb);
        const std::string out = or_default(out_dir, common.path("compare"));
        fs::create_directories(out);
        write_comparison_csv(rows, (fs::path(out) / "comparison.csv").string());
        write_extremes_csv(rows, (fs::path(out) / "best_worst.csv").string());
        std::cout << rows.size() << " groups compared -> " << out << '\n';
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return kExitUsage;
  }
  finish_common(common);
  action();
  return kExitOk;
}

inline int dispatch(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace glyconet::cli
