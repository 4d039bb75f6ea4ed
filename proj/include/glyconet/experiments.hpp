#pragma once

// Training protocols: population models over a scope (all train subjects,
// or one age group), per-subject fine-tuning, the ablation grid and the
// GPB / ASPB comparison.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/uuid/detail/sha1.hpp>
#include <json.hpp>

#include "glyconet/csv.hpp"
#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/ingestion.hpp"
#include "glyconet/labeling.hpp"
#include "glyconet/log.hpp"
#include "glyconet/metrics.hpp"
#include "glyconet/nn/fcn.hpp"
#include "glyconet/preprocess.hpp"
#include "glyconet/rng.hpp"
#include "glyconet/windowing.hpp"

namespace glyconet {

// ---------------------------------------------------------------------------
// Configuration

enum class ScopeKind { GLOBAL, AGE_GROUP };

struct Scope {
  ScopeKind kind = ScopeKind::GLOBAL;
  AgeGroup group = AgeGroup::UNKNOWN;

  std::string name() const { return kind == ScopeKind::GLOBAL ? "global" : "age:" + to_string(group); }
  bool includes(AgeGroup g) const { return kind == ScopeKind::GLOBAL || g == group; }
};

inline Scope parse_scope(std::string_view s) {
  if (s == "global" || s == "GLOBAL") return {};
  if (s.substr(0, 4) == "age:") {
    const AgeGroup g = parse_age_group(s.substr(4));
    if (g == AgeGroup::UNKNOWN) throw ConfigError("scope age:unknown is not trainable");
    return {ScopeKind::AGE_GROUP, g};
  }
  throw ConfigError("unknown scope '" + std::string(s) + "' (global or age:<group>)");
}

struct TrainConfig {
  LabelScheme scheme = LabelScheme::SET_II;
  int isl_minutes = 30;
  int rate = 5;
  std::size_t batch_size = 512;
  int epochs = 100;
  std::uint64_t seed = 48;
  double gamma = 2.0;
  bool weighted = true;  // balanced focal-loss alpha from training label counts
  nn::AdamConfig adam;
  nn::FcnArchitecture arch;
  int finetune_epochs = 5;
  double finetune_lr = 1e-4;
};

inline const std::vector<std::uint64_t> kAblationSeeds{48, 0, 1234};

inline TrainConfig gpb_defaults() { return {}; }

inline TrainConfig aspb_defaults() {
  TrainConfig c;
  c.batch_size = 264;
  return c;
}

inline TrainConfig ablation_defaults() {
  TrainConfig c;
  c.batch_size = 128;
  c.epochs = 20;
  return c;
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["class_set"] = to_string(c.scheme);
  j["isl_minutes"] = c.isl_minutes;
  j["rate_minutes"] = c.rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["focal_gamma"] = c.gamma;
  j["class_weights"] = c.weighted ? "balanced" : "none";
  j["optimizer"] = {{"name", "adam"},
                    {"lr", c.adam.lr},
                    {"beta1", c.adam.beta1},
                    {"beta2", c.adam.beta2},
                    {"eps", c.adam.eps}};
  j["channels"] = c.arch.channels;
  j["kernels"] = c.arch.kernels;
  j["finetune_epochs"] = c.finetune_epochs;
  j["finetune_lr"] = c.finetune_lr;
  return j;
}

// Keys absent from j keep the values of `c`.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    if (j.contains("class_set")) c.scheme = parse_label_scheme(j.at("class_set").get<std::string>());
    c.isl_minutes = j.value("isl_minutes", c.isl_minutes);
    c.rate = j.value("rate_minutes", c.rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.gamma = j.value("focal_gamma", c.gamma);
    if (j.contains("class_weights")) {
      const auto w = j.at("class_weights").get<std::string>();
      if (w != "balanced" && w != "none") throw ConfigError("class_weights must be balanced or none");
      c.weighted = w == "balanced";
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.adam.lr = o.value("lr", c.adam.lr);
      c.adam.beta1 = o.value("beta1", c.adam.beta1);
      c.adam.beta2 = o.value("beta2", c.adam.beta2);
      c.adam.eps = o.value("eps", c.adam.eps);
    }
    if (j.contains("channels")) c.arch.channels = j.at("channels").get<std::vector<int>>();
    if (j.contains("kernels")) c.arch.kernels = j.at("kernels").get<std::vector<int>>();
    c.finetune_epochs = j.value("finetune_epochs", c.finetune_epochs);
    c.finetune_lr = j.value("finetune_lr", c.finetune_lr);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (c.epochs < 0 || c.finetune_epochs < 0) throw ConfigError("epochs must be non-negative");
  return c;
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string git_blob_hash(const std::string& content) {
  boost::uuids::detail::sha1 h;
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  h.process_bytes(header.data(), header.size());
  h.process_bytes(content.data(), content.size());
  unsigned int digest[5];
  h.get_digest(digest);
  char buf[41];
  for (int i = 0; i < 5; ++i) std::snprintf(buf + 8 * i, 9, "%08x", digest[i]);
  return std::string(buf, 40);
}

inline std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_hash(content);
}

inline std::string windows_fingerprint(const std::vector<const WindowSample*>& ws) {
  std::string s;
  for (const auto* w : ws) {
    s += w->subject_id;
    s += ',' + std::to_string(w->end_time) + ',' + std::to_string(w->label);
    for (double f : w->features) s += ',' + csv::format_double(f);
    s += '\n';
  }
  return git_blob_hash(s);
}

// ---------------------------------------------------------------------------
// Training loop

inline bool trainable_label(Label l, int classes) { return l >= 0 && l < classes; }

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<std::uint64_t> class_counts;
  std::vector<double> alpha;
  std::size_t samples = 0;
};

// Mini-batch Adam over `data` (labels must be trainable). Batches follow a
// per-epoch shuffle drawn from `shuffle_seed`; a trailing batch of one
// sample is merged into the previous batch.
inline TrainLog train_model(nn::FcnModel& m, const std::vector<const WindowSample*>& data,
                            const TrainConfig& cfg, int epochs, double lr,
                            std::uint64_t shuffle_seed) {
  TrainLog log;
  log.samples = data.size();
  log.class_counts.assign(static_cast<std::size_t>(m.classes), 0);
  for (const auto* w : data) {
    if (!trainable_label(w->label, m.classes))
      throw InternalError("train_model: label " + std::to_string(w->label) + " not trainable");
    ++log.class_counts[static_cast<std::size_t>(w->label)];
  }
  nn::FocalLossConfig loss;
  loss.gamma = cfg.gamma;
  loss.alpha = cfg.weighted ? nn::balanced_alpha(log.class_counts)
                            : std::vector<double>(static_cast<std::size_t>(m.classes), 1.0);
  log.alpha = loss.alpha;
  if (epochs == 0) return log;
  if (data.size() < 2) throw DataError("training needs at least 2 windows");

  auto params = nn::parameters(m);
  nn::AdamState state;
  nn::AdamConfig adam = cfg.adam;
  adam.lr = lr;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(shuffle_seed, 0x7368'0000ULL + static_cast<std::uint64_t>(m.epochs_trained));
    rng.shuffle(order);
    double total = 0.0;
    std::size_t lo = 0;
    while (lo < order.size()) {
      std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      if (order.size() - hi == 1) hi = order.size();
      std::vector<const std::vector<double>*> rows;
      std::vector<int> labels;
      for (std::size_t i = lo; i < hi; ++i) {
        rows.push_back(&data[order[i]]->features);
        labels.push_back(data[order[i]]->label);
      }
      nn::ForwardCache cache;
      nn::forward(m, nn::pack_batch(rows, m.length), rows.size(), nn::Mode::TRAIN, &cache);
      auto br = nn::backward(m, cache, labels, loss);
      try {
        nn::adam_step(params, br.grads, state, adam);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) +
                            ", batch starting at sample " + std::to_string(lo));
      }
      total += br.loss * static_cast<double>(hi - lo);
      lo = hi;
    }
    ++m.epochs_trained;
    log.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return log;
}

// ---------------------------------------------------------------------------
// Reports

struct SubjectPredictions {
  std::string subject_id;
  AgeGroup group = AgeGroup::UNKNOWN;
  std::vector<int> truth;
  std::vector<std::vector<double>> probs;
};

struct SubjectReport {
  std::string subject_id;
  AgeGroup group = AgeGroup::UNKNOWN;
  MetricsReport metrics;
};

struct PopulationReport {
  std::string scope;
  int classes = 0;
  MetricsReport overall;
  std::map<AgeGroup, MetricsReport> per_group;
  std::vector<SubjectReport> per_subject;
  std::map<AgeGroup, std::vector<std::string>> test_subjects;
};

inline PopulationReport build_report(const std::string& scope, int classes,
                                     const std::vector<SubjectPredictions>& preds) {
  PopulationReport r;
  r.scope = scope;
  r.classes = classes;
  std::vector<int> all_truth;
  std::vector<std::vector<double>> all_probs;
  std::map<AgeGroup, std::pair<std::vector<int>, std::vector<std::vector<double>>>> groups;
  for (const auto& p : preds) {
    r.test_subjects[p.group].push_back(p.subject_id);
    all_truth.insert(all_truth.end(), p.truth.begin(), p.truth.end());
    all_probs.insert(all_probs.end(), p.probs.begin(), p.probs.end());
    auto& g = groups[p.group];
    g.first.insert(g.first.end(), p.truth.begin(), p.truth.end());
    g.second.insert(g.second.end(), p.probs.begin(), p.probs.end());
    r.per_subject.push_back({p.subject_id, p.group, evaluate_predictions(p.truth, p.probs, classes)});
  }
  for (auto& [g, ids] : r.test_subjects) std::sort(ids.begin(), ids.end());
  r.overall = evaluate_predictions(all_truth, all_probs, classes);
  for (const auto& [g, tp] : groups) r.per_group[g] = evaluate_predictions(tp.first, tp.second, classes);
  return r;
}

inline nlohmann::json population_report_to_json(const PopulationReport& r) {
  nlohmann::json j;
  j["scope"] = r.scope;
  j["classes"] = r.classes;
  j["overall"] = report_to_json(r.overall);
  j["per_group"] = nlohmann::json::object();
  for (const auto& [g, m] : r.per_group) j["per_group"][to_string(g)] = report_to_json(m);
  j["per_subject"] = nlohmann::json::array();
  for (const auto& s : r.per_subject)
    j["per_subject"].push_back({{"subject_id", s.subject_id},
                                {"age_group", to_string(s.group)},
                                {"metrics", report_to_json(s.metrics)}});
  j["test_subjects"] = nlohmann::json::object();
  for (const auto& [g, ids] : r.test_subjects) j["test_subjects"][to_string(g)] = ids;
  return j;
}

inline PopulationReport population_report_from_json(const nlohmann::json& j) {
  PopulationReport r;
  try {
    r.scope = j.at("scope").get<std::string>();
    r.classes = j.at("classes").get<int>();
    r.overall = report_from_json(j.at("overall"));
    for (const auto& [g, m] : j.at("per_group").items()) r.per_group[parse_age_group(g)] = report_from_json(m);
    for (const auto& s : j.at("per_subject"))
      r.per_subject.push_back({s.at("subject_id").get<std::string>(),
                               parse_age_group(s.at("age_group").get<std::string>()),
                               report_from_json(s.at("metrics"))});
    for (const auto& [g, ids] : j.at("test_subjects").items())
      r.test_subjects[parse_age_group(g)] = ids.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics file: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scope data

struct ScopeData {
  std::vector<const WindowSample*> train;
  std::vector<std::string> train_subjects;
  std::vector<PersonalData> personal;  // test subjects of the scope, by id
};

inline ScopeData scope_data(const WindowSet& ws, const SplitPlan& plan, const Scope& scope) {
  const int classes = num_classes(ws.scheme);
  ScopeData d;
  std::set<std::string> train_ids;
  for (const auto& [g, ids] : plan.train)
    if (scope.kind == ScopeKind::GLOBAL || g == scope.group) train_ids.insert(ids.begin(), ids.end());
  std::set<std::string> test_ids;
  for (const auto& [g, ids] : plan.test)
    if (scope.includes(g)) test_ids.insert(ids.begin(), ids.end());
  const auto all_test = plan.all_test();
  for (const auto& id : train_ids)
    if (std::binary_search(all_test.begin(), all_test.end(), id))
      throw InternalError("subject '" + id + "' is in both train and test");
  d.train_subjects.assign(train_ids.begin(), train_ids.end());

  std::map<std::string, std::vector<WindowSample>> test_windows;
  for (const auto& w : ws.windows) {
    if (train_ids.count(w.subject_id)) {
      if (trainable_label(w.label, classes)) d.train.push_back(&w);
    } else if (test_ids.count(w.subject_id)) {
      test_windows[w.subject_id].push_back(w);
    }
  }
  for (auto& [id, wins] : test_windows) {
    std::stable_sort(wins.begin(), wins.end(),
                     [](const WindowSample& a, const WindowSample& b) { return a.end_time < b.end_time; });
    auto p = finetune_split(wins);
    if (!p) continue;
    auto keep = [&](std::vector<WindowSample>& v) {
      v.erase(std::remove_if(v.begin(), v.end(),
                             [&](const WindowSample& w) { return !trainable_label(w.label, classes); }),
              v.end());
    };
    keep(p->train);
    keep(p->test);
    d.personal.push_back(std::move(*p));
  }
  return d;
}

inline AgeGroup group_in_plan(const SplitPlan& plan, const std::string& id) {
  for (const auto& [g, ids] : plan.test)
    if (std::binary_search(ids.begin(), ids.end(), id)) return g;
  return AgeGroup::UNKNOWN;
}

inline SubjectPredictions predict_subject(nn::FcnModel& m, const PersonalData& p, AgeGroup group) {
  SubjectPredictions sp;
  sp.subject_id = p.subject_id;
  sp.group = group;
  std::vector<const std::vector<double>*> rows;
  for (const auto& w : p.test) {
    rows.push_back(&w.features);
    sp.truth.push_back(w.label);
  }
  sp.probs = nn::predict_proba(m, rows);
  return sp;
}

// ---------------------------------------------------------------------------
// Population training

struct PopulationRun {
  nn::FcnModel model;
  PopulationReport report;
  TrainLog log;
  TrainConfig config;
  Scope scope;
  std::vector<std::string> train_subjects;
  std::string train_fingerprint;
};

inline PopulationReport evaluate_population(nn::FcnModel& m, const WindowSet& ws,
                                            const SplitPlan& plan, const Scope& scope) {
  if (m.length != ws.length() || m.classes != num_classes(ws.scheme))
    throw ConfigError("model (L=" + std::to_string(m.length) + ", C=" + std::to_string(m.classes) +
                      ") does not fit the windows (L=" + std::to_string(ws.length()) +
                      ", C=" + std::to_string(num_classes(ws.scheme)) + ")");
  const ScopeData d = scope_data(ws, plan, scope);
  std::vector<SubjectPredictions> preds;
  for (const auto& p : d.personal) preds.push_back(predict_subject(m, p, group_in_plan(plan, p.subject_id)));
  return build_report(scope.name(), m.classes, preds);
}

inline PopulationRun train_population(const WindowSet& ws, const SplitPlan& plan, const Scope& scope,
                                      const TrainConfig& cfg) {
  if (ws.isl_minutes != cfg.isl_minutes || ws.rate != cfg.rate || ws.scheme != cfg.scheme)
    throw ConfigError("windows were built for ISL " + std::to_string(ws.isl_minutes) + ", rate " +
                      std::to_string(ws.rate) + ", class set " + to_string(ws.scheme) +
                      "; config asks for ISL " + std::to_string(cfg.isl_minutes) + ", rate " +
                      std::to_string(cfg.rate) + ", class set " + to_string(cfg.scheme));
  const ScopeData d = scope_data(ws, plan, scope);
  if (d.train.empty()) throw DataError("training scope " + scope.name() + " has no windows");
  PopulationRun run;
  run.config = cfg;
  run.scope = scope;
  run.train_subjects = d.train_subjects;
  run.train_fingerprint = windows_fingerprint(d.train);
  run.model = nn::make_fcn(ws.length(), num_classes(ws.scheme), cfg.seed, cfg.arch);
  run.log = train_model(run.model, d.train, cfg, cfg.epochs, cfg.adam.lr, cfg.seed);
  std::vector<SubjectPredictions> preds;
  for (const auto& p : d.personal)
    preds.push_back(predict_subject(run.model, p, group_in_plan(plan, p.subject_id)));
  run.report = build_report(scope.name(), run.model.classes, preds);
  return run;
}

// ---------------------------------------------------------------------------
// Fine-tuning

struct FinetuneSubject {
  nn::FcnModel model;
  SubjectPredictions predictions;
};

// FNV-1a; std::hash differs between standard libraries.
inline std::uint64_t id_key(std::string_view id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : id) h = (h ^ ch) * 0x100000001b3ULL;
  return h;
}

// All layers train at cfg.finetune_lr on the subject's personal train part.
inline std::optional<FinetuneSubject> finetune_subject(const nn::FcnModel& base, const PersonalData& p,
                                                       AgeGroup group, const TrainConfig& cfg) {
  FinetuneSubject out{base, {}};
  if (cfg.finetune_epochs > 0) {
    if (p.train.size() < 2) {
      warn("subject '" + p.subject_id + "' has fewer than 2 personal training windows; skipped");
      return std::nullopt;
    }
    std::vector<const WindowSample*> data;
    for (const auto& w : p.train) data.push_back(&w);
    train_model(out.model, data, cfg, cfg.finetune_epochs, cfg.finetune_lr,
                stream_key(cfg.seed, id_key(p.subject_id)));
  }
  out.predictions = predict_subject(out.model, p, group);
  return out;
}

struct FinetuneRun {
  PopulationReport report;
  std::vector<std::string> skipped;
};

inline FinetuneRun finetune(const nn::FcnModel& base, const WindowSet& ws, const SplitPlan& plan,
                            const Scope& scope, const TrainConfig& cfg) {
  const ScopeData d = scope_data(ws, plan, scope);
  FinetuneRun run;
  std::vector<SubjectPredictions> preds;
  for (const auto& p : d.personal) {
    auto r = finetune_subject(base, p, group_in_plan(plan, p.subject_id), cfg);
    if (!r) {
      run.skipped.push_back(p.subject_id);
      continue;
    }
    preds.push_back(std::move(r->predictions));
  }
  run.report = build_report(scope.name() + "+finetune", base.classes, preds);
  return run;
}

// ---------------------------------------------------------------------------
// GPB vs ASPB

struct Extremes {
  std::string best_subject, worst_subject;
  double best_f1 = 0.0, worst_f1 = 0.0;
};

// Best and worst test subject of a group by macro F1; ties go to the
// smaller id.
inline std::optional<Extremes> extremes(const PopulationReport& r, AgeGroup g) {
  std::optional<Extremes> e;
  for (const auto& s : r.per_subject) {
    if (s.group != g || s.metrics.samples == 0) continue;
    const double f = s.metrics.macro_f1;
    if (!e) {
      e = Extremes{s.subject_id, s.subject_id, f, f};
      continue;
    }
    if (f > e->best_f1 || (f == e->best_f1 && s.subject_id < e->best_subject)) {
      e->best_f1 = f;
      e->best_subject = s.subject_id;
    }
    if (f < e->worst_f1 || (f == e->worst_f1 && s.subject_id < e->worst_subject)) {
      e->worst_f1 = f;
      e->worst_subject = s.subject_id;
    }
  }
  return e;
}

struct ScopeComparison {
  AgeGroup group = AgeGroup::UNKNOWN;
  MetricsReport gpb, aspb;
  double d_recall = 0.0, d_precision = 0.0, d_f1 = 0.0, d_pr_auc = 0.0;  // aspb - gpb
  std::optional<Extremes> gpb_extremes, aspb_extremes;
};

inline std::vector<ScopeComparison> compare_scopes(const PopulationReport& gpb,
                                                   const std::map<AgeGroup, PopulationReport>& aspb) {
  std::vector<ScopeComparison> rows;
  for (const auto& [g, a] : aspb) {
    auto gi = gpb.test_subjects.find(g);
    auto ai = a.test_subjects.find(g);
    const std::vector<std::string> none;
    const auto& gt = gi == gpb.test_subjects.end() ? none : gi->second;
    const auto& at = ai == a.test_subjects.end() ? none : ai->second;
    if (gt != at) throw DataError("GPB and ASPB reports for " + to_string(g) + " use different test subjects");
    auto pg = gpb.per_group.find(g);
    if (pg == gpb.per_group.end()) throw DataError("GPB report has no results for " + to_string(g));
    ScopeComparison c;
    c.group = g;
    c.gpb = pg->second;
    c.aspb = a.overall;
    c.d_recall = c.aspb.macro_recall - c.gpb.macro_recall;
    c.d_precision = c.aspb.macro_precision - c.gpb.macro_precision;
    c.d_f1 = c.aspb.macro_f1 - c.gpb.macro_f1;
    c.d_pr_auc = c.aspb.macro_pr_auc - c.gpb.macro_pr_auc;
    c.gpb_extremes = extremes(gpb, g);
    c.aspb_extremes = extremes(a, g);
    rows.push_back(std::move(c));
  }
  return rows;
}

inline void write_comparison_csv(const std::vector<ScopeComparison>& rows, const std::string& path) {
  auto out = csv::open_output(path);
  out << "age_group,gpb_recall,gpb_precision,gpb_f1,gpb_pr_auc,aspb_recall,aspb_precision,"
         "aspb_f1,aspb_pr_auc,delta_recall,delta_precision,delta_f1,delta_pr_auc\n";
  auto f = [](double v) { return csv::format_double(v); };
  for (const auto& r : rows)
    out << to_string(r.group) << ',' << f(r.gpb.macro_recall) << ',' << f(r.gpb.macro_precision) << ','
        << f(r.gpb.macro_f1) << ',' << f(r.gpb.macro_pr_auc) << ',' << f(r.aspb.macro_recall) << ','
        << f(r.aspb.macro_precision) << ',' << f(r.aspb.macro_f1) << ',' << f(r.aspb.macro_pr_auc) << ','
        << f(r.d_recall) << ',' << f(r.d_precision) << ',' << f(r.d_f1) << ',' << f(r.d_pr_auc) << '\n';
}

inline void write_extremes_csv(const std::vector<ScopeComparison>& rows, const std::string& path) {
  auto out = csv::open_output(path);
  out << "scope,age_group,best_subject,best_f1,worst_subject,worst_f1\n";
  for (const auto& r : rows)
    for (const auto& [name, e] : {std::pair{"GPB", r.gpb_extremes}, std::pair{"ASPB", r.aspb_extremes}})
      if (e)
        out << name << ',' << to_string(r.group) << ',' << e->best_subject << ','
            << csv::format_double(e->best_f1) << ',' << e->worst_subject << ','
            << csv::format_double(e->worst_f1) << '\n';
}

// Per-group macro metrics in the layout of a per-age-group results table.
inline void write_per_group_csv(const PopulationReport& r, const std::string& path) {
  auto out = csv::open_output(path);
  out << "scope,age_group,samples,recall,precision,f1,pr_auc\n";
  auto row = [&](const std::string& g, const MetricsReport& m) {
    out << r.scope << ',' << g << ',' << m.samples << ',' << csv::format_double(m.macro_recall) << ','
        << csv::format_double(m.macro_precision) << ',' << csv::format_double(m.macro_f1) << ','
        << csv::format_double(m.macro_pr_auc) << '\n';
  };
  for (const auto& [g, m] : r.per_group) row(to_string(g), m);
  row("all", r.overall);
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  std::string name;
  LabelScheme scheme = LabelScheme::SET_I;
  int isl_minutes = 30;
  int rate = 5;
  bool weighted = false;
  double gamma = 2.0;
};

// Loss comparison on class set I, class sets with the weighted loss, longer
// ISLs on set II, then the same ISLs at a 15-minute rate.
inline std::vector<AblationCell> default_ablation_grid() {
  using S = LabelScheme;
  std::vector<AblationCell> g{{"FL default", S::SET_I, 30, 5, false, 2.0},
                              {"Class I + FL + w", S::SET_I, 30, 5, true, 2.0},
                              {"Class II + FL + w", S::SET_II, 30, 5, true, 2.0},
                              {"Class III + FL + w", S::SET_III, 30, 5, true, 2.0}};
  for (int isl : {45, 60, 90, 120})
    g.push_back({"ISL of " + std::to_string(isl) + " min", S::SET_II, isl, 5, true, 2.0});
  for (int isl : {30, 45, 60, 90, 120})
    g.push_back({"15 min rate, ISL " + std::to_string(isl), S::SET_II, isl, 15, true, 2.0});
  return g;
}

inline std::vector<AblationCell> ablation_grid_from_json(const nlohmann::json& j) {
  std::vector<AblationCell> g;
  try {
    for (const auto& e : j) {
      AblationCell c;
      c.name = e.at("name").get<std::string>();
      c.scheme = parse_label_scheme(e.value("class_set", std::string("II")));
      c.isl_minutes = e.value("isl_minutes", 30);
      c.rate = e.value("rate_minutes", 5);
      c.weighted = e.value("class_weights", std::string("balanced")) == "balanced";
      c.gamma = e.value("focal_gamma", 2.0);
      check_window_config(c.isl_minutes, c.rate);
      g.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ablation grid: ") + e.what());
  }
  if (g.empty()) throw ConfigError("ablation grid is empty");
  return g;
}

struct AblationRow {
  AblationCell cell;
  bool ok = false;
  std::string error;
  double recall = 0.0, precision = 0.0, f1 = 0.0, pr_auc = 0.0;  // mean over seeds
  std::vector<MetricsReport> per_seed;
};

struct AblationSubset {
  std::uint64_t seed = 48;
  std::vector<std::string> train, test;
};

// `fraction` of the train subjects (at least 2), split 70:30 by subject.
inline AblationSubset ablation_subset(const SplitPlan& plan, std::uint64_t seed, double fraction = 0.1) {
  auto ids = plan.all_train();
  Rng rng(seed, 0xab1a'7100ULL);
  rng.shuffle(ids);
  std::size_t k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ids.size())));
  k = std::min(ids.size(), std::max<std::size_t>(k, 2));
  if (k < 2) throw DataError("ablation needs at least 2 train subjects");
  const std::size_t n_train = std::clamp<std::size_t>((7 * k) / 10, 1, k - 1);
  AblationSubset s;
  s.seed = seed;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// Each cell is preprocessed, labelled and windowed from the raw cohort; a
// failing cell is recorded and the grid continues.
inline std::vector<AblationRow> run_ablation(const Cohort& raw, const AblationSubset& subset,
                                             const std::vector<AblationCell>& grid, const TrainConfig& base,
                                             const std::vector<std::uint64_t>& seeds = kAblationSeeds) {
  std::set<std::string> wanted(subset.train.begin(), subset.train.end());
  wanted.insert(subset.test.begin(), subset.test.end());
  Cohort sub;
  for (const auto& s : raw.subjects)
    if (wanted.count(s.subject_id)) sub.subjects.push_back(s);
  for (const auto& s : raw.series)
    if (wanted.count(s.subject_id)) sub.series.push_back(s);

  std::map<int, std::vector<GlucoseSeries>> cleaned;
  std::vector<AblationRow> rows;
  for (const auto& cell : grid) {
    AblationRow row;
    row.cell = cell;
    try {
      if (!cleaned.count(cell.rate)) {
        auto pre = preprocess_all(sub.series, cell.rate);
        auto& v = cleaned[cell.rate];
        for (auto& p : pre) v.push_back(std::move(p.series));
      }
      const auto labeled = label_all(cleaned.at(cell.rate), cell.scheme);
      WindowSet ws;
      ws.isl_minutes = cell.isl_minutes;
      ws.rate = cell.rate;
      ws.scheme = cell.scheme;
      ws.windows = make_all_windows(labeled, sub, cell.isl_minutes, cell.rate);
      const int classes = num_classes(cell.scheme);
      std::vector<const WindowSample*> train, test;
      for (const auto& w : ws.windows) {
        if (!trainable_label(w.label, classes)) continue;
        if (std::binary_search(subset.train.begin(), subset.train.end(), w.subject_id))
          train.push_back(&w);
        else
          test.push_back(&w);
      }
      if (train.empty() || test.empty()) throw DataError("ablation cell has no train or test windows");
      TrainConfig cfg = base;
      cfg.scheme = cell.scheme;
      cfg.isl_minutes = cell.isl_minutes;
      cfg.rate = cell.rate;
      cfg.weighted = cell.weighted;
      cfg.gamma = cell.gamma;
      std::vector<const std::vector<double>*> rows_x;
      std::vector<int> truth;
      for (const auto* w : test) {
        rows_x.push_back(&w->features);
        truth.push_back(w->label);
      }
      for (auto seed : seeds) {
        cfg.seed = seed;
        auto model = nn::make_fcn(ws.length(), classes, seed, cfg.arch);
        train_model(model, train, cfg, cfg.epochs, cfg.adam.lr, seed);
        const auto probs = nn::predict_proba(model, rows_x);
        row.per_seed.push_back(evaluate_predictions(truth, probs, classes));
      }
      for (const auto& m : row.per_seed) {
        row.recall += m.macro_recall;
        row.precision += m.macro_precision;
        row.f1 += m.macro_f1;
        row.pr_auc += m.macro_pr_auc;
      }
      const double n = static_cast<double>(row.per_seed.size());
      row.recall /= n;
      row.precision /= n;
      row.f1 /= n;
      row.pr_auc /= n;
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
      warn("ablation cell '" + cell.name + "' failed: " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  auto out = csv::open_output(path);
  out << "cell,class_set,isl_minutes,rate_minutes,loss,recall,precision,f1,pr_auc,status\n";
  for (const auto& r : rows) {
    const std::string loss = r.cell.weighted ? "focal+balanced" : "focal";
    out << r.cell.name << ',' << to_string(r.cell.scheme) << ',' << r.cell.isl_minutes << ','
        << r.cell.rate << ',' << loss << ',';
    if (r.ok)
      out << csv::format_double(r.recall) << ',' << csv::format_double(r.precision) << ','
          << csv::format_double(r.f1) << ',' << csv::format_double(r.pr_auc) << ",ok\n";
    else
      out << ",,,,failed\n";
  }
}

// ---------------------------------------------------------------------------
// Run directory

inline void write_population_run(const std::string& dir, const PopulationRun& run, nlohmann::json manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nn::save_model(run.model, (fs::path(dir) / "model.json").string());
  {
    auto out = csv::open_output((fs::path(dir) / "metrics.json").string());
    out << population_report_to_json(run.report).dump(2) << '\n';
  }
  write_report_csv(run.report.overall, (fs::path(dir) / "metrics.csv").string());
  write_confusion_csv(run.report.overall.confusion, (fs::path(dir) / "confusion.csv").string());
  write_per_group_csv(run.report, (fs::path(dir) / "per_group.csv").string());
  manifest["pipeline_version"] = kPipelineVersion;
  manifest["created_utc"] = created_utc_now();
  manifest["scope"] = run.scope.name();
  manifest["config"] = config_to_json(run.config);
  manifest["seeds"] = {{"model_init", run.config.seed}, {"shuffle", run.config.seed}};
  manifest["train_subjects"] = run.train_subjects;
  manifest["test_subjects"] = nlohmann::json::object();
  for (const auto& [g, ids] : run.report.test_subjects) manifest["test_subjects"][to_string(g)] = ids;
  manifest["train_windows_sha1"] = run.train_fingerprint;
  manifest["train_samples"] = run.log.samples;
  manifest["class_counts"] = run.log.class_counts;
  manifest["alpha"] = run.log.alpha;
  manifest["epoch_loss"] = run.log.epoch_loss;
  manifest["test_subject_audit"] = "passed";
  auto out = csv::open_output((fs::path(dir) / "run_manifest.json").string());
  out << manifest.dump(2) << '\n';
}

}  // namespace glyconet
