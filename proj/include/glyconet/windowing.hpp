#pragma once

// Normalisation, sliding windows, test-subject selection and the temporal
// personal train/test split of test subjects.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "glyconet/csv.hpp"
#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/ingestion.hpp"
#include "glyconet/labeling.hpp"
#include "glyconet/log.hpp"
#include "glyconet/parallel.hpp"

namespace glyconet {

struct Scaler {
  double lo = kGlucoseFloor;
  double hi = kGlucoseCeiling;

  double normalize(double v) const {
    if (!(v >= lo && v <= hi))
      throw InternalError("glucose " + csv::format_double(v) + " outside scaler range [" +
                          csv::format_double(lo) + ", " + csv::format_double(hi) + "]");
    return (v - lo) / (hi - lo);
  }
  double denormalize(double u) const { return lo + u * (hi - lo); }
};

inline double normalize(double v) { return Scaler{}.normalize(v); }
inline double denormalize(double u) { return Scaler{}.denormalize(u); }

inline constexpr int kIslChoices[] = {30, 45, 60, 90, 120};

inline void check_window_config(int isl_minutes, int rate) {
  if (rate != 5 && rate != 15) throw ConfigError("rate must be 5 or 15 minutes");
  if (std::find(std::begin(kIslChoices), std::end(kIslChoices), isl_minutes) ==
      std::end(kIslChoices))
    throw ConfigError("ISL must be one of 30, 45, 60, 90, 120 minutes");
  window_length(isl_minutes, rate);
}

// Stride one grid step. A window survives only if all L points are observed,
// consecutive offsets differ by exactly `rate`, and its last point is labelled.
inline std::vector<WindowSample> make_windows(const LabeledSeries& ls, int isl_minutes, int rate,
                                              AgeGroup group = AgeGroup::UNKNOWN,
                                              const Scaler& scaler = {}) {
  check_window_config(isl_minutes, rate);
  const auto& s = ls.series;
  if (s.rate_minutes != rate)
    throw ConfigError("series '" + s.subject_id + "' is on a " +
                      std::to_string(s.rate_minutes) + "-minute grid, windows asked for " +
                      std::to_string(rate));
  const std::size_t L = static_cast<std::size_t>(window_length(isl_minutes, rate));
  std::vector<WindowSample> out;
  // run = length of the contiguous observed run ending at i
  std::size_t run = 0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const auto& p = s.points[i];
    if (!p.observed()) {
      run = 0;
      continue;
    }
    const bool continues = i > 0 && s.points[i - 1].observed() &&
                           p.offset - s.points[i - 1].offset == rate;
    run = continues ? run + 1 : 1;
    if (run < L || ls.labels[i] == kUnlabeled) continue;
    WindowSample w;
    w.subject_id = s.subject_id;
    w.end_time = s.absolute_time(i);
    w.label = ls.labels[i];
    w.age_group = group;
    w.features.reserve(L);
    for (std::size_t j = i + 1 - L; j <= i; ++j)
      w.features.push_back(scaler.normalize(s.points[j].glucose));
    out.push_back(std::move(w));
  }
  return out;
}

// Windows for every series, concatenated in (subject_id, end_time) order.
inline std::vector<WindowSample> make_all_windows(const std::vector<LabeledSeries>& labeled,
                                                  const Cohort& cohort, int isl_minutes,
                                                  int rate, const Scaler& scaler = {}) {
  std::vector<std::size_t> order(labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return labeled[a].series.subject_id < labeled[b].series.subject_id;
  });
  std::vector<std::vector<WindowSample>> parts(labeled.size());
  parallel_for(order.size(), [&](std::size_t k) {
    const auto& ls = labeled[order[k]];
    parts[k] = make_windows(ls, isl_minutes, rate, cohort.group_of(ls.series.subject_id), scaler);
  });
  std::vector<WindowSample> out;
  for (auto& p : parts)
    for (auto& w : p) out.push_back(std::move(w));
  return out;
}

// ---------------------------------------------------------------------------
// Subject-level split

inline constexpr std::size_t kTestSubjectsPerGroup = 10;

struct SplitPlan {
  std::size_t per_group = kTestSubjectsPerGroup;
  // Keyed by the four age groups; UNKNOWN subjects appear only in train and
  // only ever join the global pool.
  std::map<AgeGroup, std::vector<std::string>> train, test;

  std::vector<std::string> all_test() const {
    std::vector<std::string> out;
    for (const auto& [g, ids] : test) out.insert(out.end(), ids.begin(), ids.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<std::string> all_train() const {
    std::vector<std::string> out;
    for (const auto& [g, ids] : train) out.insert(out.end(), ids.begin(), ids.end());
    std::sort(out.begin(), out.end());
    return out;
  }
  bool is_test(const std::string& id) const {
    for (const auto& [g, ids] : test)
      if (std::binary_search(ids.begin(), ids.end(), id)) return true;
    return false;
  }
};

// Per group, the `per_group` subjects with most datapoints (ties by id
// ascending) are held out.
inline SplitPlan select_test_subjects(const CohortManifest& manifest,
                                      std::size_t per_group = kTestSubjectsPerGroup) {
  SplitPlan plan;
  plan.per_group = per_group;
  std::set<std::string> seen;
  std::map<AgeGroup, std::vector<const SubjectStats*>> by_group;
  for (const auto& st : manifest.subjects) {
    if (!seen.insert(st.subject.subject_id).second)
      throw DataError("subject '" + st.subject.subject_id + "' listed twice");
    by_group[st.subject.age_group].push_back(&st);
  }
  for (AgeGroup g : kAgeGroups) {
    plan.train[g];
    plan.test[g];
    auto members = by_group[g];
    std::sort(members.begin(), members.end(), [](const SubjectStats* a, const SubjectStats* b) {
      if (a->datapoints != b->datapoints) return a->datapoints > b->datapoints;
      return a->subject.subject_id < b->subject.subject_id;
    });
    if (members.size() < per_group)
      warn("age group " + to_string(g) + " has only " + std::to_string(members.size()) +
           " subjects; all go to test");
    for (std::size_t i = 0; i < members.size(); ++i)
      (i < per_group ? plan.test[g] : plan.train[g]).push_back(members[i]->subject.subject_id);
    std::sort(plan.test[g].begin(), plan.test[g].end());
    std::sort(plan.train[g].begin(), plan.train[g].end());
  }
  if (auto it = by_group.find(AgeGroup::UNKNOWN); it != by_group.end()) {
    auto& ids = plan.train[AgeGroup::UNKNOWN];
    for (const auto* st : it->second) ids.push_back(st->subject.subject_id);
    std::sort(ids.begin(), ids.end());
  }
  return plan;
}

inline nlohmann::json split_to_json(const SplitPlan& plan) {
  nlohmann::json j;
  j["per_group"] = plan.per_group;
  j["groups"] = nlohmann::json::object();
  for (const auto& [g, ids] : plan.train) j["groups"][to_string(g)]["train"] = ids;
  for (const auto& [g, ids] : plan.test) j["groups"][to_string(g)]["test"] = ids;
  j["pipeline_version"] = kPipelineVersion;
  return j;
}

inline SplitPlan split_from_json(const nlohmann::json& j) {
  SplitPlan plan;
  try {
    plan.per_group = j.at("per_group").get<std::size_t>();
    for (const auto& [name, e] : j.at("groups").items()) {
      const AgeGroup g = parse_age_group(name);
      plan.train[g] = e.value("train", std::vector<std::string>{});
      if (g != AgeGroup::UNKNOWN) plan.test[g] = e.value("test", std::vector<std::string>{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split plan: ") + e.what());
  }
  std::set<std::string> seen;
  for (auto* side : {&plan.train, &plan.test})
    for (auto& [g, ids] : *side) {
      std::sort(ids.begin(), ids.end());
      for (const auto& id : ids)
        if (!seen.insert(id).second)
          throw DataError("split plan lists subject '" + id + "' more than once");
    }
  return plan;
}

// ---------------------------------------------------------------------------
// Personal (fine-tune) split

inline constexpr std::size_t kMinPersonalWindows = 10;

// Half-open index ranges over one subject's time-ordered windows:
// train [0, train_end), gap [train_end, gap_end), test [gap_end, n).
struct PersonalSplit {
  std::size_t n = 0;
  std::size_t train_end = 0;
  std::size_t gap_end = 0;
};

inline std::optional<PersonalSplit> personal_split_bounds(std::size_t n) {
  if (n < kMinPersonalWindows) return std::nullopt;
  PersonalSplit p;
  p.n = n;
  p.gap_end = (6 * n) / 10;
  p.train_end = (9 * p.gap_end) / 10;
  return p;
}

struct PersonalData {
  std::string subject_id;
  PersonalSplit bounds;
  std::vector<WindowSample> train, test;
};

// `windows` is one subject's windows in temporal order.
inline std::optional<PersonalData> finetune_split(const std::vector<WindowSample>& windows) {
  if (windows.empty()) return std::nullopt;
  for (std::size_t i = 1; i < windows.size(); ++i) {
    if (windows[i].subject_id != windows[0].subject_id)
      throw InternalError("finetune_split given windows of several subjects");
    if (windows[i].end_time <= windows[i - 1].end_time)
      throw InternalError("finetune_split needs windows in temporal order");
  }
  auto b = personal_split_bounds(windows.size());
  if (!b) {
    warn("subject '" + windows[0].subject_id + "' has only " + std::to_string(windows.size()) +
         " windows; excluded from the personal split");
    return std::nullopt;
  }
  PersonalData d;
  d.subject_id = windows[0].subject_id;
  d.bounds = *b;
  d.train.assign(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(b->train_end));
  d.test.assign(windows.begin() + static_cast<std::ptrdiff_t>(b->gap_end), windows.end());
  return d;
}

// Groups windows (sorted by subject then time) into per-subject runs.
inline std::map<std::string, std::vector<WindowSample>> windows_by_subject(
    const std::vector<WindowSample>& windows) {
  std::map<std::string, std::vector<WindowSample>> out;
  for (const auto& w : windows) out[w.subject_id].push_back(w);
  for (auto& [id, ws] : out)
    std::stable_sort(ws.begin(), ws.end(), [](const WindowSample& a, const WindowSample& b) {
      return a.end_time < b.end_time;
    });
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: windows.csv plus windows.json sidecar.

struct WindowSet {
  int isl_minutes = 30;
  int rate = 5;
  LabelScheme scheme = LabelScheme::SET_II;
  Scaler scaler;
  std::vector<WindowSample> windows;

  int length() const { return window_length(isl_minutes, rate); }
};

inline void write_windows(const std::string& dir, const WindowSet& ws) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::size_t L = static_cast<std::size_t>(ws.length());
  {
    auto out = csv::open_output((fs::path(dir) / "windows.csv").string());
    out << "subject_id,end_time,label";
    for (std::size_t j = 0; j < L; ++j) out << ",f" << j;
    out << '\n';
    for (const auto& w : ws.windows) {
      if (w.features.size() != L) throw InternalError("window length mismatch");
      out << w.subject_id << ',' << w.end_time << ',' << w.label;
      for (double f : w.features) out << ',' << csv::format_double(f);
      out << '\n';
    }
  }
  nlohmann::json side;
  side["isl_minutes"] = ws.isl_minutes;
  side["rate_minutes"] = ws.rate;
  side["window_length"] = L;
  side["class_set"] = to_string(ws.scheme);
  side["scaler"] = {{"min", ws.scaler.lo}, {"max", ws.scaler.hi}};
  side["count"] = ws.windows.size();
  side["pipeline_version"] = kPipelineVersion;
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& w : ws.windows) groups[w.subject_id] = to_string(w.age_group);
  side["subject_groups"] = std::move(groups);
  auto out = csv::open_output((fs::path(dir) / "windows.json").string());
  out << side.dump(2) << '\n';
}

inline WindowSet read_windows(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path side_path = fs::path(dir) / "windows.json";
  if (!fs::exists(side_path)) throw DataError("'" + side_path.string() + "' not found");
  WindowSet ws;
  std::map<std::string, AgeGroup> groups;
  try {
    std::ifstream in(side_path);
    const auto side = nlohmann::json::parse(in);
    ws.isl_minutes = side.at("isl_minutes").get<int>();
    ws.rate = side.at("rate_minutes").get<int>();
    ws.scheme = parse_label_scheme(side.at("class_set").get<std::string>());
    ws.scaler.lo = side.at("scaler").at("min").get<double>();
    ws.scaler.hi = side.at("scaler").at("max").get<double>();
    for (const auto& [id, g] : side.at("subject_groups").items())
      groups[id] = parse_age_group(g.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(side_path.string() + ": " + e.what());
  }
  const std::string path = (fs::path(dir) / "windows.csv").string();
  auto in = csv::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header");
  const std::size_t L = static_cast<std::size_t>(ws.length());
  if (csv::split(line).size() != L + 3) throw DataError(path + ": header does not match L");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    auto bad = [&](const char* what) {
      return DataError(path + ":" + std::to_string(line_no) + ": " + what);
    };
    if (f.size() != L + 3) throw bad("wrong field count");
    WindowSample w;
    w.subject_id = std::string(f[0]);
    const auto t = csv::parse_int(f[1]);
    const auto l = csv::parse_int(f[2]);
    if (!t || !l) throw bad("bad end_time or label");
    w.end_time = *t;
    w.label = static_cast<Label>(*l);
    w.features.reserve(L);
    for (std::size_t j = 0; j < L; ++j) {
      const auto v = csv::parse_double(f[3 + j]);
      if (!v) throw bad("bad feature");
      w.features.push_back(*v);
    }
    if (auto it = groups.find(w.subject_id); it != groups.end()) w.age_group = it->second;
    ws.windows.push_back(std::move(w));
  }
  return ws;
}

}  // namespace glyconet
