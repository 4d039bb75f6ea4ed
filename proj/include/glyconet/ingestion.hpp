#pragma once

// Raw CSV ingestion, cohort summaries and the canonical on-disk artifact
// (manifest.json + subjects.csv + one CSV per subject under series/).

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "glyconet/csv.hpp"
#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/log.hpp"

namespace glyconet {

namespace fs = std::filesystem;

struct Cohort {
  std::vector<Subject> subjects;      // sorted by subject_id
  std::vector<GlucoseSeries> series;  // sorted by subject_id

  const Subject* find_subject(std::string_view id) const {
    auto it = std::lower_bound(
        subjects.begin(), subjects.end(), id,
        [](const Subject& s, std::string_view v) { return s.subject_id < v; });
    if (it == subjects.end() || it->subject_id != id) return nullptr;
    return &*it;
  }
  AgeGroup group_of(std::string_view id) const {
    const Subject* s = find_subject(id);
    return s ? s->age_group : AgeGroup::UNKNOWN;
  }
};

// ---------------------------------------------------------------------------
// Timestamps

// Integer epoch minutes, or ISO-8601 `YYYY-MM-DDTHH:MM[:SS[.fff]]` (a space
// may replace the T). Seconds round to the nearest minute, halves upward.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  s = csv::trim(s);
  if (auto v = csv::parse_int(s)) return *v;
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':')
    return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    auto v = csv::parse_int(s.substr(pos, len));
    if (!v) return std::nullopt;
    return static_cast<int>(*v);
  };
  const auto year = num(0, 4), month = num(5, 2), day = num(8, 2);
  const auto hour = num(11, 2), minute = num(14, 2);
  if (!year || !month || !day || !hour || !minute) return std::nullopt;
  double seconds = 0.0;
  if (s.size() > 16) {
    if (s[16] != ':') return std::nullopt;
    std::string_view rest = s.substr(17);
    if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
    auto sec = csv::parse_double(rest);
    if (!sec || *sec < 0.0 || *sec >= 61.0) return std::nullopt;
    seconds = *sec;
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{*year},
                           std::chrono::month{static_cast<unsigned>(*month)},
                           std::chrono::day{static_cast<unsigned>(*day)}};
  if (!ymd.ok() || *hour > 23 || *minute > 59) return std::nullopt;
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  std::int64_t minutes = days * 1440 + *hour * 60 + *minute;
  if (seconds >= 30.0) minutes += 1;
  return minutes;
}

inline std::string format_iso_minutes(std::int64_t minutes) {
  using namespace std::chrono;
  const std::int64_t days = (minutes >= 0 ? minutes : minutes - 1439) / 1440;
  const std::int64_t rem = minutes - days * 1440;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:00", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 60), static_cast<int>(rem % 60));
  return buf;
}

inline std::int64_t floor_to_multiple(std::int64_t v, std::int64_t m) {
  const std::int64_t q = v / m;
  return (v % m != 0 && v < 0) ? (q - 1) * m : q * m;
}

// ---------------------------------------------------------------------------
// Glucose CSV

struct RawRecord {
  std::string subject_id;
  std::int64_t timestamp = 0;  // epoch minutes
  double glucose = 0.0;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

// Fraction of malformed rows above which a whole file is rejected.
inline constexpr double kMaxMalformedFraction = 0.01;

// Groups records per subject: sorted by time, duplicate timestamps collapse
// to their mean, t0 is the first timestamp floored to the 5-minute grid.
inline std::vector<GlucoseSeries> build_series(std::vector<RawRecord> records, int rate) {
  std::sort(records.begin(), records.end(), [](const RawRecord& a, const RawRecord& b) {
    if (a.subject_id != b.subject_id) return a.subject_id < b.subject_id;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.glucose < b.glucose;
  });
  std::vector<GlucoseSeries> out;
  std::size_t i = 0;
  while (i < records.size()) {
    GlucoseSeries s;
    s.subject_id = records[i].subject_id;
    s.rate_minutes = rate;
    s.t0 = floor_to_multiple(records[i].timestamp, 5);
    while (i < records.size() && records[i].subject_id == s.subject_id) {
      const std::int64_t ts = records[i].timestamp;
      double sum = 0.0;
      std::size_t n = 0;
      while (i < records.size() && records[i].subject_id == s.subject_id &&
             records[i].timestamp == ts) {
        sum += records[i].glucose;
        ++n;
        ++i;
      }
      s.points.push_back({ts - s.t0, sum / static_cast<double>(n)});
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<GlucoseSeries> parse_glucose_csv(std::istream& in, int rate = 5,
                                                    const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header");
  const auto header = csv::split(line);
  if (header.size() != 3 || header[0] != "subject_id" || header[1] != "timestamp" ||
      header[2] != "glucose_mgdl")
    throw DataError(source + ": header must be 'subject_id,timestamp,glucose_mgdl'");

  std::vector<RawRecord> records;
  std::vector<RowError> errors;
  std::size_t rows = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    ++rows;
    const auto f = csv::split(line);
    auto fail = [&](std::string msg) { errors.push_back({line_no, std::move(msg)}); };
    if (f.size() != 3) {
      fail("expected 3 fields, got " + std::to_string(f.size()));
      continue;
    }
    if (f[0].empty()) {
      fail("empty subject_id");
      continue;
    }
    const auto ts = parse_timestamp(f[1]);
    if (!ts) {
      fail("unparseable timestamp '" + std::string(f[1]) + "'");
      continue;
    }
    const auto g = csv::parse_double(f[2]);
    if (!g || !std::isfinite(*g)) {
      fail("unparseable glucose '" + std::string(f[2]) + "'");
      continue;
    }
    records.push_back({std::string(f[0]), *ts, *g});
  }
  for (const auto& e : errors)
    warn(source + ":" + std::to_string(e.line) + ": " + e.message);
  if (rows > 0 &&
      static_cast<double>(errors.size()) > kMaxMalformedFraction * static_cast<double>(rows))
    throw DataError(source + ": " + std::to_string(errors.size()) + " of " +
                    std::to_string(rows) + " rows malformed (limit 1%)");
  return build_series(std::move(records), rate);
}

inline std::vector<GlucoseSeries> ingest_glucose(const std::string& path, int rate = 5) {
  auto in = csv::open_input(path);
  return parse_glucose_csv(in, rate, path);
}

// ---------------------------------------------------------------------------
// Subjects CSV

struct AgeField {
  std::optional<int> exact;
  std::optional<int> lo, hi;  // open or closed interval when not exact
};

// "12", "60+", ">=60", ">59", "<=12", "<13", "6-13".
inline std::optional<AgeField> parse_age_field(std::string_view s) {
  s = csv::trim(s);
  if (s.empty()) return AgeField{};
  if (auto v = csv::parse_int(s)) {
    if (*v < 0) return std::nullopt;
    return AgeField{static_cast<int>(*v), std::nullopt, std::nullopt};
  }
  if (auto v = csv::parse_double(s); v && *v >= 0.0 && std::floor(*v) == *v)
    return AgeField{static_cast<int>(*v), std::nullopt, std::nullopt};
  auto as_int = [](std::string_view t) -> std::optional<int> {
    auto v = csv::parse_int(t);
    if (!v || *v < 0) return std::nullopt;
    return static_cast<int>(*v);
  };
  if (s.back() == '+') {
    if (auto v = as_int(s.substr(0, s.size() - 1))) return AgeField{std::nullopt, *v, std::nullopt};
    return std::nullopt;
  }
  if (s.starts_with(">=")) {
    if (auto v = as_int(s.substr(2))) return AgeField{std::nullopt, *v, std::nullopt};
    return std::nullopt;
  }
  if (s.starts_with(">")) {
    if (auto v = as_int(s.substr(1))) return AgeField{std::nullopt, *v + 1, std::nullopt};
    return std::nullopt;
  }
  if (s.starts_with("<=")) {
    if (auto v = as_int(s.substr(2))) return AgeField{std::nullopt, 0, *v};
    return std::nullopt;
  }
  if (s.starts_with("<")) {
    if (auto v = as_int(s.substr(1)); v && *v > 0) return AgeField{std::nullopt, 0, *v - 1};
    return std::nullopt;
  }
  if (const auto dash = s.find('-'); dash != std::string_view::npos && dash > 0) {
    auto lo = as_int(s.substr(0, dash));
    auto hi = as_int(s.substr(dash + 1));
    if (lo && hi && *lo <= *hi) return AgeField{std::nullopt, *lo, *hi};
  }
  return std::nullopt;
}

inline std::vector<Subject> parse_subjects_csv(std::istream& in,
                                               const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header");
  const auto header = csv::split(line);
  if (header.size() != 3 || header[0] != "subject_id" || header[1] != "age_years" ||
      header[2] != "sex")
    throw DataError(source + ": header must be 'subject_id,age_years,sex'");

  std::map<std::string, Subject> by_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (f.size() != 3) throw DataError(where + ": expected 3 fields");
    if (f[0].empty()) throw DataError(where + ": empty subject_id");
    const auto age = parse_age_field(f[1]);
    if (!age) throw DataError(where + ": unparseable age '" + std::string(f[1]) + "'");

    Subject s;
    s.subject_id = std::string(f[0]);
    s.sex = parse_sex(f[2]);
    s.age_years = age->exact;
    if (age->exact) {
      s.age_group = age_group_of(*age->exact);
    } else if (age->lo) {
      s.age_group = age_group_of_interval(*age->lo, age->hi);
      warn(where + ": subject " + s.subject_id + " has interval age '" + std::string(f[1]) +
           "', group " + to_string(s.age_group));
    } else {
      warn(where + ": subject " + s.subject_id + " has no age");
    }

    auto [it, inserted] = by_id.emplace(s.subject_id, s);
    if (!inserted) {
      if (it->second.age_years != s.age_years || it->second.age_group != s.age_group)
        throw DataError(where + ": subject " + s.subject_id + " listed with conflicting ages");
      if (it->second.sex == Sex::UNKNOWN) it->second.sex = s.sex;
    }
  }
  std::vector<Subject> out;
  out.reserve(by_id.size());
  for (auto& [id, s] : by_id) out.push_back(std::move(s));
  return out;
}

inline std::vector<Subject> ingest_subjects(const std::string& path) {
  auto in = csv::open_input(path);
  return parse_subjects_csv(in, path);
}

// Pairs series with subjects. Series without a subject row get an UNKNOWN
// subject; subject rows without data are kept.
inline Cohort make_cohort(std::vector<GlucoseSeries> series, std::vector<Subject> subjects) {
  std::sort(subjects.begin(), subjects.end(),
            [](const Subject& a, const Subject& b) { return a.subject_id < b.subject_id; });
  std::sort(series.begin(), series.end(), [](const GlucoseSeries& a, const GlucoseSeries& b) {
    return a.subject_id < b.subject_id;
  });
  Cohort c{std::move(subjects), std::move(series)};
  std::vector<Subject> missing;
  for (const auto& s : c.series) {
    if (!c.find_subject(s.subject_id)) {
      warn("subject " + s.subject_id + " has CGM data but no demographics row");
      missing.push_back(Subject{s.subject_id, std::nullopt, Sex::UNKNOWN, AgeGroup::UNKNOWN});
    }
  }
  if (!missing.empty()) {
    c.subjects.insert(c.subjects.end(), missing.begin(), missing.end());
    std::sort(c.subjects.begin(), c.subjects.end(),
              [](const Subject& a, const Subject& b) { return a.subject_id < b.subject_id; });
  }
  return c;
}

// ---------------------------------------------------------------------------
// Cohort summary

struct SubjectStats {
  Subject subject;
  std::size_t datapoints = 0;  // non-missing values
  double days = 0.0;           // span between first and last observed value
};

struct GroupSummary {
  AgeGroup group = AgeGroup::UNKNOWN;
  std::size_t subject_count = 0;
  std::size_t value_count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  double mean_days = 0.0, min_days = 0.0, max_days = 0.0;
};

struct CohortManifest {
  std::vector<SubjectStats> subjects;  // sorted by subject_id
  std::vector<GroupSummary> groups;    // the four age groups, then UNKNOWN if present
  int sampling_rate_minutes = 5;

  std::size_t datapoints(std::string_view id) const {
    for (const auto& s : subjects)
      if (s.subject.subject_id == id) return s.datapoints;
    return 0;
  }
};

inline double observed_days(const GlucoseSeries& s) {
  std::optional<std::int64_t> first, last;
  for (const auto& p : s.points) {
    if (!p.observed()) continue;
    if (!first) first = p.offset;
    last = p.offset;
  }
  if (!first) return 0.0;
  return static_cast<double>(*last - *first) / 1440.0;
}

inline CohortManifest cohort_summary(const std::vector<GlucoseSeries>& series,
                                     const std::vector<Subject>& subjects) {
  CohortManifest m;
  if (!series.empty()) m.sampling_rate_minutes = series.front().rate_minutes;
  std::map<std::string, const GlucoseSeries*> by_id;
  for (const auto& s : series) by_id[s.subject_id] = &s;

  std::vector<Subject> sorted = subjects;
  std::sort(sorted.begin(), sorted.end(),
            [](const Subject& a, const Subject& b) { return a.subject_id < b.subject_id; });

  struct Acc {
    std::size_t subjects = 0;
    std::vector<const GlucoseSeries*> members;
    std::vector<double> days;
  };
  std::map<AgeGroup, Acc> acc;
  for (const auto& subj : sorted) {
    SubjectStats st{subj, 0, 0.0};
    if (auto it = by_id.find(subj.subject_id); it != by_id.end()) {
      st.datapoints = it->second->observed_count();
      st.days = observed_days(*it->second);
      acc[subj.age_group].members.push_back(it->second);
    }
    auto& a = acc[subj.age_group];
    a.subjects += 1;
    a.days.push_back(st.days);
    m.subjects.push_back(std::move(st));
  }

  auto summarise = [&](AgeGroup g, const Acc& a) {
    GroupSummary gs;
    gs.group = g;
    gs.subject_count = a.subjects;
    double sum = 0.0;
    for (const auto* s : a.members)
      for (const auto& p : s->points)
        if (p.observed()) {
          sum += p.glucose;
          ++gs.value_count;
        }
    if (gs.value_count > 0) gs.mean = sum / static_cast<double>(gs.value_count);
    double ss = 0.0;
    for (const auto* s : a.members)
      for (const auto& p : s->points)
        if (p.observed()) ss += (p.glucose - gs.mean) * (p.glucose - gs.mean);
    gs.std = gs.value_count > 1 ? std::sqrt(ss / static_cast<double>(gs.value_count - 1)) : 0.0;
    if (!a.days.empty()) {
      double dsum = 0.0;
      for (double d : a.days) dsum += d;
      gs.mean_days = dsum / static_cast<double>(a.days.size());
      gs.min_days = *std::min_element(a.days.begin(), a.days.end());
      gs.max_days = *std::max_element(a.days.begin(), a.days.end());
    }
    return gs;
  };
  for (AgeGroup g : kAgeGroups) m.groups.push_back(summarise(g, acc[g]));
  if (acc.count(AgeGroup::UNKNOWN) && acc[AgeGroup::UNKNOWN].subjects > 0)
    m.groups.push_back(summarise(AgeGroup::UNKNOWN, acc[AgeGroup::UNKNOWN]));
  return m;
}

inline void write_group_summary_csv(const CohortManifest& m, const std::string& path) {
  auto out = csv::open_output(path);
  out << "age_group,subject_count,value_count,mean_cgm,std_cgm,mean_days,min_days,max_days\n";
  for (const auto& g : m.groups)
    out << to_string(g.group) << ',' << g.subject_count << ',' << g.value_count << ','
        << csv::format_double(g.mean) << ',' << csv::format_double(g.std) << ','
        << csv::format_double(g.mean_days) << ',' << csv::format_double(g.min_days) << ','
        << csv::format_double(g.max_days) << '\n';
}

// ---------------------------------------------------------------------------
// Canonical artifact directory

// Per-series labels written as an extra CSV column.
struct SeriesLabels {
  LabelScheme scheme = LabelScheme::SET_II;
  std::vector<std::vector<Label>> labels;  // parallel to Cohort::series
};

struct Artifact {
  Cohort cohort;
  int sampling_rate_minutes = 5;
  std::optional<SeriesLabels> labels;
  nlohmann::json manifest;
};

// Filesystem-safe name for a subject id: [A-Za-z0-9._-] kept, rest %XX.
inline std::string encode_file_name(std::string_view id) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '.' || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  if (out == "." || out == "..") out = "%2E" + out.substr(1);
  return out;
}

inline std::string created_utc_now() {
  std::time_t t;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde && *sde) {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string label_to_field(Label l) {
  if (l == kUnlabeled) return "";
  return std::to_string(l);
}

inline Label label_from_field(std::string_view f) {
  f = csv::trim(f);
  if (f.empty()) return kUnlabeled;
  auto v = csv::parse_int(f);
  if (!v || *v < kNoRisk) throw DataError("bad label '" + std::string(f) + "'");
  return static_cast<Label>(*v);
}

inline void write_series_csv(const GlucoseSeries& s, const std::vector<Label>* labels,
                             const std::string& path) {
  auto out = csv::open_output(path);
  out << "offset_minutes,glucose_mgdl" << (labels ? ",label" : "") << '\n';
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    out << s.points[i].offset << ',' << csv::format_double(s.points[i].glucose);
    if (labels) out << ',' << label_to_field((*labels)[i]);
    out << '\n';
  }
}

inline void read_series_csv(const std::string& path, GlucoseSeries& s,
                            std::vector<Label>* labels) {
  auto in = csv::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header");
  const auto header = csv::split(line);
  const bool has_label = header.size() == 3 && header[2] == "label";
  if (header.size() < 2 || header[0] != "offset_minutes" || header[1] != "glucose_mgdl")
    throw DataError(path + ": bad series header");
  if (labels && !has_label) throw DataError(path + ": no label column");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": wrong field count");
    const auto off = csv::parse_int(f[0]);
    if (!off) throw DataError(path + ":" + std::to_string(line_no) + ": bad offset");
    double g = kMissing;
    if (!f[1].empty()) {
      auto v = csv::parse_double(f[1]);
      if (!v) throw DataError(path + ":" + std::to_string(line_no) + ": bad glucose");
      g = *v;
    }
    s.points.push_back({*off, g});
    if (labels) labels->push_back(label_from_field(f[2]));
  }
}

inline void write_artifact(const std::string& dir, const Cohort& cohort, int rate,
                           const SeriesLabels* labels = nullptr,
                           nlohmann::json extra = nlohmann::json::object()) {
  fs::create_directories(fs::path(dir) / "series");
  using nlohmann::json;
  json subjects = json::array();
  std::map<std::string, std::size_t> series_index;
  for (std::size_t i = 0; i < cohort.series.size(); ++i)
    series_index[cohort.series[i].subject_id] = i;

  {
    auto out = csv::open_output((fs::path(dir) / "subjects.csv").string());
    out << "subject_id,age_years,sex\n";
    for (const auto& s : cohort.subjects)
      out << s.subject_id << ',' << (s.age_years ? std::to_string(*s.age_years) : "") << ','
          << to_string(s.sex) << '\n';
  }
  for (const auto& subj : cohort.subjects) {
    json e;
    e["subject_id"] = subj.subject_id;
    e["age_years"] = subj.age_years ? json(*subj.age_years) : json(nullptr);
    e["sex"] = to_string(subj.sex);
    e["age_group"] = to_string(subj.age_group);
    if (auto it = series_index.find(subj.subject_id); it != series_index.end()) {
      const auto& s = cohort.series[it->second];
      const std::string file = "series/" + encode_file_name(s.subject_id) + ".csv";
      e["file"] = file;
      e["t0"] = s.t0;
      e["rate_minutes"] = s.rate_minutes;
      e["datapoints"] = s.observed_count();
      e["days"] = observed_days(s);
      write_series_csv(s, labels ? &labels->labels[it->second] : nullptr,
                       (fs::path(dir) / file).string());
    } else {
      e["file"] = nullptr;
      e["datapoints"] = 0;
    }
    subjects.push_back(std::move(e));
  }
  json m = std::move(extra);
  m["subjects"] = std::move(subjects);
  m["sampling_rate_minutes"] = rate;
  m["created_utc"] = created_utc_now();
  m["pipeline_version"] = kPipelineVersion;
  if (labels) m["label_scheme"] = to_string(labels->scheme);
  auto out = csv::open_output((fs::path(dir) / "manifest.json").string());
  out << m.dump(2) << '\n';
}

inline Artifact read_artifact(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw DataError("artifact directory '" + dir + "' not found");
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path))
    throw DataError("'" + manifest_path.string() + "' not found");
  Artifact a;
  try {
    std::ifstream in(manifest_path);
    a.manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  const auto& m = a.manifest;
  try {
    a.sampling_rate_minutes = m.at("sampling_rate_minutes").get<int>();
    std::optional<LabelScheme> scheme;
    if (m.contains("label_scheme"))
      scheme = parse_label_scheme(m.at("label_scheme").get<std::string>());
    if (scheme) a.labels = SeriesLabels{*scheme, {}};
    for (const auto& e : m.at("subjects")) {
      Subject subj;
      subj.subject_id = e.at("subject_id").get<std::string>();
      if (!e.at("age_years").is_null()) subj.age_years = e.at("age_years").get<int>();
      subj.sex = parse_sex(e.value("sex", ""));
      subj.age_group = parse_age_group(e.value("age_group", "unknown"));
      a.cohort.subjects.push_back(subj);
      if (e.contains("file") && !e.at("file").is_null()) {
        GlucoseSeries s;
        s.subject_id = subj.subject_id;
        s.t0 = e.at("t0").get<std::int64_t>();
        s.rate_minutes = e.at("rate_minutes").get<int>();
        std::vector<Label> labels;
        read_series_csv((root / e.at("file").get<std::string>()).string(), s,
                        a.labels ? &labels : nullptr);
        a.cohort.series.push_back(std::move(s));
        if (a.labels) a.labels->labels.push_back(std::move(labels));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  // The manifest is written sorted; keep the invariant even for hand edits.
  auto by_id = [](const auto& x, const auto& y) { return x.subject_id < y.subject_id; };
  if (!std::is_sorted(a.cohort.subjects.begin(), a.cohort.subjects.end(), by_id) ||
      !std::is_sorted(a.cohort.series.begin(), a.cohort.series.end(), by_id))
    throw DataError(manifest_path.string() + ": subjects are not sorted by subject_id");
  return a;
}

}  // namespace glyconet
