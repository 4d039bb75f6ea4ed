#pragma once

// Per-age descriptive statistics and Tukey's HSD over observation-level
// CGM values.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glyconet/csv.hpp"
#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/log.hpp"
#include "glyconet/studentized_range.hpp"

namespace glyconet {

inline constexpr double kTukeyAlpha = 0.05;

struct AgeRow {
  int age = 0;
  std::size_t subjects = 0;
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1); 0 for a single value
  double min = 0.0;
  double max = 0.0;
};

// Values of every subject of a given integer age are pooled. Subjects
// without an exact age are skipped.
inline std::vector<AgeRow> summary_per_age(const std::vector<GlucoseSeries>& series,
                                           const std::vector<Subject>& subjects) {
  std::map<std::string, const Subject*> by_id;
  for (const auto& s : subjects) by_id[s.subject_id] = &s;
  std::map<int, std::vector<const GlucoseSeries*>> groups;
  for (const auto& s : series) {
    auto it = by_id.find(s.subject_id);
    if (it == by_id.end() || !it->second->age_years) continue;
    groups[*it->second->age_years].push_back(&s);
  }
  std::vector<AgeRow> rows;
  for (const auto& [age, members] : groups) {
    AgeRow r;
    r.age = age;
    r.subjects = members.size();
    r.min = std::numeric_limits<double>::infinity();
    r.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (const auto* s : members)
      for (const auto& p : s->points) {
        if (!p.observed()) continue;
        ++r.count;
        sum += p.glucose;
        r.min = std::min(r.min, p.glucose);
        r.max = std::max(r.max, p.glucose);
      }
    if (r.count == 0) continue;
    r.mean = sum / static_cast<double>(r.count);
    double ss = 0.0;
    for (const auto* s : members)
      for (const auto& p : s->points)
        if (p.observed()) ss += (p.glucose - r.mean) * (p.glucose - r.mean);
    r.std = r.count > 1 ? std::sqrt(ss / static_cast<double>(r.count - 1)) : 0.0;
    rows.push_back(r);
  }
  return rows;
}

inline void write_age_summary_csv(const std::vector<AgeRow>& rows, const std::string& path) {
  auto out = csv::open_output(path);
  out << "age,subjects,count,mean,std,min,max\n";
  for (const auto& r : rows)
    out << r.age << ',' << r.subjects << ',' << r.count << ',' << csv::format_double(r.mean)
        << ',' << csv::format_double(r.std) << ',' << csv::format_double(r.min) << ','
        << csv::format_double(r.max) << '\n';
}

// ---------------------------------------------------------------------------
// Tukey HSD

struct GroupMoments {
  std::string name;
  std::size_t n = 0;
  double mean = 0.0;
  double ss = 0.0;  // sum of squared deviations from the mean
};

inline GroupMoments moments_of(std::string name, const std::vector<double>& values) {
  GroupMoments m;
  m.name = std::move(name);
  m.n = values.size();
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(m.n);
  for (double v : values) m.ss += (v - m.mean) * (v - m.mean);
  return m;
}

struct TukeyPair {
  std::string group_a, group_b;
  double mean_diff = 0.0;  // mean(b) - mean(a)
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  bool reject_null = false;
};

struct TukeyResult {
  std::vector<TukeyPair> pairs;
  double mse = 0.0;
  double df = 0.0;
  double q_crit = 0.0;
  int k = 0;
};

inline TukeyResult tukey_hsd_from_moments(const std::vector<GroupMoments>& groups,
                                          double alpha = kTukeyAlpha) {
  if (alpha != kTukeyAlpha) throw ConfigError("Tukey HSD supports only alpha = 0.05");
  if (groups.size() < 2) throw ConfigError("Tukey HSD needs at least two groups");
  std::size_t total = 0;
  double ss = 0.0;
  for (const auto& g : groups) {
    if (g.n < 2) throw DataError("group '" + g.name + "' has fewer than 2 values");
    total += g.n;
    ss += g.ss;
  }
  TukeyResult r;
  r.k = static_cast<int>(groups.size());
  r.df = static_cast<double>(total - groups.size());
  r.mse = ss / r.df;
  r.q_crit = studentized_range_quantile(r.k, r.df, alpha);
  for (std::size_t a = 0; a < groups.size(); ++a)
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      const auto& ga = groups[a];
      const auto& gb = groups[b];
      TukeyPair p;
      p.group_a = ga.name;
      p.group_b = gb.name;
      p.mean_diff = gb.mean - ga.mean;
      const double se = std::sqrt(r.mse * (1.0 / static_cast<double>(ga.n) +
                                           1.0 / static_cast<double>(gb.n)));
      const double half = r.q_crit / std::numbers::sqrt2 * se;
      p.ci_lower = p.mean_diff - half;
      p.ci_upper = p.mean_diff + half;
      p.reject_null = p.ci_lower > 0.0 || p.ci_upper < 0.0;
      r.pairs.push_back(p);
    }
  return r;
}

inline TukeyResult tukey_hsd(const std::vector<std::pair<std::string, std::vector<double>>>& groups,
                             double alpha = kTukeyAlpha) {
  std::vector<GroupMoments> m;
  m.reserve(groups.size());
  for (const auto& [name, values] : groups) m.push_back(moments_of(name, values));
  return tukey_hsd_from_moments(m, alpha);
}

// ---------------------------------------------------------------------------
// Candidate age splits

// Edges {14, 21, 45} give bins [0,14), [14,21), [21,45), [45, inf) labelled
// "0-13", "14-20", "21-44", "45+".
inline std::vector<std::string> split_bin_labels(const std::vector<int>& edges) {
  std::vector<std::string> out;
  int lo = 0;
  for (int e : edges) {
    out.push_back(std::to_string(lo) + "-" + std::to_string(e - 1));
    lo = e;
  }
  out.push_back(std::to_string(lo) + "+");
  return out;
}

inline std::size_t split_bin_of(const std::vector<int>& edges, int age) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), age) -
                                  edges.begin());
}

struct SplitEvaluation {
  std::vector<int> edges;
  bool feasible = true;
  bool all_pairs_significant = false;
  std::vector<GroupMoments> groups;
  std::vector<std::string> empty_bins;
  std::optional<TukeyResult> tukey;
};

inline SplitEvaluation evaluate_split(const std::vector<GlucoseSeries>& series,
                                      const std::vector<Subject>& subjects,
                                      const std::vector<int>& edges) {
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i] <= 0) throw ConfigError("age bin edges must be positive");
    if (i > 0 && edges[i] <= edges[i - 1])
      throw ConfigError("age bin edges must be strictly increasing");
  }
  SplitEvaluation ev;
  ev.edges = edges;
  const auto labels = split_bin_labels(edges);

  std::map<std::string, int> age_of;
  for (const auto& s : subjects)
    if (s.age_years) age_of[s.subject_id] = *s.age_years;

  std::vector<std::size_t> members(labels.size(), 0);
  std::vector<double> sum(labels.size(), 0.0);
  std::vector<std::size_t> n(labels.size(), 0);
  std::vector<std::size_t> bin_of_series(series.size(), labels.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    auto it = age_of.find(series[i].subject_id);
    if (it == age_of.end()) continue;
    const std::size_t b = split_bin_of(edges, it->second);
    bin_of_series[i] = b;
    ++members[b];
    for (const auto& p : series[i].points)
      if (p.observed()) {
        sum[b] += p.glucose;
        ++n[b];
      }
  }
  ev.groups.resize(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    ev.groups[b].name = labels[b];
    ev.groups[b].n = n[b];
    if (n[b] > 0) ev.groups[b].mean = sum[b] / static_cast<double>(n[b]);
    if (members[b] == 0) ev.empty_bins.push_back(labels[b]);
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t b = bin_of_series[i];
    if (b == labels.size()) continue;
    for (const auto& p : series[i].points)
      if (p.observed()) {
        const double d = p.glucose - ev.groups[b].mean;
        ev.groups[b].ss += d * d;
      }
  }

  if (!ev.empty_bins.empty()) {
    ev.feasible = false;
    return ev;
  }
  if (labels.size() < 2) {
    warn("split has a single age group; no pairs to compare");
    ev.all_pairs_significant = true;
    return ev;
  }
  ev.tukey = tukey_hsd_from_moments(ev.groups);
  ev.all_pairs_significant = std::all_of(ev.tukey->pairs.begin(), ev.tukey->pairs.end(),
                                         [](const TukeyPair& p) { return p.reject_null; });
  return ev;
}

inline void write_tukey_csv(const TukeyResult& r, const std::string& path) {
  auto out = csv::open_output(path);
  out << "group_a,group_b,mean_diff,ci_lower,ci_upper,reject_null\n";
  for (const auto& p : r.pairs)
    out << p.group_a << ',' << p.group_b << ',' << csv::format_double(p.mean_diff) << ','
        << csv::format_double(p.ci_lower) << ',' << csv::format_double(p.ci_upper) << ','
        << (p.reject_null ? "true" : "false") << '\n';
}

}  // namespace glyconet
