#pragma once

// Confusion matrix, per-class and macro recall / precision / F1, and
// one-vs-rest average precision (PR-AUC).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "glyconet/csv.hpp"
#include "glyconet/error.hpp"

namespace glyconet {

inline constexpr const char* kPrAucDefinition =
    "one-vs-rest average precision: sum over distinct score thresholds (ties grouped) of "
    "(R_k - R_{k-1}) * P_k, no interpolation; macro mean over classes with support";

using ConfusionMatrix = std::vector<std::vector<std::uint64_t>>;  // [true][pred]

inline ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& pred,
                                        int classes) {
  if (truth.size() != pred.size())
    throw InternalError("confusion_matrix: " + std::to_string(truth.size()) + " labels vs " +
                        std::to_string(pred.size()) + " predictions");
  ConfusionMatrix m(static_cast<std::size_t>(classes),
                    std::vector<std::uint64_t>(static_cast<std::size_t>(classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || pred[i] < 0 || pred[i] >= classes)
      throw InternalError("confusion_matrix: label outside [0, " + std::to_string(classes) + ")");
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  return m;
}

struct ClassMetrics {
  std::uint64_t support = 0;  // true samples
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double pr_auc = std::numeric_limits<double>::quiet_NaN();
};

struct MacroMetrics {
  std::vector<ClassMetrics> per_class;
  double recall = 0.0, precision = 0.0, f1 = 0.0;
  int supported_classes = 0;
};

// Precision with no predicted positives is 0; F1 with P + R = 0 is 0.
// Macro averages run over classes with at least one true sample.
inline MacroMetrics macro_metrics(const ConfusionMatrix& m) {
  MacroMetrics r;
  const std::size_t C = m.size();
  r.per_class.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    std::uint64_t tp = m[c][c], row = 0, col = 0;
    for (std::size_t j = 0; j < C; ++j) {
      row += m[c][j];
      col += m[j][c];
    }
    auto& k = r.per_class[c];
    k.support = row;
    k.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    k.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    k.f1 = k.recall + k.precision > 0.0
               ? 2.0 * k.recall * k.precision / (k.recall + k.precision)
               : 0.0;
    if (row) {
      ++r.supported_classes;
      r.recall += k.recall;
      r.precision += k.precision;
      r.f1 += k.f1;
    }
  }
  if (r.supported_classes > 0) {
    const double n = r.supported_classes;
    r.recall /= n;
    r.precision /= n;
    r.f1 /= n;
  }
  return r;
}

// Step-wise average precision of `scores` for the positives in `is_pos`.
// NaN when there are no positives.
inline double average_precision(const std::vector<double>& scores, const std::vector<bool>& is_pos) {
  const std::size_t n = scores.size();
  std::size_t total_pos = 0;
  for (bool p : is_pos) total_pos += p;
  if (total_pos == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      tp += is_pos[idx[j]];
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

struct PrAuc {
  std::vector<double> per_class;  // NaN for classes without positives
  double macro = 0.0;
};

// probs[i][c] = P(class c | sample i).
inline PrAuc pr_auc_macro(const std::vector<int>& truth,
                          const std::vector<std::vector<double>>& probs, int classes) {
  if (truth.size() != probs.size()) throw InternalError("pr_auc_macro: size mismatch");
  PrAuc r;
  int supported = 0;
  std::vector<double> scores(truth.size());
  std::vector<bool> pos(truth.size());
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probs[i].at(static_cast<std::size_t>(c));
      pos[i] = truth[i] == c;
    }
    const double ap = average_precision(scores, pos);
    r.per_class.push_back(ap);
    if (!std::isnan(ap)) {
      r.macro += ap;
      ++supported;
    }
  }
  if (supported > 0) r.macro /= supported;
  return r;
}

inline int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

struct MetricsReport {
  int classes = 0;
  std::uint64_t samples = 0;
  ConfusionMatrix confusion;
  std::vector<ClassMetrics> per_class;
  double macro_recall = 0.0, macro_precision = 0.0, macro_f1 = 0.0, macro_pr_auc = 0.0;
  int supported_classes = 0;
};

// Predicted class = argmax of the probabilities (lowest index on ties).
inline MetricsReport evaluate_predictions(const std::vector<int>& truth,
                                          const std::vector<std::vector<double>>& probs,
                                          int classes) {
  std::vector<int> pred;
  pred.reserve(probs.size());
  for (const auto& p : probs) pred.push_back(argmax(p));
  MetricsReport r;
  r.classes = classes;
  r.samples = truth.size();
  r.confusion = confusion_matrix(truth, pred, classes);
  const MacroMetrics mm = macro_metrics(r.confusion);
  const PrAuc pa = pr_auc_macro(truth, probs, classes);
  r.per_class = mm.per_class;
  for (int c = 0; c < classes; ++c)
    r.per_class[static_cast<std::size_t>(c)].pr_auc = pa.per_class[static_cast<std::size_t>(c)];
  r.macro_recall = mm.recall;
  r.macro_precision = mm.precision;
  r.macro_f1 = mm.f1;
  r.macro_pr_auc = pa.macro;
  r.supported_classes = mm.supported_classes;
  return r;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  using nlohmann::json;
  auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json j;
  j["pr_auc_definition"] = kPrAucDefinition;
  j["classes"] = r.classes;
  j["samples"] = r.samples;
  j["supported_classes"] = r.supported_classes;
  j["confusion"] = r.confusion;
  json pc = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& k = r.per_class[c];
    pc.push_back({{"class", c},
                  {"support", k.support},
                  {"recall", num(k.recall)},
                  {"precision", num(k.precision)},
                  {"f1", num(k.f1)},
                  {"pr_auc", num(k.pr_auc)}});
  }
  j["per_class"] = std::move(pc);
  j["macro"] = {{"recall", r.macro_recall},
                {"precision", r.macro_precision},
                {"f1", r.macro_f1},
                {"pr_auc", r.macro_pr_auc}};
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.classes = j.at("classes").get<int>();
    r.samples = j.at("samples").get<std::uint64_t>();
    r.supported_classes = j.at("supported_classes").get<int>();
    r.confusion = j.at("confusion").get<ConfusionMatrix>();
    auto num = [](const nlohmann::json& v) {
      return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    };
    for (const auto& e : j.at("per_class")) {
      ClassMetrics k;
      k.support = e.at("support").get<std::uint64_t>();
      k.recall = num(e.at("recall"));
      k.precision = num(e.at("precision"));
      k.f1 = num(e.at("f1"));
      k.pr_auc = num(e.at("pr_auc"));
      r.per_class.push_back(k);
    }
    const auto& m = j.at("macro");
    r.macro_recall = m.at("recall").get<double>();
    r.macro_precision = m.at("precision").get<double>();
    r.macro_f1 = m.at("f1").get<double>();
    r.macro_pr_auc = m.at("pr_auc").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics report: ") + e.what());
  }
  return r;
}

// One row per class plus a macro row.
inline void write_report_csv(const MetricsReport& r, const std::string& path) {
  auto out = csv::open_output(path);
  out << "# " << kPrAucDefinition << '\n';
  out << "class,support,recall,precision,f1,pr_auc\n";
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& k = r.per_class[c];
    out << c << ',' << k.support << ',' << csv::format_double(k.recall) << ','
        << csv::format_double(k.precision) << ',' << csv::format_double(k.f1) << ','
        << csv::format_double(k.pr_auc) << '\n';
  }
  out << "macro," << r.samples << ',' << csv::format_double(r.macro_recall) << ','
      << csv::format_double(r.macro_precision) << ',' << csv::format_double(r.macro_f1) << ','
      << csv::format_double(r.macro_pr_auc) << '\n';
}

inline void write_confusion_csv(const ConfusionMatrix& m, const std::string& path) {
  auto out = csv::open_output(path);
  out << "true\\pred";
  for (std::size_t c = 0; c < m.size(); ++c) out << ',' << c;
  out << '\n';
  for (std::size_t t = 0; t < m.size(); ++t) {
    out << t;
    for (auto v : m[t]) out << ',' << v;
    out << '\n';
  }
}

}  // namespace glyconet
