#pragma once

// Hypoglycemia-onset labels. A point is class 0 when glucose <= 70 mg/dL;
// any other observed point is classed by the lead time to the next class-0
// point within the same contiguous run of observed grid points.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glyconet/csv.hpp"
#include "glyconet/domain.hpp"
#include "glyconet/parallel.hpp"

namespace glyconet {

struct LabeledSeries {
  GlucoseSeries series;
  std::vector<Label> labels;  // one per point
  LabelScheme scheme = LabelScheme::SET_II;
};

namespace detail {

// Calls emit(i, lead) for every observed point, from the back, where lead is
// the minutes to the next class-0 point of the same segment (0 for class-0
// points themselves, nullopt when there is none). Missing points and grid
// discontinuities end a segment.
template <typename Emit>
void scan_leads(const GlucoseSeries& s, Emit&& emit) {
  std::optional<std::int64_t> next_event;
  for (std::size_t i = s.points.size(); i-- > 0;) {
    const auto& p = s.points[i];
    if (i + 1 < s.points.size() && s.points[i + 1].offset - p.offset != s.rate_minutes)
      next_event.reset();
    if (!p.observed()) {
      next_event.reset();
      emit(i, std::optional<std::int64_t>{}, false);
      continue;
    }
    if (p.glucose <= kHypoThreshold) {
      next_event = p.offset;
      emit(i, std::optional<std::int64_t>{0}, true);
    } else if (next_event) {
      emit(i, std::optional<std::int64_t>{*next_event - p.offset}, true);
    } else {
      emit(i, std::optional<std::int64_t>{}, true);
    }
  }
}

}  // namespace detail

inline LabeledSeries assign_classes(const GlucoseSeries& series, const ClassSetSpec& spec) {
  LabeledSeries out{series, std::vector<Label>(series.points.size(), kUnlabeled),
                    scheme_of(spec.name)};
  detail::scan_leads(series, [&](std::size_t i, std::optional<std::int64_t> lead,
                                 bool observed) {
    if (!observed) return;
    if (lead && *lead == 0) {
      out.labels[i] = ClassSetSpec::kEventClass;
    } else if (lead) {
      const auto c = spec.class_for_lead(static_cast<int>(*lead));
      out.labels[i] = c ? *c : kNoRisk;
    } else {
      out.labels[i] = kNoRisk;
    }
  });
  return out;
}

inline LabeledSeries assign_binary_risk(const GlucoseSeries& series) {
  LabeledSeries out{series, std::vector<Label>(series.points.size(), kUnlabeled),
                    LabelScheme::BINARY};
  detail::scan_leads(series, [&](std::size_t i, std::optional<std::int64_t> lead,
                                 bool observed) {
    if (!observed) return;
    out.labels[i] = (lead && *lead <= ClassSetSpec::kNoRiskThresholdMinutes) ? kBinaryRisk
                                                                            : kBinaryNoRisk;
  });
  return out;
}

inline LabeledSeries label_series(const GlucoseSeries& series, LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::SET_I: return assign_classes(series, class_set(ClassSet::SET_I));
    case LabelScheme::SET_II: return assign_classes(series, class_set(ClassSet::SET_II));
    case LabelScheme::SET_III: return assign_classes(series, class_set(ClassSet::SET_III));
    case LabelScheme::BINARY: return assign_binary_risk(series);
  }
  throw ConfigError("unknown label scheme");
}

inline std::vector<LabeledSeries> label_all(const std::vector<GlucoseSeries>& series,
                                            LabelScheme scheme) {
  std::vector<LabeledSeries> out(series.size());
  parallel_for(series.size(), [&](std::size_t i) { out[i] = label_series(series[i], scheme); });
  return out;
}

struct ClassDistribution {
  LabelScheme scheme = LabelScheme::SET_II;
  std::vector<std::uint64_t> counts;  // per class index
  std::uint64_t no_risk = 0;
  std::uint64_t unlabeled = 0;

  std::uint64_t labeled_total() const {
    std::uint64_t n = no_risk;
    for (auto c : counts) n += c;
    return n;
  }
};

inline ClassDistribution class_distribution(const std::vector<LabeledSeries>& labeled,
                                            LabelScheme scheme) {
  ClassDistribution d;
  d.scheme = scheme;
  d.counts.assign(static_cast<std::size_t>(num_classes(scheme)), 0);
  for (const auto& ls : labeled)
    for (Label l : ls.labels) {
      if (l == kUnlabeled)
        ++d.unlabeled;
      else if (l == kNoRisk)
        ++d.no_risk;
      else
        ++d.counts.at(static_cast<std::size_t>(l));
    }
  return d;
}

inline void write_class_distribution_csv(const ClassDistribution& d, const std::string& path) {
  auto out = csv::open_output(path);
  out << "class,count\n";
  for (std::size_t c = 0; c < d.counts.size(); ++c) out << c << ',' << d.counts[c] << '\n';
  if (d.scheme != LabelScheme::BINARY) out << "NO_RISK," << d.no_risk << '\n';
  out << "UNLABELED," << d.unlabeled << '\n';
}

}  // namespace glyconet
