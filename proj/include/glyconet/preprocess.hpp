#pragma once

// Cleaning and gap imputation for CGM series: grid snapping, IQR outlier
// removal, the 40-500 mg/dL physiologic clamp and gap-length dependent
// interpolation (linear for short gaps, Stineman for medium gaps).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/log.hpp"
#include "glyconet/parallel.hpp"

namespace glyconet {

// ---------------------------------------------------------------------------
// Grid

// Nearest multiple of 5, ties to the even multiple.
inline std::int64_t snap_to_five(std::int64_t offset) {
  std::int64_t q = offset / 5;
  std::int64_t r = offset % 5;
  if (r < 0) {
    r += 5;
    q -= 1;
  }
  if (2 * r > 5 || (2 * r == 5 && (q % 2 != 0))) ++q;
  return q * 5;
}

// Snaps offsets to the 5-minute grid; for rate 15 keeps only the points on
// 15-minute multiples. Points landing on the same grid slot collapse to the
// mean of their observed values.
inline GlucoseSeries resample_to_grid(const GlucoseSeries& series, int rate) {
  if (rate != 5 && rate != 15)
    throw ConfigError("sampling rate must be 5 or 15 minutes, got " + std::to_string(rate));
  std::map<std::int64_t, std::pair<double, int>> slots;  // offset -> (sum, count)
  for (const auto& p : series.points) {
    const std::int64_t off = snap_to_five(p.offset);
    if (rate == 15 && off % 15 != 0) continue;
    auto& slot = slots[off];
    if (p.observed()) {
      slot.first += p.glucose;
      slot.second += 1;
    }
  }
  GlucoseSeries out;
  out.subject_id = series.subject_id;
  out.t0 = series.t0;
  out.rate_minutes = rate;
  out.points.reserve(slots.size());
  for (const auto& [off, acc] : slots)
    out.points.push_back(
        {off, acc.second > 0 ? acc.first / static_cast<double>(acc.second) : kMissing});
  return out;
}

// Inserts MISSING points so that every grid slot between the first and last
// offset is present.
inline GlucoseSeries densify(const GlucoseSeries& series) {
  GlucoseSeries out = series;
  if (series.points.empty()) return out;
  const std::int64_t rate = series.rate_minutes;
  const std::int64_t first = series.points.front().offset;
  const std::int64_t last = series.points.back().offset;
  out.points.clear();
  out.points.reserve(static_cast<std::size_t>((last - first) / rate + 1));
  std::size_t j = 0;
  for (std::int64_t off = first; off <= last; off += rate) {
    while (j < series.points.size() && series.points[j].offset < off) ++j;
    if (j < series.points.size() && series.points[j].offset == off)
      out.points.push_back(series.points[j]);
    else
      out.points.push_back({off, kMissing});
  }
  return out;
}

inline bool is_dense(const GlucoseSeries& s) {
  for (std::size_t i = 1; i < s.points.size(); ++i)
    if (s.points[i].offset - s.points[i - 1].offset != s.rate_minutes) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Cleaning

// Quantile by linear interpolation between order statistics ("type 7").
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InternalError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct IqrFences {
  double q1 = 0.0, q3 = 0.0, lower = 0.0, upper = 0.0;
};

inline std::optional<IqrFences> iqr_fences(const GlucoseSeries& series) {
  std::vector<double> v;
  for (const auto& p : series.points)
    if (p.observed()) v.push_back(p.glucose);
  if (v.size() < 4) return std::nullopt;
  std::sort(v.begin(), v.end());
  IqrFences f;
  f.q1 = quantile_type7(v, 0.25);
  f.q3 = quantile_type7(v, 0.75);
  const double iqr = f.q3 - f.q1;
  f.lower = f.q1 - 1.5 * iqr;
  f.upper = f.q3 + 1.5 * iqr;
  return f;
}

inline GlucoseSeries remove_outliers_iqr(const GlucoseSeries& series) {
  const auto fences = iqr_fences(series);
  if (!fences) {
    warn("subject " + series.subject_id +
         ": fewer than 4 observed values, IQR outlier removal skipped");
    return series;
  }
  GlucoseSeries out = series;
  for (auto& p : out.points)
    if (p.observed() && (p.glucose < fences->lower || p.glucose > fences->upper))
      p.glucose = kMissing;
  return out;
}

inline GlucoseSeries clamp_physiologic(const GlucoseSeries& series) {
  GlucoseSeries out = series;
  for (auto& p : out.points)
    if (p.observed() && (p.glucose < kGlucoseFloor || p.glucose > kGlucoseCeiling))
      p.glucose = kMissing;
  return out;
}

// ---------------------------------------------------------------------------
// Gaps

enum class GapTreatment { LINEAR, STINEMAN, LEFT_OPEN };

inline std::string to_string(GapTreatment t) {
  switch (t) {
    case GapTreatment::LINEAR: return "LINEAR";
    case GapTreatment::STINEMAN: return "STINEMAN";
    case GapTreatment::LEFT_OPEN: return "LEFT_OPEN";
  }
  return "?";
}

inline constexpr std::int64_t kMaxLinearGapMinutes = 25;
inline constexpr std::int64_t kMaxStinemanGapMinutes = 115;

struct Gap {
  std::int64_t start_offset = 0;    // first missing grid slot
  std::int64_t length_minutes = 0;  // duration covered by missing slots
  GapTreatment treatment = GapTreatment::LEFT_OPEN;
  friend bool operator==(const Gap&, const Gap&) = default;
};

struct GapReport {
  std::vector<Gap> gaps;
};

inline GapTreatment treatment_for_length(std::int64_t length_minutes) {
  if (length_minutes <= kMaxLinearGapMinutes) return GapTreatment::LINEAR;
  if (length_minutes <= kMaxStinemanGapMinutes) return GapTreatment::STINEMAN;
  return GapTreatment::LEFT_OPEN;
}

// Maximal runs of missing or absent grid slots. Interior runs are classified
// by length; leading and trailing runs are always LEFT_OPEN.
inline GapReport classify_gaps(const GlucoseSeries& series) {
  GapReport r;
  if (series.points.empty()) return r;
  const std::int64_t rate = series.rate_minutes;
  const std::int64_t first = series.points.front().offset;
  const std::int64_t last = series.points.back().offset;
  std::optional<std::int64_t> prev;
  for (const auto& p : series.points) {
    if (!p.observed()) continue;
    if (!prev) {
      if (p.offset > first) r.gaps.push_back({first, p.offset - first, GapTreatment::LEFT_OPEN});
    } else if (p.offset - *prev > rate) {
      const std::int64_t len = p.offset - *prev - rate;
      r.gaps.push_back({*prev + rate, len, treatment_for_length(len)});
    }
    prev = p.offset;
  }
  if (!prev)
    r.gaps.push_back({first, last - first + rate, GapTreatment::LEFT_OPEN});
  else if (last > *prev)
    r.gaps.push_back({*prev + rate, last - *prev, GapTreatment::LEFT_OPEN});
  return r;
}

namespace detail {

struct Knot {
  double x, y;
};

inline std::size_t index_of(const GlucoseSeries& dense, std::int64_t offset) {
  const std::int64_t first = dense.points.front().offset;
  const auto i = static_cast<std::size_t>((offset - first) / dense.rate_minutes);
  if (i >= dense.points.size() || dense.points[i].offset != offset)
    throw InternalError("offset " + std::to_string(offset) + " not on the series grid");
  return i;
}

// Anchors of an interior gap on a dense series.
inline std::pair<std::size_t, std::size_t> gap_anchors(const GlucoseSeries& dense,
                                                       const Gap& gap) {
  const std::int64_t rate = dense.rate_minutes;
  if (dense.points.empty()) throw InternalError("gap on empty series");
  const std::int64_t a_off = gap.start_offset - rate;
  const std::int64_t b_off = gap.start_offset + gap.length_minutes;
  if (a_off < dense.points.front().offset || b_off > dense.points.back().offset)
    throw InternalError("gap at " + std::to_string(gap.start_offset) + " has no anchors");
  const std::size_t a = index_of(dense, a_off), b = index_of(dense, b_off);
  if (!dense.points[a].observed() || !dense.points[b].observed())
    throw InternalError("gap at " + std::to_string(gap.start_offset) +
                        " has an unobserved anchor");
  return {a, b};
}

inline double clamp_glucose(double v) { return std::clamp(v, kGlucoseFloor, kGlucoseCeiling); }

}  // namespace detail

// Slope at the middle of three knots from the circle through them (Stineman
// 1980).
inline double stineman_slope(double x0, double y0, double x1, double y1, double x2, double y2) {
  const double dx1 = x1 - x0, dy1 = y1 - y0;
  const double dx2 = x2 - x1, dy2 = y2 - y1;
  const double r1 = dx1 * dx1 + dy1 * dy1;
  const double r2 = dx2 * dx2 + dy2 * dy2;
  return (dy1 * r2 + dy2 * r1) / (dx1 * r2 + dx2 * r1);
}

// Stineman's rational interpolant between knots (xa, ya) and (xb, yb) with
// knot slopes pa and pb.
inline double stineman_value(double x, double xa, double ya, double pa, double xb, double yb,
                             double pb) {
  const double s = (yb - ya) / (xb - xa);
  const double y0 = ya + s * (x - xa);
  const double d1 = (pa - s) * (x - xa);
  const double d2 = (pb - s) * (x - xb);
  const double prod = d1 * d2;
  if (prod > 0.0) return y0 + prod / (d1 + d2);
  if (prod < 0.0) return y0 + prod * ((x - xa) + (x - xb)) / ((d1 - d2) * (xb - xa));
  return y0;
}

// Caps a knot slope that agrees in sign with the gap chord at 3x the chord.
// Knots just outside a long gap can give slopes steep enough for the
// rational form to overshoot between monotone anchors; inside the cap it
// cannot.
inline double limit_slope(double slope, double chord) {
  if (chord > 0.0 && slope > 3.0 * chord) return 3.0 * chord;
  if (chord < 0.0 && slope < 3.0 * chord) return 3.0 * chord;
  return slope;
}

namespace detail {

// Both fills read knots from `src` and write the gap slots of `dst`; the two
// share a grid.
inline void fill_linear(const GlucoseSeries& src, const Gap& gap, GlucoseSeries& dst) {
  const auto [a, b] = gap_anchors(src, gap);
  const double xa = static_cast<double>(src.points[a].offset);
  const double xb = static_cast<double>(src.points[b].offset);
  const double ya = src.points[a].glucose, yb = src.points[b].glucose;
  for (std::size_t i = a + 1; i < b; ++i) {
    const double t = (static_cast<double>(src.points[i].offset) - xa) / (xb - xa);
    dst.points[i].glucose = ya + t * (yb - ya);
  }
}

inline void fill_stineman(const GlucoseSeries& src, const Gap& gap, GlucoseSeries& dst) {
  const auto [a, b] = gap_anchors(src, gap);
  auto knot = [&](std::size_t i) {
    return Knot{static_cast<double>(src.points[i].offset), src.points[i].glucose};
  };
  const Knot ka = knot(a), kb = knot(b);
  std::optional<Knot> before, after;
  for (std::size_t i = a; i-- > 0;)
    if (src.points[i].observed()) {
      before = knot(i);
      break;
    }
  for (std::size_t i = b + 1; i < src.points.size(); ++i)
    if (src.points[i].observed()) {
      after = knot(i);
      break;
    }
  const double secant = (kb.y - ka.y) / (kb.x - ka.x);
  const double pa = limit_slope(
      before ? stineman_slope(before->x, before->y, ka.x, ka.y, kb.x, kb.y) : secant, secant);
  const double pb =
      limit_slope(after ? stineman_slope(ka.x, ka.y, kb.x, kb.y, after->x, after->y) : secant, secant);
  for (std::size_t i = a + 1; i < b; ++i) {
    const double x = static_cast<double>(src.points[i].offset);
    dst.points[i].glucose = clamp_glucose(stineman_value(x, ka.x, ka.y, pa, kb.x, kb.y, pb));
  }
}

}  // namespace detail

inline GlucoseSeries interpolate_linear(const GlucoseSeries& series, const Gap& gap) {
  const GlucoseSeries src = is_dense(series) ? series : densify(series);
  GlucoseSeries out = src;
  detail::fill_linear(src, gap, out);
  return out;
}

// Fills the gap from its two anchors and the nearest observed knot on each
// side. Without an outer knot the anchor slope is the one-sided secant.
// Values are clamped to the physiologic range.
inline GlucoseSeries interpolate_stineman(const GlucoseSeries& series, const Gap& gap) {
  const GlucoseSeries src = is_dense(series) ? series : densify(series);
  GlucoseSeries out = src;
  detail::fill_stineman(src, gap, out);
  return out;
}

// Classifies the gaps of a cleaned, gridded series and fills LINEAR and
// STINEMAN ones. Every fill uses only the values observed on input, so the
// result does not depend on the order gaps are processed in. The output is
// dense on the series grid; LEFT_OPEN gaps stay MISSING.
inline std::pair<GlucoseSeries, GapReport> impute_series(const GlucoseSeries& series) {
  const GlucoseSeries dense = densify(series);
  GapReport report = classify_gaps(dense);
  GlucoseSeries out = dense;
  for (const auto& gap : report.gaps) {
    if (gap.treatment == GapTreatment::LINEAR)
      detail::fill_linear(dense, gap, out);
    else if (gap.treatment == GapTreatment::STINEMAN)
      detail::fill_stineman(dense, gap, out);
  }
  return {std::move(out), std::move(report)};
}

struct PreprocessResult {
  GlucoseSeries series;
  GapReport gaps;
};

// resample -> IQR -> clamp -> impute for one subject.
inline PreprocessResult preprocess_series(const GlucoseSeries& raw, int rate) {
  GlucoseSeries s = resample_to_grid(raw, rate);
  s = remove_outliers_iqr(s);
  s = clamp_physiologic(s);
  auto [imputed, gaps] = impute_series(s);
  return {std::move(imputed), std::move(gaps)};
}

inline std::vector<PreprocessResult> preprocess_all(const std::vector<GlucoseSeries>& raw,
                                                    int rate) {
  std::vector<PreprocessResult> out(raw.size());
  parallel_for(raw.size(), [&](std::size_t i) { out[i] = preprocess_series(raw[i], rate); });
  return out;
}

}  // namespace glyconet
