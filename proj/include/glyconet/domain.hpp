#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "glyconet/error.hpp"

namespace glyconet {

inline constexpr const char* kPipelineVersion = "glyconet-1.0.0";

// ---------------------------------------------------------------------------
// Glucose values

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

inline constexpr double kGlucoseFloor = 40.0;
inline constexpr double kGlucoseCeiling = 500.0;
inline constexpr double kHypoThreshold = 70.0;

struct GlucosePoint {
  std::int64_t offset = 0;  // minutes since the series' t0
  double glucose = kMissing;

  bool observed() const { return !is_missing(glucose); }
  friend bool operator==(const GlucosePoint& a, const GlucosePoint& b) {
    return a.offset == b.offset &&
           (a.glucose == b.glucose || (is_missing(a.glucose) && is_missing(b.glucose)));
  }
};

// One subject's CGM trace. Offsets are strictly increasing; after
// resampling every offset is a multiple of rate_minutes.
struct GlucoseSeries {
  std::string subject_id;
  std::int64_t t0 = 0;  // absolute minutes since the Unix epoch
  int rate_minutes = 5;
  std::vector<GlucosePoint> points;

  std::size_t observed_count() const {
    std::size_t n = 0;
    for (const auto& p : points) n += p.observed() ? 1 : 0;
    return n;
  }
  std::int64_t absolute_time(std::size_t i) const { return t0 + points[i].offset; }

  friend bool operator==(const GlucoseSeries&, const GlucoseSeries&) = default;
};

// ---------------------------------------------------------------------------
// Subjects and age groups

enum class AgeGroup { G0_13, G14_20, G21_44, G45_PLUS, UNKNOWN };
enum class Sex { F, M, UNKNOWN };

inline constexpr std::array<AgeGroup, 4> kAgeGroups = {
    AgeGroup::G0_13, AgeGroup::G14_20, AgeGroup::G21_44, AgeGroup::G45_PLUS};

inline AgeGroup age_group_of(int age_years) {
  if (age_years < 0) throw InternalError("negative age " + std::to_string(age_years));
  if (age_years <= 13) return AgeGroup::G0_13;
  if (age_years <= 20) return AgeGroup::G14_20;
  if (age_years <= 44) return AgeGroup::G21_44;
  return AgeGroup::G45_PLUS;
}

inline std::string to_string(AgeGroup g) {
  switch (g) {
    case AgeGroup::G0_13: return "0-13";
    case AgeGroup::G14_20: return "14-20";
    case AgeGroup::G21_44: return "21-44";
    case AgeGroup::G45_PLUS: return "45+";
    case AgeGroup::UNKNOWN: return "unknown";
  }
  return "unknown";
}

// Accepts the display labels above as well as the enum spellings.
inline AgeGroup parse_age_group(std::string_view s) {
  if (s == "0-13" || s == "G0_13" || s == "children") return AgeGroup::G0_13;
  if (s == "14-20" || s == "G14_20" || s == "teenagers") return AgeGroup::G14_20;
  if (s == "21-44" || s == "G21_44" || s == "adults") return AgeGroup::G21_44;
  if (s == "45+" || s == "45-100" || s == "G45_PLUS" || s == "seniors")
    return AgeGroup::G45_PLUS;
  if (s == "unknown" || s == "UNKNOWN" || s.empty()) return AgeGroup::UNKNOWN;
  throw ConfigError("unknown age group '" + std::string(s) + "'");
}

inline std::string to_string(Sex s) {
  switch (s) {
    case Sex::F: return "F";
    case Sex::M: return "M";
    case Sex::UNKNOWN: return "";
  }
  return "";
}

inline Sex parse_sex(std::string_view s) {
  if (s == "F" || s == "f" || s == "female") return Sex::F;
  if (s == "M" || s == "m" || s == "male") return Sex::M;
  return Sex::UNKNOWN;
}

struct Subject {
  std::string subject_id;
  std::optional<int> age_years;
  Sex sex = Sex::UNKNOWN;
  AgeGroup age_group = AgeGroup::UNKNOWN;

  friend bool operator==(const Subject&, const Subject&) = default;
};

// Group for an age known only as a closed interval [lo, hi] (hi absent means
// unbounded). Only intervals that fit inside one bin resolve.
inline AgeGroup age_group_of_interval(int lo, std::optional<int> hi) {
  const AgeGroup g = age_group_of(lo);
  if (!hi) return g == AgeGroup::G45_PLUS ? g : AgeGroup::UNKNOWN;
  return age_group_of(*hi) == g ? g : AgeGroup::UNKNOWN;
}

// ---------------------------------------------------------------------------
// Class sets

enum class ClassSet { SET_I, SET_II, SET_III };

struct ClassBin {
  int class_index = 0;
  int lo_minutes = 0;
  int hi_minutes = 0;
  friend bool operator==(const ClassBin&, const ClassBin&) = default;
};

struct ClassSetSpec {
  static constexpr int kEventClass = 0;
  static constexpr int kNoRiskThresholdMinutes = 120;

  ClassSet name = ClassSet::SET_II;
  std::vector<ClassBin> bins;

  int num_classes() const { return static_cast<int>(bins.size()) + 1; }

  // Class for a lead time of `minutes` before a class-0 point, or nullopt
  // when the lead lies beyond the risk horizon.
  std::optional<int> class_for_lead(int minutes) const {
    if (minutes > kNoRiskThresholdMinutes) return std::nullopt;
    if (minutes % 5 == 0)
      for (const auto& b : bins)
        if (minutes >= b.lo_minutes && minutes <= b.hi_minutes) return b.class_index;
    throw InternalError("lead time " + std::to_string(minutes) +
                        " min is not on the 5-minute grid");
  }
};

inline ClassSetSpec class_set(ClassSet name) {
  switch (name) {
    case ClassSet::SET_I:
      return {name, {{1, 5, 10}, {2, 15, 25}, {3, 30, 55}, {4, 60, 120}}};
    case ClassSet::SET_II:
      return {name, {{1, 5, 15}, {2, 20, 45}, {3, 50, 120}}};
    case ClassSet::SET_III:
      return {name, {{1, 5, 20}, {2, 25, 60}, {3, 65, 120}}};
  }
  throw ConfigError("unknown class set");
}

inline ClassSet parse_class_set(std::string_view s) {
  if (s == "I" || s == "1" || s == "SET_I") return ClassSet::SET_I;
  if (s == "II" || s == "2" || s == "SET_II") return ClassSet::SET_II;
  if (s == "III" || s == "3" || s == "SET_III") return ClassSet::SET_III;
  throw ConfigError("unknown class set '" + std::string(s) + "' (expected I, II or III)");
}

inline std::string to_string(ClassSet s) {
  switch (s) {
    case ClassSet::SET_I: return "I";
    case ClassSet::SET_II: return "II";
    case ClassSet::SET_III: return "III";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Labels

using Label = int;
inline constexpr Label kNoRisk = -1;     // beyond the 120-minute horizon
inline constexpr Label kUnlabeled = -2;  // glucose missing
// Binary risk scheme: RISK = 1, NO_RISK = 0.
inline constexpr Label kBinaryRisk = 1;
inline constexpr Label kBinaryNoRisk = 0;

// Which labelling produced a label vector.
enum class LabelScheme { SET_I, SET_II, SET_III, BINARY };

inline LabelScheme scheme_of(ClassSet s) {
  switch (s) {
    case ClassSet::SET_I: return LabelScheme::SET_I;
    case ClassSet::SET_II: return LabelScheme::SET_II;
    case ClassSet::SET_III: return LabelScheme::SET_III;
  }
  return LabelScheme::SET_II;
}

inline std::string to_string(LabelScheme s) {
  switch (s) {
    case LabelScheme::SET_I: return "I";
    case LabelScheme::SET_II: return "II";
    case LabelScheme::SET_III: return "III";
    case LabelScheme::BINARY: return "binary";
  }
  return "?";
}

inline LabelScheme parse_label_scheme(std::string_view s) {
  if (s == "binary" || s == "BINARY") return LabelScheme::BINARY;
  return scheme_of(parse_class_set(s));
}

inline int num_classes(LabelScheme s) {
  if (s == LabelScheme::BINARY) return 2;
  switch (s) {
    case LabelScheme::SET_I: return class_set(ClassSet::SET_I).num_classes();
    case LabelScheme::SET_II: return class_set(ClassSet::SET_II).num_classes();
    case LabelScheme::SET_III: return class_set(ClassSet::SET_III).num_classes();
    default: return 2;
  }
}

// ---------------------------------------------------------------------------
// Windows

struct WindowSample {
  std::string subject_id;
  std::int64_t end_time = 0;  // absolute minutes of the last point
  std::vector<double> features;
  Label label = kUnlabeled;
  AgeGroup age_group = AgeGroup::UNKNOWN;

  friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

inline int window_length(int isl_minutes, int rate_minutes) {
  if (rate_minutes <= 0 || isl_minutes % rate_minutes != 0)
    throw ConfigError("ISL " + std::to_string(isl_minutes) +
                      " is not a multiple of the sampling rate " +
                      std::to_string(rate_minutes));
  return isl_minutes / rate_minutes + 1;
}

}  // namespace glyconet
