#pragma once

// Synthetic CGM cohorts.
//
// Background: baseline + amplitude * sin(2 pi t / 1 day + phase) plus AR(1)
// noise with stationary std `noise_std`. An episode is a linear descent
//   g(delta) = 70 + slope * (delta + ramp_shift),  0 < delta <= 150 (+ shift)
// where delta is minutes before onset, joined to the background by a 60
// minute blend, followed by 3-6 event points <= 70 mg/dL and a 60 minute
// recovery. slope is drawn so that g(120) lies in [ramp_top_lo, ramp_top_hi].
//
// Streams: subject i draws from mt19937_64 seeded with
// splitmix64-mixed (seed, i); all distributions are implemented in rng.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "glyconet/csv.hpp"
#include "glyconet/domain.hpp"
#include "glyconet/error.hpp"
#include "glyconet/ingestion.hpp"
#include "glyconet/parallel.hpp"
#include "glyconet/rng.hpp"

namespace glyconet {

struct GroupRegime {
  double baseline_offset = 0.0;
  double amplitude_scale = 1.0;
  int ramp_shift_minutes = 0;  // multiple of 5
};

struct SynthConfig {
  std::array<int, 4> subjects_per_group{12, 12, 12, 12};
  int unknown_age_subjects = 0;
  int days = 30;
  double baseline = 170.0;
  double amplitude = 50.0;
  double ar_coefficient = 0.9;
  double noise_std = 2.0;  // stationary std of the AR(1) background noise
  double episodes_per_day = 1.0;
  double ramp_top_lo = 200.0;  // glucose 120 minutes before onset
  double ramp_top_hi = 230.0;
  double ramp_noise_std = 0.0;
  double nadir_lo = 45.0;
  double nadir_hi = 69.0;
  int recovery_minutes = 60;
  double gaps_per_day = 0.3;
  int gap_min_minutes = 5;
  int gap_max_minutes = 180;
  double spike_rate = 0.0005;  // fraction of points replaced by a value > 500
  std::uint64_t seed = 0;
  // Offsets loosely follow the ordering of group means in real cohorts.
  std::array<GroupRegime, 4> regimes{GroupRegime{9.0, 1.0, 0}, GroupRegime{15.0, 1.1, 0},
                                     GroupRegime{-3.0, 1.0, 0}, GroupRegime{-10.0, 0.9, 0}};
};

struct Episode {
  std::string subject_id;
  std::int64_t onset_time = 0;  // absolute minutes of the first point <= 70
  std::int64_t end_time = 0;    // absolute minutes of the last point <= 70
  double nadir = 0.0;
  double slope = 0.0;
  int ramp_shift_minutes = 0;
};

struct SynthCohort {
  Cohort cohort;  // raw series; dropped points are absent
  std::vector<Episode> episodes;  // sorted by (subject_id, onset_time)
};

inline constexpr std::int64_t kSynthT0 = 26297280;  // 2020-01-01T00:00Z in minutes
inline constexpr int kRampMinutes = 150;
inline constexpr int kBlendMinutes = 60;

namespace detail {

inline void validate(const SynthConfig& c) {
  if (c.days < 1) throw ConfigError("synth: days must be >= 1");
  for (int n : c.subjects_per_group)
    if (n < 0) throw ConfigError("synth: negative subject count");
  if (c.unknown_age_subjects < 0) throw ConfigError("synth: negative subject count");
  if (!(c.nadir_lo >= 45.0 && c.nadir_hi <= 69.0 && c.nadir_lo <= c.nadir_hi))
    throw ConfigError("synth: nadirs must lie in [45, 69]");
  if (!(c.ramp_top_lo > 70.0 && c.ramp_top_lo <= c.ramp_top_hi))
    throw ConfigError("synth: bad ramp top range");
  if (c.episodes_per_day < 0.0 || c.episodes_per_day > 3.0)
    throw ConfigError("synth: episodes_per_day must lie in [0, 3]");
  if (c.gap_min_minutes < 5 || c.gap_max_minutes < c.gap_min_minutes)
    throw ConfigError("synth: bad gap length range");
  if (!(c.ar_coefficient >= 0.0 && c.ar_coefficient < 1.0))
    throw ConfigError("synth: AR coefficient must lie in [0, 1)");
  for (const auto& r : c.regimes)
    if (r.ramp_shift_minutes < 0 || r.ramp_shift_minutes % 5 != 0)
      throw ConfigError("synth: ramp shift must be a non-negative multiple of 5");
}

inline std::array<int, 2> age_range(AgeGroup g) {
  switch (g) {
    case AgeGroup::G0_13: return {4, 13};
    case AgeGroup::G14_20: return {14, 20};
    case AgeGroup::G21_44: return {21, 44};
    case AgeGroup::G45_PLUS: return {45, 75};
    default: return {0, 0};
  }
}

struct SubjectPlan {
  std::string id;
  AgeGroup group = AgeGroup::UNKNOWN;
  GroupRegime regime;
};

inline void generate_subject(const SynthConfig& c, std::size_t index, const SubjectPlan& plan,
                             Subject& subject, GlucoseSeries& series,
                             std::vector<Episode>& episodes) {
  Rng rng(c.seed, index);
  subject.subject_id = plan.id;
  subject.sex = index % 2 ? Sex::M : Sex::F;
  subject.age_group = plan.group;
  if (plan.group != AgeGroup::UNKNOWN) {
    const auto [lo, hi] = age_range(plan.group);
    subject.age_years = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  const std::size_t n = static_cast<std::size_t>(c.days) * 288;
  std::vector<double> g(n);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double base = c.baseline + plan.regime.baseline_offset;
  const double amp = c.amplitude * plan.regime.amplitude_scale;
  const double innov = c.noise_std * std::sqrt(1.0 - c.ar_coefficient * c.ar_coefficient);
  double ar = c.noise_std * rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * 5.0;
    g[i] = base + amp * std::sin(2.0 * std::numbers::pi * t / 1440.0 + phase) + ar;
    ar = c.ar_coefficient * ar + innov * rng.normal();
  }

  // Event points are never dropped by the missingness pass.
  std::vector<bool> protect(n, false);
  const int shift = plan.regime.ramp_shift_minutes;
  const int pre = (kRampMinutes + shift + kBlendMinutes) / 5;  // grid steps before onset
  const int post = 6 + c.recovery_minutes / 5 + 1;
  for (int day = 0; day < c.days; ++day) {
    int k = static_cast<int>(std::floor(c.episodes_per_day));
    if (rng.uniform() < c.episodes_per_day - k) ++k;
    if (k == 0) continue;
    const int slot = 288 / k;
    for (int e = 0; e < k; ++e) {
      const int lo = day * 288 + e * slot + pre;
      const int hi = day * 288 + (e + 1) * slot - post;
      if (hi <= lo) continue;
      const int onset = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo)));
      const double top = rng.uniform(c.ramp_top_lo, c.ramp_top_hi);
      const double slope = (top - 70.0) / 120.0;
      const int ramp_steps = (kRampMinutes + shift) / 5;
      const int blend_steps = kBlendMinutes / 5;
      const double ramp_start = 70.0 + slope * (kRampMinutes + 2 * shift);
      // blend from background into the ramp start
      const int b0 = onset - ramp_steps - blend_steps;
      const double bg0 = g[static_cast<std::size_t>(b0)];
      for (int s = 1; s <= blend_steps; ++s) {
        const double w = static_cast<double>(s) / blend_steps;
        g[static_cast<std::size_t>(b0 + s)] = (1.0 - w) * bg0 + w * ramp_start;
      }
      for (int d = ramp_steps - 1; d >= 1; --d) {
        const double delta = 5.0 * d;
        g[static_cast<std::size_t>(onset - d)] =
            70.0 + slope * (delta + shift) + c.ramp_noise_std * rng.normal();
      }
      const int m = 3 + static_cast<int>(rng.below(4));
      const double nadir = rng.uniform(c.nadir_lo, c.nadir_hi);
      for (int j = 0; j < m; ++j) {
        const double v = 70.0 - (70.0 - nadir) * std::sin(std::numbers::pi * (j + 1) / (m + 1));
        g[static_cast<std::size_t>(onset + j)] = std::min(v, 69.9);
        protect[static_cast<std::size_t>(onset + j)] = true;
      }
      const int rec_steps = c.recovery_minutes / 5;
      const int r0 = onset + m;
      const std::size_t r_end = std::min<std::size_t>(n - 1, static_cast<std::size_t>(r0 + rec_steps));
      const double target = g[r_end];
      for (int s = 0; s < rec_steps && static_cast<std::size_t>(r0 + s) < r_end; ++s) {
        const double w = static_cast<double>(s + 1) / (rec_steps + 1);
        g[static_cast<std::size_t>(r0 + s)] = std::max(75.0, (1.0 - w) * 75.0 + w * target);
      }
      Episode ep;
      ep.subject_id = plan.id;
      ep.onset_time = kSynthT0 + 5LL * onset;
      ep.end_time = kSynthT0 + 5LL * (onset + m - 1);
      ep.nadir = nadir;
      ep.slope = slope;
      ep.ramp_shift_minutes = shift;
      episodes.push_back(ep);
    }
  }

  std::vector<bool> keep(n, true);
  const double gap_rate = c.gaps_per_day / 288.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (gap_rate > 0.0 && rng.uniform() < gap_rate) {
      const int steps_lo = c.gap_min_minutes / 5, steps_hi = c.gap_max_minutes / 5;
      const std::size_t len = static_cast<std::size_t>(
          steps_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(steps_hi - steps_lo + 1))));
      for (std::size_t j = i; j < std::min(n, i + len); ++j)
        if (!protect[j]) keep[j] = false;
    }
    if (c.spike_rate > 0.0 && rng.uniform() < c.spike_rate && !protect[i])
      g[i] = rng.uniform(510.0, 650.0);
  }

  series.subject_id = plan.id;
  series.t0 = kSynthT0;
  series.rate_minutes = 5;
  series.points.clear();
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) series.points.push_back({static_cast<std::int64_t>(5 * i), g[i]});
}

}  // namespace detail

inline SynthCohort generate_cohort(const SynthConfig& config) {
  detail::validate(config);
  std::vector<detail::SubjectPlan> plans;
  int serial = 0;
  auto id = [&] {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "syn%04d", serial++);
    return std::string(buf);
  };
  for (std::size_t gi = 0; gi < kAgeGroups.size(); ++gi)
    for (int i = 0; i < config.subjects_per_group[gi]; ++i)
      plans.push_back({id(), kAgeGroups[gi], config.regimes[gi]});
  for (int i = 0; i < config.unknown_age_subjects; ++i)
    plans.push_back({id(), AgeGroup::UNKNOWN, GroupRegime{}});

  std::vector<Subject> subjects(plans.size());
  std::vector<GlucoseSeries> series(plans.size());
  std::vector<std::vector<Episode>> eps(plans.size());
  parallel_for(plans.size(), [&](std::size_t i) {
    detail::generate_subject(config, i, plans[i], subjects[i], series[i], eps[i]);
  });
  SynthCohort out;
  out.cohort.subjects = std::move(subjects);
  out.cohort.series = std::move(series);
  for (auto& e : eps) out.episodes.insert(out.episodes.end(), e.begin(), e.end());
  return out;
}

inline void write_episodes_csv(const std::vector<Episode>& episodes, const std::string& path) {
  auto out = csv::open_output(path);
  out << "subject_id,onset_time,end_time,nadir_mgdl,slope_mgdl_per_min,ramp_shift_minutes\n";
  for (const auto& e : episodes)
    out << e.subject_id << ',' << e.onset_time << ',' << e.end_time << ','
        << csv::format_double(e.nadir) << ',' << csv::format_double(e.slope) << ','
        << e.ramp_shift_minutes << '\n';
}

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
  nlohmann::json j;
  j["subjects_per_group"] = c.subjects_per_group;
  j["unknown_age_subjects"] = c.unknown_age_subjects;
  j["days"] = c.days;
  j["baseline"] = c.baseline;
  j["amplitude"] = c.amplitude;
  j["ar_coefficient"] = c.ar_coefficient;
  j["noise_std"] = c.noise_std;
  j["episodes_per_day"] = c.episodes_per_day;
  j["ramp_top"] = {c.ramp_top_lo, c.ramp_top_hi};
  j["ramp_noise_std"] = c.ramp_noise_std;
  j["nadir"] = {c.nadir_lo, c.nadir_hi};
  j["recovery_minutes"] = c.recovery_minutes;
  j["gaps_per_day"] = c.gaps_per_day;
  j["gap_minutes"] = {c.gap_min_minutes, c.gap_max_minutes};
  j["spike_rate"] = c.spike_rate;
  j["seed"] = c.seed;
  nlohmann::json regimes = nlohmann::json::object();
  for (std::size_t i = 0; i < kAgeGroups.size(); ++i)
    regimes[to_string(kAgeGroups[i])] = {{"baseline_offset", c.regimes[i].baseline_offset},
                                         {"amplitude_scale", c.regimes[i].amplitude_scale},
                                         {"ramp_shift_minutes", c.regimes[i].ramp_shift_minutes}};
  j["regimes"] = std::move(regimes);
  return j;
}

// Missing keys keep their defaults.
inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig c = {}) {
  try {
    if (j.contains("subjects_per_group"))
      c.subjects_per_group = j.at("subjects_per_group").get<std::array<int, 4>>();
    c.unknown_age_subjects = j.value("unknown_age_subjects", c.unknown_age_subjects);
    c.days = j.value("days", c.days);
    c.baseline = j.value("baseline", c.baseline);
    c.amplitude = j.value("amplitude", c.amplitude);
    c.ar_coefficient = j.value("ar_coefficient", c.ar_coefficient);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.episodes_per_day = j.value("episodes_per_day", c.episodes_per_day);
    if (j.contains("ramp_top")) {
      c.ramp_top_lo = j.at("ramp_top").at(0).get<double>();
      c.ramp_top_hi = j.at("ramp_top").at(1).get<double>();
    }
    c.ramp_noise_std = j.value("ramp_noise_std", c.ramp_noise_std);
    if (j.contains("nadir")) {
      c.nadir_lo = j.at("nadir").at(0).get<double>();
      c.nadir_hi = j.at("nadir").at(1).get<double>();
    }
    c.recovery_minutes = j.value("recovery_minutes", c.recovery_minutes);
    c.gaps_per_day = j.value("gaps_per_day", c.gaps_per_day);
    if (j.contains("gap_minutes")) {
      c.gap_min_minutes = j.at("gap_minutes").at(0).get<int>();
      c.gap_max_minutes = j.at("gap_minutes").at(1).get<int>();
    }
    c.spike_rate = j.value("spike_rate", c.spike_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("regimes"))
      for (const auto& [name, r] : j.at("regimes").items()) {
        const AgeGroup g = parse_age_group(name);
        const auto it = std::find(kAgeGroups.begin(), kAgeGroups.end(), g);
        if (it == kAgeGroups.end()) throw ConfigError("synth: no regime for group " + name);
        auto& reg = c.regimes[static_cast<std::size_t>(it - kAgeGroups.begin())];
        reg.baseline_offset = r.value("baseline_offset", reg.baseline_offset);
        reg.amplitude_scale = r.value("amplitude_scale", reg.amplitude_scale);
        reg.ramp_shift_minutes = r.value("ramp_shift_minutes", reg.ramp_shift_minutes);
      }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  return c;
}

}  // namespace glyconet
