#pragma once

// Tukey HSD straight from the textbook formula, two passes over raw values.

#include <cmath>
#include <vector>

namespace oracle {

struct HsdPair {
  double diff, lo, hi;
};

// pairs (i, j), i < j, in lexicographic order; diff = mean_j - mean_i
inline std::vector<HsdPair> hsd(const std::vector<std::vector<double>>& groups, double q) {
  std::vector<double> means;
  double sse = 0.0;
  std::size_t total = 0;
  for (const auto& g : groups) {
    double s = 0.0;
    for (double v : g) s += v;
    const double m = s / g.size();
    means.push_back(m);
    for (double v : g) sse += (v - m) * (v - m);
    total += g.size();
  }
  const double mse = sse / double(total - groups.size());
  std::vector<HsdPair> out;
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      const double se = std::sqrt(mse / 2.0 * (1.0 / groups[i].size() + 1.0 / groups[j].size()));
      const double d = means[j] - means[i];
      out.push_back({d, d - q * se, d + q * se});
    }
  return out;
}

}  // namespace oracle
