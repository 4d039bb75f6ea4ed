#pragma once

// Distribution of the studentized range Q = (max - min) / s for k normal
// means and an independent variance estimate with df degrees of freedom.
//
//   P(Q <= q | k, inf) = k * int phi(z) [Phi(z) - Phi(z - q)]^(k-1) dz
//   P(Q <= q | k, df)  = int f_df(s) P(Q <= q s | k, inf) ds
//
// where f_df is the density of sqrt(chi2_df / df).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>
#include <utility>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include "glyconet/error.hpp"

namespace glyconet {

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Composite 30-point Gauss-Legendre over equal panels.
template <class F>
double integrate_panels(F&& f, double a, double b, int panels) {
  using boost::math::quadrature::gauss;
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double lo = a + i * h;
    sum += gauss<double, 30>::integrate(f, lo, lo + h);
  }
  return sum;
}

}  // namespace detail

inline double studentized_range_cdf_inf(double q, int k) {
  if (q <= 0.0) return 0.0;
  auto f = [&](double z) {
    const double d = detail::normal_cdf(z) - detail::normal_cdf(z - q);
    return detail::normal_pdf(z) * std::pow(d, k - 1);
  };
  // The integrand vanishes outside [-9, 9 + q] to double precision.
  const double hi = 9.0 + q;
  const int panels = static_cast<int>(std::ceil((hi + 9.0) / 2.0)) + 1;
  return std::clamp(k * detail::integrate_panels(f, -9.0, hi, panels), 0.0, 1.0);
}

// df <= 0 or infinite means a known variance.
inline double studentized_range_cdf(double q, int k, double df) {
  if (k < 2) throw ConfigError("studentized range needs k >= 2");
  if (!(df > 0.0) || std::isinf(df)) return studentized_range_cdf_inf(q, k);
  if (q <= 0.0) return 0.0;
  // Integration range from the Wilson-Hilferty approximation at +-12 sd;
  // the density is negligible outside it.
  auto wilson_hilferty = [&](double z) {
    const double c = 2.0 / (9.0 * df);
    return std::pow(std::max(0.0, 1.0 - c + z * std::sqrt(c)), 3.0);
  };
  const double s_lo = std::sqrt(wilson_hilferty(-12.0));
  const double s_hi = std::sqrt(wilson_hilferty(12.0));
  const double log_norm = std::log(2.0) + 0.5 * df * std::log(0.5 * df) - std::lgamma(0.5 * df);
  auto density = [&](double s) {
    if (s <= 0.0) return 0.0;
    return std::exp(log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s);
  };
  auto f = [&](double s) {
    const double w = density(s);
    return w > 0.0 ? w * studentized_range_cdf_inf(q * s, k) : 0.0;
  };
  return std::clamp(detail::integrate_panels(f, s_lo, s_hi, 16), 0.0, 1.0);
}

// Upper quantile q with P(Q <= q) = 1 - alpha. Results are memoised per
// (k, df, alpha).
inline double studentized_range_quantile(int k, double df, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  static std::mutex mutex;
  static std::map<std::tuple<int, double, double>, double> cache;
  const auto key = std::make_tuple(k, std::isinf(df) ? -1.0 : df, alpha);
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const double target = 1.0 - alpha;
  auto g = [&](double q) { return studentized_range_cdf(q, k, df) - target; };
  double lo = 0.0, hi = 2.0;
  while (g(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4) throw InternalError("studentized range quantile did not bracket");
  }
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      g, lo, hi, boost::math::tools::eps_tolerance<double>(48), iters);
  const double q = 0.5 * (a + b);
  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, q);
  return q;
}

}  // namespace glyconet
