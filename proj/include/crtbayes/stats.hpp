#pragma once

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "crtbayes/error.hpp"

namespace crtbayes::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw ConfigError("mean of an empty sequence");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance with the n-1 denominator. Two-pass for stability.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw ConfigError("sample variance needs at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline double sd(std::span<const double> x) { return std::sqrt(variance(x)); }

/// Empirical quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7, the R default): h = (n-1) p, interpolate x[floor h], x[ceil h].
inline double quantile(std::span<const double> x, double p) {
  if (x.empty()) throw ConfigError("quantile of an empty sequence");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile probability outside [0,1]");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Spectral density at frequency zero, divided by n: an estimate of the
/// variance of the sample mean of an autocorrelated sequence. Parzen lag
/// window with truncation L = floor(sqrt(n)).
inline double spectral_variance_of_mean(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw ConfigError("spectral variance needs at least two values");
  const double m = mean(x);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = lag; t < n; ++t) s += (x[t] - m) * (x[t - lag] - m);
    return s / static_cast<double>(n);
  };
  auto parzen = [](double u) {
    return u <= 0.5 ? 1.0 - 6.0 * u * u + 6.0 * u * u * u : 2.0 * (1.0 - u) * (1.0 - u) * (1.0 - u);
  };
  const auto max_lag = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::sqrt(double(n))));
  double s0 = autocov(0);
  for (std::size_t l = 1; l <= max_lag; ++l)
    s0 += 2.0 * parzen(static_cast<double>(l) / static_cast<double>(max_lag + 1)) * autocov(l);
  return std::max(s0, 0.0) / static_cast<double>(n);
}

/// Geweke convergence z-score comparing the mean of the first `first`
/// fraction of a chain against the mean of the last `last` fraction.
/// A constant chain returns 0.
inline double geweke_z(std::span<const double> chain, double first = 0.1, double last = 0.5) {
  if (!(first > 0.0 && last > 0.0 && first + last <= 1.0))
    throw ConfigError("Geweke windows must be positive and must not overlap");
  const std::size_t n = chain.size();
  const auto na = static_cast<std::size_t>(std::floor(first * static_cast<double>(n)));
  const auto nb = static_cast<std::size_t>(std::floor(last * static_cast<double>(n)));
  if (na < 10 || nb < 10) throw ConfigError("Geweke windows need at least 10 draws each");
  const auto a = chain.subspan(0, na);
  const auto b = chain.subspan(n - nb, nb);
  const double diff = mean(a) - mean(b);
  const double denom = std::sqrt(spectral_variance_of_mean(a) + spectral_variance_of_mean(b));
  if (denom == 0.0) return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  return diff / denom;
}

}  // namespace crtbayes::stats
