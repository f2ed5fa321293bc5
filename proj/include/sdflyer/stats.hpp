#pragma once

#include <cmath>
#include <span>

#include <boost/math/distributions/students_t.hpp>

namespace sdflyer {

// Accumulated relative to the first value, so a constant series has exactly
// that value as its mean and exactly zero spread.
inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x - v[0];
  return v[0] + s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Two-sided Student-t critical value for a 95% interval with n samples.
inline double t_critical_95(std::size_t n) {
  if (n < 2) return 0.0;
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(boost::math::complement(dist, 0.025));
}

// Half-width of the 95% confidence interval of the mean.
inline double ci95_half_width(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return t_critical_95(v.size()) * stddev(v) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace sdflyer
