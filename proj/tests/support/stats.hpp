#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

// Test-side statistics helpers, independent of the library under test.
namespace test_support {

inline double normal_cdf(double x, double mean, double sigma) {
  return 0.5 * std::erfc(-(x - mean) / (sigma * std::sqrt(2.0)));
}

// Asymptotic Kolmogorov distribution complement Q(lambda).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-10) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, sum));
}

// One-sample KS test against N(mean, sigma^2); returns the asymptotic p-value.
inline double ks_test_normal(std::vector<double> xs, double mean, double sigma) {
  std::sort(xs.begin(), xs.end());
  double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double f = normal_cdf(xs[i], mean, sigma);
    double lo = static_cast<double>(i) / n;
    double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, std::abs(f - lo), std::abs(f - hi)});
  }
  double sn = std::sqrt(n);
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double stddev_of(const std::vector<double>& xs) {
  double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace test_support
