#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// shared helpers for the statistical checks in the test suites

namespace testutil {

struct Welford {
  double mean = 0.0, m2 = 0.0;
  std::int64_t n = 0;
  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double var() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double se() const { return std::sqrt(var() / static_cast<double>(n)); }
};

// |observed - expected| in units of the standard error
inline double zscore(double observed, double expected, double se) {
  return se > 0.0 ? std::abs(observed - expected) / se : 0.0;
}

inline double binom_pmf(std::int64_t n, double p, std::int64_t k) {
  const double lc = std::lgamma(static_cast<double>(n + 1)) -
                    std::lgamma(static_cast<double>(k + 1)) -
                    std::lgamma(static_cast<double>(n - k + 1));
  return std::exp(lc + k * std::log(p) + (n - k) * std::log1p(-p));
}

}  // namespace testutil
