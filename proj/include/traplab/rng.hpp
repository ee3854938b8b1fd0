#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

// Reproducible randomness: a splitmix64-style mixer for deriving seeds and
// counter-based per-site streams, plus an engine wrapper with exact samplers
// (all variate transforms are hand-rolled so that output depends only on the
// mt19937_64 bit stream, never on the standard library's distributions).

namespace traplab::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Order-sensitive seed combination: derive(s, a, b) != derive(s, b, a).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
  return mix64(mix64(seed) ^ (salt + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
std::uint64_t derive(std::uint64_t seed, std::uint64_t salt, Rest... rest) {
  return derive(derive(seed, salt), rest...);
}

// Strictly inside (0,1).
inline double u01_from_bits(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Counter-based stream: the value is a pure function of (seed, stream, counter),
// so per-site draws are reproducible independent of traversal order.
inline double site_u01(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t counter = 0) {
  return u01_from_bits(mix64(derive(seed, stream) ^ counter));
}

class Engine {
 public:
  explicit Engine(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  double u01() { return u01_from_bits(gen_()); }

  double exponential(double rate) { return -std::log(u01()) / rate; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // Marsaglia polar
    double u, v, s;
    do {
      u = 2.0 * u01() - 1.0;
      v = 2.0 * u01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Marsaglia-Tsang; exact for all shape > 0.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be > 0");
    if (shape < 1.0)
      return gamma(shape + 1.0) * std::pow(u01(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      double v = t * t * t;
      double u = u01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  // Exact Binomial(n, p): Bernoulli trials for small n, otherwise the
  // order-statistic (beta) splitting recursion, which halves n per round.
  std::int64_t binomial(std::int64_t n, double p) {
    if (n < 0) throw std::invalid_argument("binomial: n must be >= 0");
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    std::int64_t count = 0;
    while (n > 64) {
      const std::int64_t a = n / 2 + 1;
      const std::int64_t b = n - a + 1;
      const double x = beta(static_cast<double>(a), static_cast<double>(b));
      if (x >= p) {
        n = a - 1;
        p = p / x;
      } else {
        count += a;
        n = b - 1;
        p = (p - x) / (1.0 - x);
      }
      if (p <= 0.0) return count;
      if (p >= 1.0) return count + n;
    }
    for (std::int64_t i = 0; i < n; ++i)
      if (u01() < p) ++count;
    return count;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace traplab::rng
