#pragma once

#include <cmath>
#include <stdexcept>

#include "traplab/lattice.hpp"
#include "traplab/rng.hpp"

namespace traplab {

// One-sided beta-stable variable V = V_beta(1), normalized so that
// E[exp(-lambda V)] = exp(-lambda^beta), via Kanter's representation:
//   V = (a(theta) / W)^{(1-beta)/beta},
//   a(theta) = sin((1-beta) theta) sin(beta theta)^{beta/(1-beta)} / sin(theta)^{1/(1-beta)},
// with theta uniform on (0, pi) and W a unit exponential.
inline double sample_stable(double beta, rng::Engine& eng) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("sample_stable: beta must be in (0,1)");
  const double theta = M_PI * eng.u01();
  const double w = eng.exponential(1.0);
  const double a = std::sin((1.0 - beta) * theta) *
                   std::pow(std::sin(beta * theta), beta / (1.0 - beta)) /
                   std::pow(std::sin(theta), 1.0 / (1.0 - beta));
  return std::pow(a / w, (1.0 - beta) / beta);
}

// V_beta^{-1}(t) by self-similarity: P(V^{-1}(t) <= s) = P(V >= t s^{-1/beta}),
// realized as (t/V)^beta with a single stable draw.
inline double sample_inverse_subordinator(double beta, double t, rng::Engine& eng) {
  if (t < 0.0) throw std::invalid_argument("sample_inverse_subordinator: t >= 0");
  if (t == 0.0) return 0.0;
  return std::pow(t / sample_stable(beta, eng), beta);
}

// FK_beta(t) = B(V_beta^{-1}(t)): Gaussian with variance V^{-1}(t) per coordinate.
inline Point simulate_fk(double beta, int d, double t, rng::Engine& eng) {
  if (d < 1 || d > 3) throw std::invalid_argument("simulate_fk: d must be in {1,2,3}");
  Point p = {0.0, 0.0, 0.0};
  if (t == 0.0) return p;
  const double sd = std::sqrt(sample_inverse_subordinator(beta, t, eng));
  for (int i = 0; i < d; ++i) p[i] = sd * eng.normal();
  return p;
}

// Levy(scale 1/4) tail for beta = 1/2: P(V <= v) = erfc(1 / (2 sqrt(v))).
inline double levy_half_cdf(double v) {
  if (v <= 0.0) return 0.0;
  return std::erfc(0.5 / std::sqrt(v));
}

}  // namespace traplab
