#pragma once

#include <cmath>
#include <stdexcept>

namespace traplab {

// Sub-diffusive time speed-up:
//   d >= 3 : n^{2/beta}
//   d  = 2 : n^{2/beta} (log n)^{1-1/beta}
//   d  = 1 : n^{1+1/beta}
inline double theta_n(int n, int d, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("theta_n: beta in (0,1)");
  if (d < 1 || d > 3) throw std::invalid_argument("theta_n: d must be in {1,2,3}");
  if (n < 1 || (d == 2 && n < 2))
    throw std::invalid_argument("theta_n: n too small (log degenerate)");
  const double nn = static_cast<double>(n);
  switch (d) {
    case 1:
      return std::pow(nn, 1.0 + 1.0 / beta);
    case 2:
      return std::pow(nn, 2.0 / beta) * std::pow(std::log(nn), 1.0 - 1.0 / beta);
    default:
      return std::pow(nn, 2.0 / beta);
  }
}

struct ScalingSpec {
  int n = 2;
  int d = 1;
  double beta = 0.5;
  double theta = 0.0;

  static ScalingSpec make(int n, int d, double beta) {
    if (n < 2) throw std::invalid_argument("ScalingSpec: n must be >= 2");
    return ScalingSpec{n, d, beta, theta_n(n, d, beta)};
  }
};

}  // namespace traplab
