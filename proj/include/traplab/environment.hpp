#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "traplab/lattice.hpp"
#include "traplab/quadrature.hpp"
#include "traplab/rng.hpp"

// Quenched heavy-tailed trap environments, their rescaled atomic measures,
// sampled realizations of the limiting Poisson measure, and test-function
// pairings.

namespace traplab {

// Integer tail law P(alpha > m) = m^{-beta} for integer m >= 1, realized as
// alpha = ceil(u^{-1/beta}) with u uniform on (0,1).
struct TailLaw {
  double beta = 0.5;
  std::int64_t min_value = 1;

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0))
      throw std::invalid_argument("TailLaw: beta must be in (0,1)");
    if (min_value != 1) throw std::invalid_argument("TailLaw: min_value is fixed to 1");
  }
};

// Depths saturate at 2^62 so the int64 arithmetic downstream stays valid;
// P(alpha > 2^62) = 2^{-62 beta} never matters at desk tolerances.
inline constexpr std::int64_t kDepthCap = std::int64_t{1} << 62;

inline std::int64_t sample_alpha(const TailLaw& law, double u) {
  law.validate();
  if (!(u > 0.0 && u < 1.0))
    throw std::domain_error("sample_alpha: invalid variate, u must be in (0,1)");
  const double v = std::pow(u, -1.0 / law.beta);
  if (v >= static_cast<double>(kDepthCap)) return kDepthCap;
  return static_cast<std::int64_t>(std::ceil(v));
}

// Exact tail of the ceiling construction: P(alpha > m) = m^{-beta}, m >= 1.
inline double alpha_tail_exact(const TailLaw& law, std::int64_t m) {
  if (m < 1) return 1.0;
  return std::pow(static_cast<double>(m), -law.beta);
}

struct Environment {
  Lattice lattice;
  double beta = 0.5;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> depth;  // alpha_x, canonical site order

  // flattened neighbor table
  std::vector<std::int32_t> nbr_begin;
  std::vector<std::int64_t> nbr_site;

  int d() const { return lattice.dim; }
  std::int64_t n_sites() const { return lattice.n_sites(); }

  std::int64_t alpha(std::int64_t site) const { return depth[static_cast<std::size_t>(site)]; }

  std::size_t degree(std::int64_t site) const {
    return static_cast<std::size_t>(nbr_begin[site + 1] - nbr_begin[site]);
  }
  const std::int64_t* neighbors_begin(std::int64_t site) const {
    return nbr_site.data() + nbr_begin[site];
  }

  void build_tables() {
    const std::int64_t n = n_sites();
    nbr_begin.assign(static_cast<std::size_t>(n) + 1, 0);
    nbr_site.clear();
    nbr_site.reserve(static_cast<std::size_t>(2 * d() * n));
    for (std::int64_t s = 0; s < n; ++s) {
      for (std::int64_t y : lattice.neighbors(s)) nbr_site.push_back(y);
      nbr_begin[s + 1] = static_cast<std::int32_t>(nbr_site.size());
    }
  }

  void validate() const {
    if (depth.size() != static_cast<std::size_t>(n_sites()))
      throw std::invalid_argument("Environment: depth array length mismatch");
    for (std::int64_t a : depth)
      if (a < 1) throw std::invalid_argument("Environment: all depths must be >= 1");
  }

  static Environment with_depths(const Lattice& lat, std::vector<std::int64_t> depths,
                                 double beta = 0.5, std::uint64_t seed = 0) {
    Environment env;
    env.lattice = lat;
    env.beta = beta;
    env.seed = seed;
    env.depth = std::move(depths);
    env.validate();
    env.build_tables();
    return env;
  }
};

// i.i.d. depths via counter-based per-site streams: bit-reproducible for a
// fixed (d, L, seed) regardless of traversal or thread order.
inline Environment build_environment(int d, int L, const TailLaw& law, std::uint64_t seed) {
  law.validate();
  Environment env;
  env.lattice = Lattice::box(d, L);
  env.beta = law.beta;
  env.seed = seed;
  const std::int64_t n = env.n_sites();
  env.depth.resize(static_cast<std::size_t>(n));
  for (std::int64_t s = 0; s < n; ++s)
    env.depth[static_cast<std::size_t>(s)] =
        sample_alpha(law, rng::site_u01(seed, static_cast<std::uint64_t>(s)));
  env.build_tables();
  return env;
}

// ---------------------------------------------------------------------------
// Atomic measures and test functions

struct Atom {
  Point x = {0.0, 0.0, 0.0};
  double weight = 0.0;
};

struct PointMeasure {
  int dim = 1;
  std::vector<Atom> atoms;
};

// W^n = n^{-d/beta} sum_x alpha_x delta_{x/n}
inline PointMeasure rescaled_measure(const Environment& env, int n) {
  if (n < 1) throw std::invalid_argument("rescaled_measure: n must be >= 1");
  PointMeasure pm;
  pm.dim = env.d();
  const double scale = std::pow(static_cast<double>(n), -static_cast<double>(env.d()) / env.beta);
  pm.atoms.reserve(static_cast<std::size_t>(env.n_sites()));
  for (std::int64_t s = 0; s < env.n_sites(); ++s) {
    Atom a;
    a.x = env.lattice.point_of(s, static_cast<double>(n));
    a.weight = static_cast<double>(env.alpha(s)) * scale;
    pm.atoms.push_back(a);
  }
  return pm;
}

struct PppSample {
  PointMeasure measure;
  double eps = 0.0;
  // |E<W|f> - E<W_trunc|f>| <= bias_bound * ||f||_inf
  double bias_bound = 0.0;
};

// Truncated Poisson point process with intensity beta v^{-(1+beta)} dv dx on
// [-box_half, box_half]^d x (eps, inf). Atoms are generated in decreasing
// weight order from a unit-rate arrival sequence, so for a fixed seed the atom
// set grows monotonically as eps decreases.
inline PppSample sample_ppp_w(double beta, int d, double box_half, double eps,
                              std::uint64_t seed) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("sample_ppp_w: beta must be in (0,1)");
  if (!(eps > 0.0)) throw std::invalid_argument("sample_ppp_w: eps must be > 0");
  if (d < 1 || d > 3) throw std::invalid_argument("sample_ppp_w: d must be in {1,2,3}");
  double vol = 1.0;
  for (int i = 0; i < d; ++i) vol *= 2.0 * box_half;

  PppSample out;
  out.eps = eps;
  out.bias_bound = vol * beta / (1.0 - beta) * std::pow(eps, 1.0 - beta);
  out.measure.dim = d;

  rng::Engine eng(seed);
  double arrival = 0.0;
  for (;;) {
    arrival += eng.exponential(1.0);
    const double w = std::pow(arrival / vol, -1.0 / beta);
    if (w < eps) break;
    Atom a;
    a.weight = w;
    for (int i = 0; i < d; ++i) a.x[i] = box_half * (2.0 * eng.u01() - 1.0);
    out.measure.atoms.push_back(a);
  }
  return out;
}

enum class BumpKind { kTriangle, kSquaredCosine };

// Compactly supported non-negative bump: amplitude at the center, zero outside
// the Euclidean ball of the given radius.
struct TestFunction {
  BumpKind kind = BumpKind::kTriangle;
  Point center = {0.0, 0.0, 0.0};
  double radius = 1.0;
  double amplitude = 1.0;

  double operator()(const Point& x, int dim) const {
    double r2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double dx = x[i] - center[i];
      r2 += dx * dx;
    }
    const double r = std::sqrt(r2) / radius;
    if (r >= 1.0) return 0.0;
    switch (kind) {
      case BumpKind::kTriangle:
        return amplitude * (1.0 - r);
      case BumpKind::kSquaredCosine: {
        const double c = std::cos(0.5 * M_PI * r);
        return amplitude * c * c;
      }
    }
    return 0.0;
  }

  double sup_norm() const { return amplitude; }

  void support_box(int dim, std::array<double, 3>* lo, std::array<double, 3>* hi) const {
    for (int i = 0; i < dim; ++i) {
      (*lo)[i] = center[i] - radius;
      (*hi)[i] = center[i] + radius;
    }
  }

  static TestFunction triangle(Point c, double radius, double amplitude = 1.0) {
    return TestFunction{BumpKind::kTriangle, c, radius, amplitude};
  }
  static TestFunction cos2(Point c, double radius, double amplitude = 1.0) {
    return TestFunction{BumpKind::kSquaredCosine, c, radius, amplitude};
  }
};

inline const char* bump_kind_name(BumpKind k) {
  return k == BumpKind::kTriangle ? "triangle" : "cos2";
}

// <nu|f> = sum_i v_i f(x_i)
template <typename F>
double pair(const PointMeasure& m, const F& f) {
  double acc = 0.0;
  for (const Atom& a : m.atoms) acc += a.weight * f(a.x, m.dim);
  return acc;
}

inline double pair(const PointMeasure& m, const TestFunction& f) {
  double acc = 0.0;
  for (const Atom& a : m.atoms) acc += a.weight * f(a.x, m.dim);
  return acc;
}

// E[exp(-<W|f>)] = exp(-Gamma(1-beta) * integral f(x)^beta dx); the weight
// integral is closed-form, the spatial one is adaptive quadrature over the
// support box.
inline double laplace_functional_w(const TestFunction& f, int dim, double beta,
                                   double tol = 1e-10) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("laplace_functional_w: beta must be in (0,1)");
  std::array<double, 3> lo{}, hi{};
  f.support_box(dim, &lo, &hi);
  const double integral = quad::integrate_box(
      [&](const std::array<double, 3>& x) { return std::pow(f(x, dim), beta); }, dim, lo,
      hi, tol);
  return std::exp(-std::tgamma(1.0 - beta) * integral);
}

}  // namespace traplab
