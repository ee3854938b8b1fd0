#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "traplab/environment.hpp"
#include "traplab/rng.hpp"
#include "traplab/scaling.hpp"

// Single trap walker: jump rate x -> y is alpha_x^{a-1} alpha_y^a. Also the
// constant-speed representation through the conductance chain Y (rates
// alpha_x^a alpha_y^a) with clock S_t = integral of alpha along Y, and the
// exact master-equation reference solver for the rescaled semigroup.

namespace traplab {

struct ResourceError : std::runtime_error {
  std::uint64_t events_done;
  double time_reached;
  ResourceError(const std::string& what, std::uint64_t events, double time)
      : std::runtime_error(what + " (events=" + std::to_string(events) +
                           ", time=" + std::to_string(time) + ")"),
        events_done(events),
        time_reached(time) {}
};

struct JumpEvent {
  double time = 0.0;
  std::int64_t site = 0;
};

struct WalkerPath {
  std::int64_t start = 0;
  double horizon = 0.0;
  std::vector<JumpEvent> events;

  std::int64_t site_at_end() const { return events.empty() ? start : events.back().site; }
};

struct ClockEvent {
  double time = 0.0;       // Y-process time of the jump
  std::int64_t site = 0;   // site jumped to
  double clock = 0.0;      // S at the jump
};

struct ClockPath {
  std::int64_t start = 0;
  double horizon = 0.0;  // Y-process horizon
  double clock_end = 0.0;  // S at the horizon
  std::vector<ClockEvent> events;
};

// Per-site rate factors: u = alpha^{a-1}, v = alpha^a.
struct RateTable {
  std::vector<double> u, v;
  std::vector<double> row_sum_v;  // sum of v over neighbors

  RateTable(const Environment& env, double a) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("btm: a must be in [0,1]");
    const std::int64_t n = env.n_sites();
    u.resize(n);
    v.resize(n);
    row_sum_v.resize(n);
    for (std::int64_t s = 0; s < n; ++s) {
      const double al = static_cast<double>(env.alpha(s));
      u[s] = std::pow(al, a - 1.0);
      v[s] = std::pow(al, a);
    }
    for (std::int64_t s = 0; s < n; ++s) {
      double acc = 0.0;
      const auto* nb = env.neighbors_begin(s);
      for (std::size_t k = 0; k < env.degree(s); ++k) acc += v[nb[k]];
      row_sum_v[s] = acc;
    }
  }
};

inline std::vector<std::pair<std::int64_t, double>> btm_rates(const Environment& env,
                                                              double a, std::int64_t x) {
  RateTable rt(env, a);
  std::vector<std::pair<std::int64_t, double>> out;
  const auto* nb = env.neighbors_begin(x);
  for (std::size_t k = 0; k < env.degree(x); ++k)
    out.emplace_back(nb[k], rt.u[x] * rt.v[nb[k]]);
  return out;
}

inline double btm_total_rate(const Environment& env, double a, std::int64_t x) {
  RateTable rt(env, a);
  return rt.u[x] * rt.row_sum_v[x];
}

namespace detail {

inline std::int64_t pick_neighbor(const Environment& env, const RateTable& rt,
                                  std::int64_t x, double r /* in (0,1) */) {
  const auto* nb = env.neighbors_begin(x);
  const std::size_t deg = env.degree(x);
  double target = r * rt.row_sum_v[x];
  for (std::size_t k = 0; k + 1 < deg; ++k) {
    target -= rt.v[nb[k]];
    if (target < 0.0) return nb[k];
  }
  return nb[deg - 1];
}

}  // namespace detail

// Exact event-driven CTMC: exponential holding with the total exit rate,
// neighbor chosen proportionally to alpha_y^a.
inline WalkerPath simulate_btm(const Environment& env, double a, std::int64_t x0,
                               double horizon, rng::Engine& eng,
                               std::uint64_t max_events = 100'000'000ULL) {
  if (horizon < 0.0) throw std::invalid_argument("simulate_btm: horizon must be >= 0");
  RateTable rt(env, a);
  WalkerPath path;
  path.start = x0;
  path.horizon = horizon;
  std::int64_t x = x0;
  double t = 0.0;
  while (true) {
    const double rate = rt.u[x] * rt.row_sum_v[x];
    t += eng.exponential(rate);
    if (t >= horizon) break;
    if (path.events.size() >= max_events)
      throw ResourceError("simulate_btm: event cap exceeded", path.events.size(), t);
    x = detail::pick_neighbor(env, rt, x, eng.u01());
    path.events.push_back({t, x});
  }
  return path;
}

// Conductance chain Y with clock S_t = int_0^t alpha_{Y_s} ds; time-changing by
// S^{-1} reproduces the trap walker in law.
inline ClockPath simulate_rcm_clock(const Environment& env, double a, std::int64_t x0,
                                    double horizon, rng::Engine& eng,
                                    std::uint64_t max_events = 100'000'000ULL) {
  if (horizon < 0.0) throw std::invalid_argument("simulate_rcm_clock: horizon >= 0");
  RateTable rt(env, a);
  ClockPath path;
  path.start = x0;
  path.horizon = horizon;
  std::int64_t x = x0;
  double t = 0.0, s = 0.0;
  while (true) {
    const double rate = rt.v[x] * rt.row_sum_v[x];
    const double hold = eng.exponential(rate);
    if (t + hold >= horizon) {
      s += (horizon - t) * static_cast<double>(env.alpha(x));
      break;
    }
    t += hold;
    s += hold * static_cast<double>(env.alpha(x));
    if (path.events.size() >= max_events)
      throw ResourceError("simulate_rcm_clock: event cap exceeded", path.events.size(), t);
    x = detail::pick_neighbor(env, rt, x, eng.u01());
    path.events.push_back({t, x, s});
  }
  path.clock_end = s;
  return path;
}

// Y-path time-changed by S^{-1}, cut at clock time t_clock (requires the
// sampled clock to reach it).
inline WalkerPath time_change_clock_path(const ClockPath& cp, double t_clock) {
  if (cp.clock_end < t_clock)
    throw std::invalid_argument("time_change_clock_path: clock did not reach target");
  WalkerPath out;
  out.start = cp.start;
  out.horizon = t_clock;
  for (const ClockEvent& ev : cp.events) {
    if (ev.clock >= t_clock) break;
    out.events.push_back({ev.clock, ev.site});
  }
  return out;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::int64_t count = 0;
};

inline MeanSe reduce_mean_se(const std::vector<double>& xs) {
  MeanSe r;
  r.count = static_cast<std::int64_t>(xs.size());
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double q = 0.0;
  for (double x : xs) q += (x - r.mean) * (x - r.mean);
  if (xs.size() > 1)
    r.se = std::sqrt(q / (static_cast<double>(xs.size() - 1) * static_cast<double>(xs.size())));
  return r;
}

// P^n_t g(x/n) = E_x[g(X_{t theta_n}/n)] by Monte Carlo; replicas use seeds
// derived in index order so the reduction is deterministic.
inline MeanSe estimate_semigroup(const Environment& env, double a, int n, double t,
                                 const std::function<double(const Point&)>& g,
                                 std::int64_t x0, int replicas, std::uint64_t seed,
                                 std::uint64_t max_events = 100'000'000ULL) {
  if (replicas < 1) throw std::invalid_argument("estimate_semigroup: replicas >= 1");
  const double horizon = t * theta_n(n, env.d(), env.beta);
  if (horizon == 0.0)
    return {g(env.lattice.point_of(x0, static_cast<double>(n))), 0.0, replicas};
  std::vector<double> vals(static_cast<std::size_t>(replicas));
  for (int r = 0; r < replicas; ++r) {
    rng::Engine eng(rng::derive(seed, 0x5e4911, static_cast<std::uint64_t>(r)));
    const WalkerPath p = simulate_btm(env, a, x0, horizon, eng, max_events);
    vals[static_cast<std::size_t>(r)] =
        g(env.lattice.point_of(p.site_at_end(), static_cast<double>(n)));
  }
  return reduce_mean_se(vals);
}

// ---------------------------------------------------------------------------
// Master-equation reference solver (Kolmogorov backward equation g' = A g)

struct StiffnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ForwardSolveOptions {
  double rel_tol = 1e-10;   // per-step; conservative so the 1e-8 contract holds globally
  double abs_tol = 1e-12;
  std::size_t site_cap = 20'000;
  std::uint64_t max_steps = 400'000'000ULL;
};

namespace detail {

class BtmOperator {
 public:
  BtmOperator(const Environment& env, double a) : env_(env), rt_(env, a) {
    const std::int64_t n = env.n_sites();
    total_.resize(n);
    max_rate_ = 0.0;
    for (std::int64_t s = 0; s < n; ++s) {
      total_[s] = rt_.u[s] * rt_.row_sum_v[s];
      max_rate_ = std::max(max_rate_, total_[s]);
    }
  }

  double max_rate() const { return max_rate_; }

  void apply(const std::vector<double>& g, std::vector<double>* out) const {
    const std::int64_t n = env_.n_sites();
    out->resize(g.size());
    for (std::int64_t s = 0; s < n; ++s) {
      double acc = 0.0;
      const auto* nb = env_.neighbors_begin(s);
      const std::size_t deg = env_.degree(s);
      for (std::size_t k = 0; k < deg; ++k) acc += rt_.v[nb[k]] * g[nb[k]];
      (*out)[s] = rt_.u[s] * acc - total_[s] * g[s];
    }
  }

 private:
  const Environment& env_;
  RateTable rt_;
  std::vector<double> total_;
  double max_rate_ = 0.0;
};

// Dormand-Prince 5(4) with standard step-size control. Linear invariants
// (the alpha-weighted sum) are preserved exactly by any Runge-Kutta step.
inline void rk45_evolve(const BtmOperator& op, std::vector<double>* y, double t_span,
                        const ForwardSolveOptions& opt) {
  if (t_span <= 0.0) return;
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  const std::size_t n = y->size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y5(n);

  double t = 0.0;
  double h = std::min(t_span, 0.5 / std::max(op.max_rate(), 1e-300));
  const double h_min = t_span * 1e-14;
  std::uint64_t steps = 0;

  op.apply(*y, &k1);
  while (t < t_span) {
    if (++steps > opt.max_steps)
      throw StiffnessError("rk45: step budget exhausted; use a smaller box or an implicit scheme");
    h = std::min(h, t_span - t);

    for (std::size_t i = 0; i < n; ++i) tmp[i] = (*y)[i] + h * a21 * k1[i];
    op.apply(tmp, &k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = (*y)[i] + h * (a31 * k1[i] + a32 * k2[i]);
    op.apply(tmp, &k3);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = (*y)[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    op.apply(tmp, &k4);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = (*y)[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    op.apply(tmp, &k5);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = (*y)[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                              a65 * k5[i]);
    op.apply(tmp, &k6);
    for (std::size_t i = 0; i < n; ++i)
      y5[i] = (*y)[i] +
              h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    op.apply(y5, &k7);

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                             e6 * k6[i] + e7 * k7[i]);
      const double sc = opt.abs_tol + opt.rel_tol * std::abs(y5[i]);
      err = std::max(err, std::abs(ei) / sc);
    }

    if (err <= 1.0) {
      t += h;
      std::swap(*y, y5);
      std::swap(k1, k7);  // FSAL
    }
    const double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (h < h_min)
      throw StiffnessError(
          "rk45: step size collapsed; use a smaller box or an implicit scheme");
  }
}

}  // namespace detail

// Evolve a site profile with the backward generator over physical time
// checkpoints (sorted, >= 0). Returns the profile at each checkpoint.
inline std::vector<std::vector<double>> evolve_profile(
    const Environment& env, double a, const std::vector<double>& phys_times,
    std::vector<double> g0, const ForwardSolveOptions& opt = {}) {
  if (static_cast<std::size_t>(env.n_sites()) > opt.site_cap)
    throw std::invalid_argument("evolve_profile: box exceeds the site cap");
  if (g0.size() != static_cast<std::size_t>(env.n_sites()))
    throw std::invalid_argument("evolve_profile: profile length mismatch");
  detail::BtmOperator op(env, a);
  std::vector<std::vector<double>> out;
  out.reserve(phys_times.size());
  double t_prev = 0.0;
  for (double t : phys_times) {
    if (t < t_prev) throw std::invalid_argument("evolve_profile: times must be sorted");
    detail::rk45_evolve(op, &g0, t - t_prev, opt);
    t_prev = t;
    out.push_back(g0);
  }
  return out;
}

// P^n_t rho0 on the lattice for macroscopic checkpoints (physical time t theta_n).
inline std::vector<std::vector<double>> solve_one_particle_forward(
    const Environment& env, double a, int n, const std::vector<double>& macro_times,
    const std::vector<double>& rho0_values, const ForwardSolveOptions& opt = {}) {
  const double th = theta_n(n, env.d(), env.beta);
  std::vector<double> phys(macro_times.size());
  for (std::size_t i = 0; i < macro_times.size(); ++i) phys[i] = macro_times[i] * th;
  return evolve_profile(env, a, phys, rho0_values, opt);
}

inline std::vector<double> profile_from_function(
    const Environment& env, int n, const std::function<double(const Point&)>& f) {
  std::vector<double> g(static_cast<std::size_t>(env.n_sites()));
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    g[static_cast<std::size_t>(s)] = f(env.lattice.point_of(s, static_cast<double>(n)));
  return g;
}

// Law of X_t started at x0, via reversibility: P(X_t = y) = alpha_y *
// (e^{tA}(delta_{x0}/alpha_{x0}))(y).
inline std::vector<double> occupancy_law(const Environment& env, double a,
                                         std::int64_t x0, double t_phys,
                                         const ForwardSolveOptions& opt = {}) {
  std::vector<double> g(static_cast<std::size_t>(env.n_sites()), 0.0);
  g[static_cast<std::size_t>(x0)] = 1.0 / static_cast<double>(env.alpha(x0));
  auto res = evolve_profile(env, a, {t_phys}, std::move(g), opt);
  std::vector<double>& law = res[0];
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    law[static_cast<std::size_t>(s)] *= static_cast<double>(env.alpha(s));
  return law;
}

// Fraction of expected single-walker occupation outside |x|_inf <= L/2.
// Gates how trustworthy torus runs are as stand-ins for whole-space limits.
inline double boundary_mass(const Environment& env, double a, std::int64_t x0,
                            double t_phys, const ForwardSolveOptions& opt = {}) {
  const std::vector<double> law = occupancy_law(env, a, x0, t_phys, opt);
  const int L2 = env.lattice.box_half_width() / 2;
  double outside = 0.0;
  for (std::int64_t s = 0; s < env.n_sites(); ++s) {
    const Coord c = env.lattice.coord_of(s);
    int m = 0;
    for (int i = 0; i < env.d(); ++i) m = std::max(m, std::abs(c[i]));
    if (m > L2) outside += law[static_cast<std::size_t>(s)];
  }
  return outside;
}

// ---------------------------------------------------------------------------
// Annealed mean squared displacement (fresh environment per replica,
// torus-unwrapped displacement).

struct MsdPoint {
  double t = 0.0;
  double msd = 0.0;
  double se = 0.0;
};

inline std::vector<MsdPoint> msd_curve(int d, int L, const TailLaw& law, double a,
                                       const std::vector<double>& t_list, int replicas,
                                       std::uint64_t seed,
                                       std::uint64_t max_events = 20'000'000ULL) {
  std::vector<double> ts = t_list;
  std::sort(ts.begin(), ts.end());
  std::vector<std::vector<double>> sq(ts.size(),
                                      std::vector<double>(static_cast<std::size_t>(replicas)));
  for (int r = 0; r < replicas; ++r) {
    const std::uint64_t env_seed = rng::derive(seed, 0xe47, static_cast<std::uint64_t>(r));
    const Environment env = build_environment(d, L, law, env_seed);
    rng::Engine eng(rng::derive(seed, 0x3a7d, static_cast<std::uint64_t>(r)));
    RateTable rt(env, a);

    std::int64_t x = env.lattice.index_of({0, 0, 0});
    std::array<std::int64_t, 3> disp = {0, 0, 0};
    double t = 0.0;
    std::size_t ti = 0;
    std::uint64_t events = 0;
    while (ti < ts.size()) {
      const double rate = rt.u[x] * rt.row_sum_v[x];
      t += eng.exponential(rate);
      while (ti < ts.size() && t >= ts[ti]) {
        double s2 = 0.0;
        for (int i = 0; i < d; ++i)
          s2 += static_cast<double>(disp[i]) * static_cast<double>(disp[i]);
        sq[ti][static_cast<std::size_t>(r)] = s2;
        ++ti;
      }
      if (ti >= ts.size()) break;
      if (++events > max_events)
        throw ResourceError("msd_curve: event cap exceeded", events, t);
      // pick axis/direction proportionally to alpha_y^a, tracking winding
      double target = eng.u01() * rt.row_sum_v[x];
      std::int64_t chosen = -1;
      int axis = 0, dir = 0;
      for (int ax = 0; ax < d && chosen < 0; ++ax) {
        for (int dd : {+1, -1}) {
          const std::int64_t y = env.lattice.wrap_step(x, ax, dd);
          if (y == x) continue;
          target -= rt.v[y];
          if (target < 0.0) {
            chosen = y;
            axis = ax;
            dir = dd;
            break;
          }
        }
      }
      if (chosen < 0) {  // numerical edge, take the last neighbor
        axis = d - 1;
        dir = -1;
        chosen = env.lattice.wrap_step(x, axis, dir);
      }
      disp[axis] += dir;
      x = chosen;
    }
  }
  std::vector<MsdPoint> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const MeanSe m = reduce_mean_se(sq[i]);
    out[i] = {ts[i], m.mean, m.se};
  }
  return out;
}

}  // namespace traplab
