#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "traplab/environment.hpp"
#include "traplab/ips.hpp"
#include "traplab/scaling.hpp"
#include "traplab/walker.hpp"

// Rescaled empirical fields of the particle system:
//   density   <X^n_t|f> = n^{-d/beta} sum_x eta_{t theta_n}(x) f(x/n)
//   frequency <Z^n_t|f> = n^{-d}      sum_x eta_{t theta_n}(x)/alpha_x f(x/n)
// plus the decomposition diagnostics I_n, II_n, III_n against the dual
// reference <P^n_t rho0 W^n | f>.

namespace traplab {

inline double density_pair(const Environment& env, const Configuration& eta, int n,
                           const TestFunction& f) {
  const double scale =
      std::pow(static_cast<double>(n), -static_cast<double>(env.d()) / env.beta);
  double acc = 0.0;
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    acc += static_cast<double>(eta.counts[s]) *
           f(env.lattice.point_of(s, static_cast<double>(n)), env.d());
  return scale * acc;
}

inline double frequency_pair(const Environment& env, const Configuration& eta, int n,
                             const TestFunction& f) {
  const double scale = std::pow(static_cast<double>(n), -static_cast<double>(env.d()));
  double acc = 0.0;
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    acc += static_cast<double>(eta.counts[s]) / static_cast<double>(env.alpha(s)) *
           f(env.lattice.point_of(s, static_cast<double>(n)), env.d());
  return scale * acc;
}

// <Z^n_t|f> = n^{d(1/beta-1)} <X^n_t|f^alpha_n> with f^alpha_n(x/n) = f(x/n)/alpha_x;
// an exact per-snapshot identity, exposed for property tests.
inline double frequency_via_density_identity(const Environment& env,
                                             const Configuration& eta, int n,
                                             const TestFunction& f) {
  const double gamma = static_cast<double>(env.d()) / env.beta;
  const double pre =
      std::pow(static_cast<double>(n), static_cast<double>(env.d()) * (1.0 / env.beta - 1.0));
  const double scale = std::pow(static_cast<double>(n), -gamma);
  double acc = 0.0;
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    acc += static_cast<double>(eta.counts[s]) *
           f(env.lattice.point_of(s, static_cast<double>(n)), env.d()) /
           static_cast<double>(env.alpha(s));
  return pre * scale * acc;
}

struct ReplicaSnapshot {
  Configuration eta0;
  std::vector<Configuration> eta_t;  // one per macro observation time
};

// One replica of the hydrodynamic ensemble: eta0 ~ prod Bin(alpha_x, rho0(x/n)),
// then exact IPS dynamics observed at times t theta_n.
inline ReplicaSnapshot run_field_replica(const Environment& env, double a, int n,
                                         const std::vector<double>& macro_times,
                                         const std::function<double(const Point&)>& rho0,
                                         std::uint64_t replica_seed,
                                         std::uint64_t max_events = 2'000'000'000ULL) {
  rng::Engine eng(replica_seed);
  ReplicaSnapshot rep;
  rep.eta0 = sample_binomial_profile(env, rho0, n, eng);
  EventSchedule sched;
  const double th = theta_n(n, env.d(), env.beta);
  for (double t : macro_times) sched.times.push_back(t * th);
  IpsResult res = simulate_ips(env, a, rep.eta0, sched, eng, max_events);
  if (!res.completed)
    throw ResourceError("run_field_replica: " + res.note, res.events,
                        macro_times.empty() ? 0.0 : macro_times.back());
  rep.eta_t = std::move(res.snapshots);
  return rep;
}

struct DecompositionDiagnostics {
  MeanSe term_i;            // <X_t|f> - <X_0|P_t f> per replica
  MeanSe term_ii;           // <W^n|(D_0 - rho0) P_t f>
  double term_iii = 0.0;    // identically zero for binomial initial laws
  double reference = 0.0;   // <P^n_t rho0 W^n | f>, deterministic
  MeanSe field;             // <X^n_t|f>
  double var_i = 0.0;       // empirical Var(I_n)
  double var_i_se = 0.0;
  double var_ii = 0.0;      // empirical Var(II_n)
  double var_ii_oracle = 0.0;   // exact binomial variance of II_n
  double var_bound_mean = 0.0;  // mean over replicas of the negative-dependence bound
  double var_bound_se = 0.0;
};

// Decompose <X^n_t|f> = I_n + II_n + III_n + <P^n_t rho0 W^n|f> for an ensemble
// observed at a single macro time t (index t_index into the replica snapshots).
// P^n_t f and P^n_t rho0 come from the exact master-equation solver; by the
// alpha-weighted self-adjointness of P^n_t, I_n equals <X_t|f> - <X_0|P_t f>.
inline DecompositionDiagnostics decomposition_diagnostics(
    const Environment& env, double a, int n, double t, const TestFunction& f,
    const std::function<double(const Point&)>& rho0,
    const std::vector<ReplicaSnapshot>& ensemble, std::size_t t_index = 0,
    const ForwardSolveOptions& opt = {}) {
  const double gamma = static_cast<double>(env.d()) / env.beta;
  const double scale = std::pow(static_cast<double>(n), -gamma);
  const double tau = t * theta_n(n, env.d(), env.beta);
  const std::size_t ns = static_cast<std::size_t>(env.n_sites());

  std::vector<double> fv(ns), f2v(ns), rho0v(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const Point p = env.lattice.point_of(static_cast<std::int64_t>(s), static_cast<double>(n));
    fv[s] = f(p, env.d());
    f2v[s] = fv[s] * fv[s];
    rho0v[s] = rho0(p);
  }
  const std::vector<double> pf = evolve_profile(env, a, {tau}, fv, opt)[0];
  const std::vector<double> pf2 = evolve_profile(env, a, {tau}, f2v, opt)[0];
  const std::vector<double> prho = evolve_profile(env, a, {tau}, rho0v, opt)[0];

  DecompositionDiagnostics out;
  for (std::size_t s = 0; s < ns; ++s)
    out.reference += scale * static_cast<double>(env.alpha(s)) * prho[s] * fv[s];

  std::vector<double> term_i, term_ii, fields, bounds;
  term_i.reserve(ensemble.size());
  for (const ReplicaSnapshot& rep : ensemble) {
    if (t_index >= rep.eta_t.size())
      throw std::invalid_argument("decomposition_diagnostics: t_index out of range");
    const Configuration& eta0 = rep.eta0;
    const Configuration& etat = rep.eta_t[t_index];
    double xt = 0.0, x0pf = 0.0, ii = 0.0, bnd = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      xt += static_cast<double>(etat.counts[s]) * fv[s];
      x0pf += static_cast<double>(eta0.counts[s]) * pf[s];
      ii += (static_cast<double>(eta0.counts[s]) -
             static_cast<double>(env.alpha(s)) * rho0v[s]) *
            pf[s];
      bnd += static_cast<double>(eta0.counts[s]) * (pf2[s] - pf[s] * pf[s]);
    }
    fields.push_back(scale * xt);
    term_i.push_back(scale * (xt - x0pf));
    term_ii.push_back(scale * ii);
    bounds.push_back(scale * scale * bnd);
  }

  out.term_i = reduce_mean_se(term_i);
  out.term_ii = reduce_mean_se(term_ii);
  out.field = reduce_mean_se(fields);
  const MeanSe bm = reduce_mean_se(bounds);
  out.var_bound_mean = bm.mean;
  out.var_bound_se = bm.se;

  const std::size_t r = term_i.size();
  if (r > 1) {
    double vi = 0.0, vii = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      vi += (term_i[i] - out.term_i.mean) * (term_i[i] - out.term_i.mean);
      vii += (term_ii[i] - out.term_ii.mean) * (term_ii[i] - out.term_ii.mean);
    }
    out.var_i = vi / static_cast<double>(r - 1);
    out.var_ii = vii / static_cast<double>(r - 1);
    out.var_i_se = out.var_i * std::sqrt(2.0 / static_cast<double>(r - 1));
  }

  // exact Var(II_n) for the binomial product law
  for (std::size_t s = 0; s < ns; ++s)
    out.var_ii_oracle += scale * scale * static_cast<double>(env.alpha(s)) * rho0v[s] *
                         (1.0 - rho0v[s]) * pf[s] * pf[s];
  return out;
}

}  // namespace traplab
