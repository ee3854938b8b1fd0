#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "traplab/environment.hpp"
#include "traplab/rng.hpp"
#include "traplab/walker.hpp"

// Birth-death approximation of the quasi-diffusion with speed measure W and
// natural scale (generator d/dW d/dx): jump rates on the atoms of W are
//   r_i^+ = 1 / (v_i (x_{i+1} - x_i)),   r_i^- = 1 / (v_i (x_i - x_{i-1})),
// reflecting at the extreme atoms. Detailed balance w.r.t. the weights holds
// exactly: v_i r_i^+ = v_{i+1} r_{i+1}^- = 1/(x_{i+1} - x_i).

namespace traplab {

struct FinChain {
  std::vector<double> x;           // sorted atom locations
  std::vector<double> v;           // weights
  std::vector<double> rate_right;  // rate_right.back() = 0 (reflecting)
  std::vector<double> rate_left;   // rate_left.front() = 0

  std::size_t size() const { return x.size(); }

  std::size_t nearest_atom(double pos) const {
    std::size_t best = 0;
    double dist = std::abs(x[0] - pos);
    for (std::size_t i = 1; i < x.size(); ++i)
      if (std::abs(x[i] - pos) < dist) {
        dist = std::abs(x[i] - pos);
        best = i;
      }
    return best;
  }
};

inline FinChain build_fin_chain(const PointMeasure& m) {
  if (m.dim != 1) throw std::invalid_argument("build_fin_chain: measure must be 1-D");
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(m.atoms.size());
  for (const Atom& a : m.atoms) atoms.emplace_back(a.x[0], a.weight);
  std::sort(atoms.begin(), atoms.end());
  // merge duplicate locations
  std::vector<std::pair<double, double>> merged;
  for (const auto& [x, w] : atoms) {
    if (!merged.empty() && merged.back().first == x)
      merged.back().second += w;
    else
      merged.emplace_back(x, w);
  }
  if (merged.size() < 2) throw std::invalid_argument("build_fin_chain: need >= 2 atoms");

  FinChain chain;
  const std::size_t n = merged.size();
  chain.x.resize(n);
  chain.v.resize(n);
  chain.rate_right.assign(n, 0.0);
  chain.rate_left.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    chain.x[i] = merged[i].first;
    chain.v[i] = merged[i].second;
  }
  for (std::size_t i = 0; i + 1 < n; ++i)
    chain.rate_right[i] = 1.0 / (chain.v[i] * (chain.x[i + 1] - chain.x[i]));
  for (std::size_t i = 1; i < n; ++i)
    chain.rate_left[i] = 1.0 / (chain.v[i] * (chain.x[i] - chain.x[i - 1]));
  return chain;
}

struct FinSemigroupResult {
  std::vector<double> values;
  std::string mode;  // "uniformization" or "monte-carlo"
  double se = 0.0;   // zero in exact mode
};

namespace detail {

inline void fin_apply_p(const FinChain& c, double lambda, const std::vector<double>& g,
                        std::vector<double>* out) {
  const std::size_t n = c.size();
  out->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double total = c.rate_right[i] + c.rate_left[i];
    double acc = (1.0 - total / lambda) * g[i];
    if (i + 1 < n) acc += c.rate_right[i] / lambda * g[i + 1];
    if (i > 0) acc += c.rate_left[i] / lambda * g[i - 1];
    (*out)[i] = acc;
  }
}

}  // namespace detail

// e^{tG} g. Exact uniformization when the chain and the event budget allow it
// (chunked Poisson weights keep large lambda*t representable), otherwise CTMC
// Monte Carlo; the chosen mode is reported in the result.
inline FinSemigroupResult fin_semigroup(const FinChain& chain, const std::vector<double>& g,
                                        double t, std::size_t exact_size_cap = 10'000,
                                        double cost_cap = 5e7,
                                        int mc_replicas = 2000,
                                        std::uint64_t mc_seed = 0x715a) {
  if (g.size() != chain.size())
    throw std::invalid_argument("fin_semigroup: value array length mismatch");
  if (t < 0.0) throw std::invalid_argument("fin_semigroup: t >= 0");
  FinSemigroupResult out;
  double lambda = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i)
    lambda = std::max(lambda, chain.rate_right[i] + chain.rate_left[i]);

  if (t == 0.0 || lambda == 0.0) {
    out.values = g;
    out.mode = "uniformization";
    return out;
  }

  if (chain.size() <= exact_size_cap && lambda * t <= cost_cap) {
    out.mode = "uniformization";
    const double chunk_rate = 256.0;
    const int chunks = std::max(1, static_cast<int>(std::ceil(lambda * t / chunk_rate)));
    const double tau = t / chunks;
    const double lt = lambda * tau;
    std::vector<double> cur = g, term, next;
    for (int ch = 0; ch < chunks; ++ch) {
      term = cur;
      std::vector<double> acc(cur.size(), 0.0);
      double logw = -lt, wsum = 0.0;
      for (int k = 0;; ++k) {
        if (k > 0) {
          detail::fin_apply_p(chain, lambda, term, &next);
          term.swap(next);
          logw += std::log(lt) - std::log(static_cast<double>(k));
        }
        const double w = std::exp(logw);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * term[i];
        wsum += w;
        if (k > lt && 1.0 - wsum < 1e-14) break;
        if (k > 4 * lt + 200) break;
      }
      for (double& v : acc) v /= wsum;  // renormalize the truncated weights
      cur.swap(acc);
    }
    out.values = std::move(cur);
    return out;
  }

  // Monte Carlo mode: average g over endpoint atoms of CTMC paths.
  out.mode = "monte-carlo";
  out.values.assign(chain.size(), 0.0);
  double worst_se = 0.0;
  for (std::size_t start = 0; start < chain.size(); ++start) {
    std::vector<double> vals(static_cast<std::size_t>(mc_replicas));
    for (int r = 0; r < mc_replicas; ++r) {
      rng::Engine eng(rng::derive(mc_seed, start, static_cast<std::uint64_t>(r)));
      std::size_t i = start;
      double tt = 0.0;
      for (;;) {
        const double total = chain.rate_right[i] + chain.rate_left[i];
        if (total <= 0.0) break;
        tt += eng.exponential(total);
        if (tt >= t) break;
        i = (eng.u01() * total < chain.rate_right[i]) ? i + 1 : i - 1;
      }
      vals[static_cast<std::size_t>(r)] = g[i];
    }
    const MeanSe ms = reduce_mean_se(vals);
    out.values[start] = ms.mean;
    worst_se = std::max(worst_se, ms.se);
  }
  out.se = worst_se;
  return out;
}

// Annealed mean squared displacement of the chain walker over fresh truncated
// realizations of W; one environment per outer replica, several paths each.
struct FinMsdOptions {
  double box_half = 40.0;
  double eps = 0.02;
  int environments = 50;
  int paths_per_env = 200;
  std::uint64_t max_events_per_path = 10'000'000ULL;
};

struct FinMsdCurve {
  std::vector<MsdPoint> points;           // annealed curve (env-level SE)
  std::vector<std::vector<double>> env_means;  // per environment, per time
};

inline FinMsdCurve fin_msd(double beta, const std::vector<double>& t_list,
                           const FinMsdOptions& opt, std::uint64_t seed) {
  std::vector<double> ts = t_list;
  std::sort(ts.begin(), ts.end());
  FinMsdCurve out;
  out.env_means.resize(static_cast<std::size_t>(opt.environments),
                       std::vector<double>(ts.size(), 0.0));

  for (int e = 0; e < opt.environments; ++e) {
    const PppSample w =
        sample_ppp_w(beta, 1, opt.box_half, opt.eps, rng::derive(seed, 0xf1a, e));
    const FinChain chain = build_fin_chain(w.measure);
    const std::size_t start = chain.nearest_atom(0.0);
    std::vector<double>& acc = out.env_means[static_cast<std::size_t>(e)];
    for (int p = 0; p < opt.paths_per_env; ++p) {
      rng::Engine eng(rng::derive(seed, 0x9a7, e, p));
      std::size_t i = start;
      double t = 0.0;
      std::size_t ti = 0;
      std::uint64_t events = 0;
      while (ti < ts.size()) {
        const double total = chain.rate_right[i] + chain.rate_left[i];
        if (total <= 0.0) break;
        t += eng.exponential(total);
        while (ti < ts.size() && t >= ts[ti]) {
          const double dx = chain.x[i] - chain.x[start];
          acc[ti] += dx * dx;
          ++ti;
        }
        if (ti >= ts.size()) break;
        if (++events > opt.max_events_per_path)
          throw ResourceError("fin_msd: event cap exceeded", events, t);
        i = (eng.u01() * total < chain.rate_right[i]) ? i + 1 : i - 1;
      }
      // absorbed at a frozen edge: remaining times keep the last displacement
      for (; ti < ts.size(); ++ti) {
        const double dx = chain.x[i] - chain.x[start];
        acc[ti] += dx * dx;
      }
    }
    for (double& v : acc) v /= static_cast<double>(opt.paths_per_env);
  }

  out.points.resize(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    std::vector<double> env_vals;
    env_vals.reserve(out.env_means.size());
    for (const auto& em : out.env_means) env_vals.push_back(em[k]);
    const MeanSe ms = reduce_mean_se(env_vals);
    out.points[k] = {ts[k], ms.mean, ms.se};
  }
  return out;
}

// Least-squares slope of log(msd) vs log(t) over t in [t_lo, t_hi].
inline double log_log_slope(const std::vector<MsdPoint>& pts, double t_lo, double t_hi) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (const MsdPoint& p : pts) {
    if (p.t < t_lo || p.t > t_hi || p.msd <= 0.0) continue;
    const double lx = std::log(p.t), ly = std::log(p.msd);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("log_log_slope: need >= 2 points in range");
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace traplab
