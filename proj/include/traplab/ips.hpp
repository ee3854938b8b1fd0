#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "traplab/environment.hpp"
#include "traplab/rng.hpp"
#include "traplab/walker.hpp"

// Partial exclusion system of interacting trap walkers: site x holds at most
// alpha_x particles and a jump x -> y carries the blocking factor
// (1 - eta(y)/alpha_y). Exact Gillespie dynamics with a sum tree over
// per-site outflow rates.

namespace traplab {

struct SizeRefusal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Configuration {
  std::vector<std::int64_t> counts;

  std::int64_t total() const {
    std::int64_t s = 0;
    for (std::int64_t c : counts) s += c;
    return s;
  }

  bool valid_for(const Environment& env) const {
    if (counts.size() != static_cast<std::size_t>(env.n_sites())) return false;
    for (std::int64_t s = 0; s < env.n_sites(); ++s)
      if (counts[s] < 0 || counts[s] > env.alpha(s)) return false;
    return true;
  }
};

struct EventSchedule {
  std::vector<double> times;  // physical (already sped-up) observation times

  void validate() const {
    for (std::size_t i = 1; i < times.size(); ++i)
      if (times[i] < times[i - 1])
        throw std::invalid_argument("EventSchedule: times must be non-decreasing");
  }
};

// eta(x) alpha_x^{a-1} alpha_y^a (1 - eta(y)/alpha_y); zero iff the source is
// empty or the target trap is full.
inline double ips_rate(const Environment& env, double a, const Configuration& eta,
                       std::int64_t x, std::int64_t y) {
  const double ax = static_cast<double>(env.alpha(x));
  const double ay = static_cast<double>(env.alpha(y));
  const double block = 1.0 - static_cast<double>(eta.counts[y]) / ay;
  return static_cast<double>(eta.counts[x]) * std::pow(ax, a - 1.0) * std::pow(ay, a) *
         block;
}

namespace detail {

// Power-of-two sum tree with O(log n) updates and proportional sampling.
class SumTree {
 public:
  explicit SumTree(std::size_t n) {
    leaves_ = 1;
    while (leaves_ < n) leaves_ <<= 1;
    tree_.assign(2 * leaves_, 0.0);
    n_ = n;
  }

  void set(std::size_t i, double v) {
    std::size_t k = leaves_ + i;
    tree_[k] = v;
    for (k >>= 1; k >= 1; k >>= 1) {
      tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
      if (k == 1) break;
    }
  }

  double get(std::size_t i) const { return tree_[leaves_ + i]; }
  double total() const { return tree_[1]; }

  // index with cumulative weight covering r in [0, total)
  std::size_t sample(double r) const {
    std::size_t k = 1;
    while (k < leaves_) {
      const double left = tree_[2 * k];
      if (r < left) {
        k = 2 * k;
      } else {
        r -= left;
        k = 2 * k + 1;
      }
    }
    std::size_t i = k - leaves_;
    if (i >= n_) i = n_ - 1;
    return i;
  }

  void rebuild() {
    for (std::size_t k = leaves_ - 1; k >= 1; --k) {
      tree_[k] = tree_[2 * k] + tree_[2 * k + 1];
      if (k == 1) break;
    }
  }

 private:
  std::size_t leaves_ = 1, n_ = 0;
  std::vector<double> tree_;
};

}  // namespace detail

struct IpsResult {
  std::vector<double> times;
  std::vector<Configuration> snapshots;
  std::uint64_t events = 0;
  bool completed = true;
  std::string note;
};

// Exact Gillespie simulation. Snapshots are recorded at the scheduled times;
// no event log is kept.
inline IpsResult simulate_ips(const Environment& env, double a, const Configuration& eta0,
                              const EventSchedule& schedule, rng::Engine& eng,
                              std::uint64_t max_events = 2'000'000'000ULL) {
  if (!eta0.valid_for(env)) throw std::invalid_argument("simulate_ips: invalid eta0");
  schedule.validate();
  const std::int64_t n = env.n_sites();
  RateTable rt(env, a);

  Configuration eta = eta0;
  detail::SumTree tree(static_cast<std::size_t>(n));

  auto site_outflow = [&](std::int64_t x) -> double {
    if (eta.counts[x] == 0) return 0.0;
    const auto* nb = env.neighbors_begin(x);
    const std::size_t deg = env.degree(x);
    double acc = 0.0;
    for (std::size_t k = 0; k < deg; ++k) {
      const std::int64_t y = nb[k];
      acc += rt.v[y] *
             (1.0 - static_cast<double>(eta.counts[y]) / static_cast<double>(env.alpha(y)));
    }
    return static_cast<double>(eta.counts[x]) * rt.u[x] * acc;
  };

  for (std::int64_t s = 0; s < n; ++s) tree.set(static_cast<std::size_t>(s), site_outflow(s));

  IpsResult out;
  out.times = schedule.times;
  out.snapshots.reserve(schedule.times.size());

  double t = 0.0;
  std::size_t next_snap = 0;
  std::uint64_t events = 0;
  std::vector<std::int64_t> touched;
  touched.reserve(2 + 4 * static_cast<std::size_t>(env.d()) * 2);

  while (next_snap < schedule.times.size()) {
    const double total = tree.total();
    if (total <= 0.0) {
      // frozen configuration: every remaining snapshot sees the current state
      for (; next_snap < schedule.times.size(); ++next_snap) out.snapshots.push_back(eta);
      break;
    }
    const double dt = eng.exponential(total);
    const double t_next = t + dt;
    while (next_snap < schedule.times.size() && schedule.times[next_snap] < t_next) {
      out.snapshots.push_back(eta);
      ++next_snap;
    }
    if (next_snap >= schedule.times.size()) break;
    t = t_next;

    if (++events > max_events) {
      out.events = events;
      out.completed = false;
      out.note = "event cap exceeded at t=" + std::to_string(t);
      return out;
    }

    // transition: site by outflow weight, then neighbor by v_y * blocking
    const std::int64_t x =
        static_cast<std::int64_t>(tree.sample(eng.u01() * total));
    const auto* nb = env.neighbors_begin(x);
    const std::size_t deg = env.degree(x);
    double wsum = 0.0;
    for (std::size_t k = 0; k < deg; ++k) {
      const std::int64_t y = nb[k];
      wsum += rt.v[y] *
              (1.0 - static_cast<double>(eta.counts[y]) / static_cast<double>(env.alpha(y)));
    }
    if (wsum <= 0.0 || eta.counts[x] == 0) {
      // stale tree entry from roundoff; refresh and continue
      tree.set(static_cast<std::size_t>(x), site_outflow(x));
      continue;
    }
    double target = eng.u01() * wsum;
    std::int64_t y = nb[deg - 1];
    for (std::size_t k = 0; k < deg; ++k) {
      const std::int64_t cand = nb[k];
      target -= rt.v[cand] * (1.0 - static_cast<double>(eta.counts[cand]) /
                                        static_cast<double>(env.alpha(cand)));
      if (target < 0.0) {
        y = cand;
        break;
      }
    }

    eta.counts[x] -= 1;
    eta.counts[y] += 1;

    touched.clear();
    touched.push_back(x);
    touched.push_back(y);
    for (std::size_t k = 0; k < env.degree(x); ++k) touched.push_back(env.neighbors_begin(x)[k]);
    for (std::size_t k = 0; k < env.degree(y); ++k) touched.push_back(env.neighbors_begin(y)[k]);
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (std::int64_t z : touched) tree.set(static_cast<std::size_t>(z), site_outflow(z));

    if ((events & 0x3fffff) == 0) tree.rebuild();
  }
  out.events = events;
  return out;
}

// Product Binomial(alpha_x, rho0(x/n)) draw.
inline Configuration sample_binomial_profile(const Environment& env,
                                             const std::function<double(const Point&)>& rho0,
                                             int n, rng::Engine& eng) {
  Configuration eta;
  eta.counts.resize(static_cast<std::size_t>(env.n_sites()));
  for (std::int64_t s = 0; s < env.n_sites(); ++s) {
    double p = rho0(env.lattice.point_of(s, static_cast<double>(n)));
    if (p < -1e-12 || p > 1.0 + 1e-12)
      throw std::invalid_argument("sample_binomial_profile: rho0 must take values in [0,1]");
    p = std::clamp(p, 0.0, 1.0);
    eta.counts[static_cast<std::size_t>(s)] = eng.binomial(env.alpha(s), p);
  }
  return eta;
}

// Max relative detailed-balance violation of nu_rho = prod Bin(alpha_x, rho)
// over every configuration and bond of a fully enumerable box.
inline double check_detailed_balance(const Environment& env, double a, double rho,
                                     std::uint64_t state_cap = 1'000'000ULL) {
  if (!(rho >= 0.0 && rho <= 1.0))
    throw std::invalid_argument("check_detailed_balance: rho must be in [0,1]");
  const std::int64_t n = env.n_sites();
  double states = 1.0;
  for (std::int64_t s = 0; s < n; ++s) states *= static_cast<double>(env.alpha(s) + 1);
  if (states > static_cast<double>(state_cap))
    throw SizeRefusal("check_detailed_balance: state space too large (" +
                      std::to_string(states) + " states, cap " + std::to_string(state_cap) +
                      ")");

  // log nu up to the normalizing constant
  auto log_binom_pmf = [&](std::int64_t alpha, std::int64_t k) -> double {
    if (rho == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    if (rho == 1.0) return k == alpha ? 0.0 : -std::numeric_limits<double>::infinity();
    const double lc = std::lgamma(static_cast<double>(alpha + 1)) -
                      std::lgamma(static_cast<double>(k + 1)) -
                      std::lgamma(static_cast<double>(alpha - k + 1));
    return lc + static_cast<double>(k) * std::log(rho) +
           static_cast<double>(alpha - k) * std::log1p(-rho);
  };

  Configuration eta;
  eta.counts.assign(static_cast<std::size_t>(n), 0);
  double worst = 0.0;
  for (;;) {
    double log_nu = 0.0;
    for (std::int64_t s = 0; s < n; ++s) log_nu += log_binom_pmf(env.alpha(s), eta.counts[s]);

    for (std::int64_t x = 0; x < n; ++x) {
      if (eta.counts[x] == 0) continue;
      const auto* nb = env.neighbors_begin(x);
      for (std::size_t k = 0; k < env.degree(x); ++k) {
        const std::int64_t y = nb[k];
        if (eta.counts[y] >= env.alpha(y)) continue;
        const double fwd = ips_rate(env, a, eta, x, y);
        Configuration eta2 = eta;
        eta2.counts[x] -= 1;
        eta2.counts[y] += 1;
        const double bwd = ips_rate(env, a, eta2, y, x);
        double log_nu2 = log_nu - log_binom_pmf(env.alpha(x), eta.counts[x]) -
                         log_binom_pmf(env.alpha(y), eta.counts[y]) +
                         log_binom_pmf(env.alpha(x), eta2.counts[x]) +
                         log_binom_pmf(env.alpha(y), eta2.counts[y]);
        const double flux_f = std::exp(log_nu) * fwd;
        const double flux_b = std::exp(log_nu2) * bwd;
        const double scale = std::max({flux_f, flux_b, 1e-300});
        worst = std::max(worst, std::abs(flux_f - flux_b) / scale);
      }
    }

    // mixed-radix odometer over prod {0..alpha_x}
    std::int64_t pos = n - 1;
    while (pos >= 0) {
      if (eta.counts[pos] < env.alpha(pos)) {
        ++eta.counts[pos];
        break;
      }
      eta.counts[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
  return worst;
}

// Multivariate falling factorial eta(x1)(eta(x2) - 1_{x1}(x2)) ... for k <= 3.
inline double falling_factorial(const Configuration& eta,
                                const std::vector<std::int64_t>& sites) {
  if (sites.empty() || sites.size() > 3)
    throw std::invalid_argument("falling_factorial: tuple size must be 1..3");
  double prod = 1.0;
  for (std::size_t j = 0; j < sites.size(); ++j) {
    std::int64_t dec = 0;
    for (std::size_t i = 0; i < j; ++i)
      if (sites[i] == sites[j]) ++dec;
    prod *= static_cast<double>(eta.counts[sites[j]] - dec);
  }
  return prod;
}

inline MeanSe falling_factorial_moment(const std::vector<Configuration>& ensemble,
                                       const std::vector<std::int64_t>& sites) {
  std::vector<double> vals;
  vals.reserve(ensemble.size());
  for (const Configuration& eta : ensemble) vals.push_back(falling_factorial(eta, sites));
  return reduce_mean_se(vals);
}

}  // namespace traplab
