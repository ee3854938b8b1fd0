#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "traplab/environment.hpp"
#include "traplab/ips.hpp"
#include "traplab/matrix.hpp"
#include "traplab/rng.hpp"
#include "traplab/scaling.hpp"
#include "traplab/walker.hpp"

// Exact finite-state certification of the self-duality relations
//   E_eta[eta_t(x)]                    = alpha_x P_t D(x)
//   E_eta[eta_t(x)(eta_t(y)-1_x(y))]   = alpha_x (alpha_y-1_x(y)) P^(2)_t D(x,y)
// and of the one-sided variance bound, on fully enumerable boxes. The two
// sides of each relation are computed with different matrix-exponential
// algorithms (Pade vs uniformization) to keep oracle errors de-correlated.

namespace traplab {

// Mixed-radix codec for configurations, radices alpha_x + 1 in canonical site
// order (first site most significant).
struct MixedRadixCodec {
  std::vector<std::int64_t> radix;
  std::uint64_t n_states = 1;

  explicit MixedRadixCodec(const Environment& env) {
    radix.reserve(static_cast<std::size_t>(env.n_sites()));
    for (std::int64_t s = 0; s < env.n_sites(); ++s) {
      radix.push_back(env.alpha(s) + 1);
      n_states *= static_cast<std::uint64_t>(env.alpha(s) + 1);
    }
  }

  std::uint64_t encode(const std::vector<std::int64_t>& counts) const {
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < radix.size(); ++i)
      idx = idx * static_cast<std::uint64_t>(radix[i]) +
            static_cast<std::uint64_t>(counts[i]);
    return idx;
  }

  std::vector<std::int64_t> decode(std::uint64_t idx) const {
    std::vector<std::int64_t> counts(radix.size());
    for (std::size_t i = radix.size(); i-- > 0;) {
      counts[i] = static_cast<std::int64_t>(idx % static_cast<std::uint64_t>(radix[i]));
      idx /= static_cast<std::uint64_t>(radix[i]);
    }
    return counts;
  }
};

struct GeneratorMatrix {
  std::uint64_t n = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;  // off-diagonal
  std::vector<double> diag;

  void add(std::uint64_t from, std::uint64_t to, double rate) {
    rows[from].emplace_back(static_cast<std::uint32_t>(to), rate);
    diag[from] -= rate;
  }

  Matrix dense(double t = 1.0, std::size_t cap = 4096) const {
    if (n > cap) throw SizeRefusal("GeneratorMatrix: too large for dense conversion");
    Matrix m(n, n);
    for (std::uint64_t i = 0; i < n; ++i) {
      m(i, i) = t * diag[i];
      for (const auto& [j, r] : rows[i]) m(i, j) += t * r;
    }
    return m;
  }

  double max_row_sum_residual() const {
    double worst = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) {
      double s = diag[i];
      for (const auto& [j, r] : rows[i]) s += r;
      worst = std::max(worst, std::abs(s));
    }
    return worst;
  }
};

struct FullGenerator {
  MixedRadixCodec codec;
  GeneratorMatrix gen;
};

// Exact assembly of the exclusion generator over the whole configuration
// space; conserves particle number (block structure by total count).
inline FullGenerator build_full_generator(const Environment& env, double a,
                                          std::uint64_t state_cap = 1'000'000ULL) {
  MixedRadixCodec codec(env);
  if (codec.n_states > state_cap)
    throw SizeRefusal("build_full_generator: " + std::to_string(codec.n_states) +
                      " states exceed cap " + std::to_string(state_cap));
  GeneratorMatrix g;
  g.n = codec.n_states;
  g.rows.resize(g.n);
  g.diag.assign(g.n, 0.0);

  const std::int64_t n = env.n_sites();
  Configuration eta;
  eta.counts.assign(static_cast<std::size_t>(n), 0);
  for (std::uint64_t idx = 0;; ++idx) {
    for (std::int64_t x = 0; x < n; ++x) {
      if (eta.counts[x] == 0) continue;
      const auto* nb = env.neighbors_begin(x);
      for (std::size_t k = 0; k < env.degree(x); ++k) {
        const std::int64_t y = nb[k];
        if (eta.counts[y] >= env.alpha(y)) continue;
        const double rate = ips_rate(env, a, eta, x, y);
        if (rate <= 0.0) continue;
        eta.counts[x] -= 1;
        eta.counts[y] += 1;
        const std::uint64_t to = codec.encode(eta.counts);
        eta.counts[x] += 1;
        eta.counts[y] -= 1;
        g.add(idx, to, rate);
      }
    }
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
  return {std::move(codec), std::move(g)};
}

// Labeled k-particle dual process, k in {1,2}. For k=2 the state space is the
// set of ordered pairs (z,w) with z != w, or z == w when alpha_z >= 2.
struct PairCodec {
  std::int64_t n_sites = 0;
  std::vector<std::int64_t> compact;             // (z*n + w) -> compact id or -1
  std::vector<std::pair<std::int64_t, std::int64_t>> states;

  PairCodec() = default;
  explicit PairCodec(const Environment& env) : n_sites(env.n_sites()) {
    compact.assign(static_cast<std::size_t>(n_sites * n_sites), -1);
    for (std::int64_t z = 0; z < n_sites; ++z)
      for (std::int64_t w = 0; w < n_sites; ++w) {
        if (z == w && env.alpha(z) < 2) continue;
        compact[static_cast<std::size_t>(z * n_sites + w)] =
            static_cast<std::int64_t>(states.size());
        states.emplace_back(z, w);
      }
  }

  std::int64_t id(std::int64_t z, std::int64_t w) const {
    return compact[static_cast<std::size_t>(z * n_sites + w)];
  }
};

struct KParticleGenerator {
  int k = 1;
  PairCodec pairs;           // populated for k=2
  GeneratorMatrix gen;       // over sites (k=1) or valid ordered pairs (k=2)
};

inline KParticleGenerator build_kparticle_generator(const Environment& env, double a,
                                                    int k) {
  if (k != 1 && k != 2)
    throw std::invalid_argument("build_kparticle_generator: k must be 1 or 2");
  RateTable rt(env, a);
  KParticleGenerator out;
  out.k = k;
  if (k == 1) {
    const std::uint64_t n = static_cast<std::uint64_t>(env.n_sites());
    out.gen.n = n;
    out.gen.rows.resize(n);
    out.gen.diag.assign(n, 0.0);
    for (std::int64_t x = 0; x < env.n_sites(); ++x) {
      const auto* nb = env.neighbors_begin(x);
      for (std::size_t j = 0; j < env.degree(x); ++j)
        out.gen.add(static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(nb[j]),
                    rt.u[x] * rt.v[nb[j]]);
    }
    return out;
  }

  out.pairs = PairCodec(env);
  const std::uint64_t n = out.pairs.states.size();
  out.gen.n = n;
  out.gen.rows.resize(n);
  out.gen.diag.assign(n, 0.0);
  for (std::uint64_t s = 0; s < n; ++s) {
    const auto [z, w] = out.pairs.states[s];
    // particle 1 moves z -> y, blocked by the partner at w
    const auto* nbz = env.neighbors_begin(z);
    for (std::size_t j = 0; j < env.degree(z); ++j) {
      const std::int64_t y = nbz[j];
      const double occ = (w == y) ? 1.0 : 0.0;
      const double rate =
          rt.u[z] * rt.v[y] * (1.0 - occ / static_cast<double>(env.alpha(y)));
      if (rate <= 0.0) continue;
      out.gen.add(s, static_cast<std::uint64_t>(out.pairs.id(y, w)), rate);
    }
    // particle 2 moves w -> y, blocked by the partner at z
    const auto* nbw = env.neighbors_begin(w);
    for (std::size_t j = 0; j < env.degree(w); ++j) {
      const std::int64_t y = nbw[j];
      const double occ = (z == y) ? 1.0 : 0.0;
      const double rate =
          rt.u[w] * rt.v[y] * (1.0 - occ / static_cast<double>(env.alpha(y)));
      if (rate <= 0.0) continue;
      out.gen.add(s, static_cast<std::uint64_t>(out.pairs.id(z, y)), rate);
    }
  }
  return out;
}

// Exact detailed-balance residual of the k=2 process w.r.t. the unnormalized
// weights alpha(z,w) = alpha_z (alpha_w - 1_z(w)).
inline double check_pair_reversibility(const Environment& env, double a) {
  const KParticleGenerator g2 = build_kparticle_generator(env, a, 2);
  auto weight = [&](std::int64_t z, std::int64_t w) -> double {
    return static_cast<double>(env.alpha(z)) *
           static_cast<double>(env.alpha(w) - (z == w ? 1 : 0));
  };
  double worst = 0.0;
  for (std::uint64_t s = 0; s < g2.gen.n; ++s) {
    const auto [z, w] = g2.pairs.states[s];
    for (const auto& [to, rate] : g2.gen.rows[s]) {
      const auto [z2, w2] = g2.pairs.states[to];
      double back = 0.0;
      for (const auto& [bt, br] : g2.gen.rows[to])
        if (bt == s) back += br;
      const double f = weight(z, w) * rate;
      const double b = weight(z2, w2) * back;
      worst = std::max(worst, std::abs(f - b) / std::max({f, b, 1e-300}));
    }
  }
  return worst;
}

struct DualityReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_gap = 0.0;
  double rel_gap = 0.0;
  double tol = 1e-10;
  bool pass = false;
  bool undefined = false;
  std::string provenance;
};

namespace detail {

inline std::string describe_case(const Environment& env, double a,
                                 const Configuration& eta, std::int64_t x,
                                 std::int64_t y, double t) {
  std::ostringstream os;
  os << "a=" << a << " t=" << t << " alpha=[";
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    os << env.alpha(s) << (s + 1 < env.n_sites() ? "," : "");
  os << "] eta=[";
  for (std::size_t i = 0; i < eta.counts.size(); ++i)
    os << eta.counts[i] << (i + 1 < eta.counts.size() ? "," : "");
  os << "] x=" << x;
  if (y >= 0) os << " y=" << y;
  return os.str();
}

}  // namespace detail

// E_eta[eta_t(x)] vs alpha_x P_t D(x); lhs via Pade on the full generator,
// rhs via uniformization on the one-particle generator.
inline DualityReport verify_duality_one(const Environment& env, double a,
                                        const Configuration& eta, std::int64_t x,
                                        double t, double tol = 1e-10) {
  if (!eta.valid_for(env)) throw std::invalid_argument("verify_duality_one: invalid eta");
  const FullGenerator fg = build_full_generator(env, a);
  const Matrix pt = expm_pade(fg.gen.dense(t));
  const std::uint64_t row = fg.codec.encode(eta.counts);

  double lhs = 0.0;
  for (std::uint64_t s = 0; s < fg.gen.n; ++s) {
    const auto counts = fg.codec.decode(s);
    lhs += pt(row, s) * static_cast<double>(counts[static_cast<std::size_t>(x)]);
  }

  const KParticleGenerator g1 = build_kparticle_generator(env, a, 1);
  const Matrix at = expm_uniformization(g1.gen.dense(1.0), t);
  double rhs = 0.0;
  for (std::int64_t y = 0; y < env.n_sites(); ++y)
    rhs += at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) *
           static_cast<double>(eta.counts[y]) / static_cast<double>(env.alpha(y));
  rhs *= static_cast<double>(env.alpha(x));

  DualityReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.abs_gap = std::abs(lhs - rhs);
  rep.rel_gap = rep.abs_gap / std::max(1.0, std::max(std::abs(lhs), std::abs(rhs)));
  rep.tol = tol;
  rep.pass = rep.abs_gap <= tol;
  rep.provenance = "rel1 " + detail::describe_case(env, a, eta, x, -1, t);
  return rep;
}

// E_eta[eta_t(x)(eta_t(y)-1_x(y))] vs alpha_x(alpha_y-1_x(y)) P^(2)_t D(x,y).
// The case x == y with alpha_x == 1 leaves D undefined and is reported as such.
inline DualityReport verify_duality_two(const Environment& env, double a,
                                        const Configuration& eta, std::int64_t x,
                                        std::int64_t y, double t, double tol = 1e-10) {
  if (!eta.valid_for(env)) throw std::invalid_argument("verify_duality_two: invalid eta");
  DualityReport rep;
  rep.tol = tol;
  rep.provenance = "rel2 " + detail::describe_case(env, a, eta, x, y, t);
  const std::int64_t ind = (x == y) ? 1 : 0;
  if (env.alpha(y) - ind == 0) {
    rep.undefined = true;
    rep.provenance += " [undefined: alpha_y - 1_x(y) = 0]";
    return rep;
  }

  const FullGenerator fg = build_full_generator(env, a);
  const Matrix pt = expm_pade(fg.gen.dense(t));
  const std::uint64_t row = fg.codec.encode(eta.counts);
  double lhs = 0.0;
  for (std::uint64_t s = 0; s < fg.gen.n; ++s) {
    const auto counts = fg.codec.decode(s);
    const double cx = static_cast<double>(counts[static_cast<std::size_t>(x)]);
    const double cy = static_cast<double>(counts[static_cast<std::size_t>(y)]);
    lhs += pt(row, s) * cx * (cy - static_cast<double>(ind));
  }

  const KParticleGenerator g2 = build_kparticle_generator(env, a, 2);
  const std::int64_t start = g2.pairs.id(x, y);
  if (start < 0) {
    rep.undefined = true;
    rep.provenance += " [undefined: (x,y) not a valid pair state]";
    return rep;
  }
  const Matrix a2t = expm_uniformization(g2.gen.dense(1.0), t);
  double rhs = 0.0;
  for (std::uint64_t s = 0; s < g2.gen.n; ++s) {
    const auto [z, w] = g2.pairs.states[s];
    const std::int64_t indzw = (z == w) ? 1 : 0;
    const double denom = static_cast<double>(env.alpha(w) - indzw);
    const double dual =
        (static_cast<double>(eta.counts[z]) / static_cast<double>(env.alpha(z))) *
        (static_cast<double>(eta.counts[w] - indzw) / denom);
    rhs += a2t(static_cast<std::size_t>(start), s) * dual;
  }
  rhs *= static_cast<double>(env.alpha(x)) * static_cast<double>(env.alpha(y) - ind);

  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.abs_gap = std::abs(lhs - rhs);
  rep.rel_gap = rep.abs_gap / std::max(1.0, std::max(std::abs(lhs), std::abs(rhs)));
  rep.pass = rep.abs_gap <= tol;
  return rep;
}

struct VarianceBoundReport {
  double lhs = 0.0;   // E[(<X_t|f> - <X_0|P_t f>)^2], exact
  double rhs = 0.0;   // n^{-d/beta} <X_0 | P_t(f^2) - (P_t f)^2>
  double slack = 0.0; // rhs - lhs (one-sided; must be >= -tol)
  bool pass = false;
};

// Exact check of the negative-dependence variance bound on an enumerable box.
inline VarianceBoundReport verify_variance_bound(const Environment& env, double a,
                                                 const Configuration& eta,
                                                 const std::vector<double>& f_values,
                                                 int n, double t, double tol = 1e-10) {
  if (!eta.valid_for(env)) throw std::invalid_argument("verify_variance_bound: invalid eta");
  if (f_values.size() != static_cast<std::size_t>(env.n_sites()))
    throw std::invalid_argument("verify_variance_bound: f length mismatch");
  const double gamma = static_cast<double>(env.d()) / env.beta;
  const double scale = std::pow(static_cast<double>(n), -gamma);
  const double tau = t * theta_n(n, env.d(), env.beta);

  // one-particle side via uniformization
  const KParticleGenerator g1 = build_kparticle_generator(env, a, 1);
  const Matrix ptau = expm_uniformization(g1.gen.dense(1.0), tau);
  const std::size_t ns = static_cast<std::size_t>(env.n_sites());
  std::vector<double> pf(ns, 0.0), pf2(ns, 0.0);
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t j = 0; j < ns; ++j) {
      pf[i] += ptau(i, j) * f_values[j];
      pf2[i] += ptau(i, j) * f_values[j] * f_values[j];
    }

  double rhs = 0.0;
  for (std::size_t i = 0; i < ns; ++i)
    rhs += static_cast<double>(eta.counts[i]) * (pf2[i] - pf[i] * pf[i]);
  rhs *= scale * scale;  // <X_0|.> carries n^{-gamma}, and the bound another n^{-gamma}

  // full-system side via Pade
  const FullGenerator fg = build_full_generator(env, a);
  const Matrix pt = expm_pade(fg.gen.dense(tau));
  const std::uint64_t row = fg.codec.encode(eta.counts);

  double c0 = 0.0;  // <X_0|P_t f>
  for (std::size_t i = 0; i < ns; ++i)
    c0 += scale * static_cast<double>(eta.counts[i]) * pf[i];

  double m1 = 0.0, m2 = 0.0;
  for (std::uint64_t s = 0; s < fg.gen.n; ++s) {
    const auto counts = fg.codec.decode(s);
    double field = 0.0;
    for (std::size_t i = 0; i < ns; ++i)
      field += scale * static_cast<double>(counts[i]) * f_values[i];
    m1 += pt(row, s) * field;
    m2 += pt(row, s) * field * field;
  }
  const double lhs = m2 - 2.0 * c0 * m1 + c0 * c0;

  VarianceBoundReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.slack = rhs - lhs;
  rep.pass = rep.slack >= -tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Randomized battery (fixed seeds, reproducible across runs)

struct BatteryCase {
  Environment env;
  double a = 0.0;
  Configuration eta;
  std::int64_t x = 0, y = 0;
  double t = 0.0;
};

inline BatteryCase draw_battery_case(std::uint64_t seed, int case_id) {
  rng::Engine eng(rng::derive(seed, 0xba77e51, static_cast<std::uint64_t>(case_id)));
  const int sites = 2 + static_cast<int>(eng.u01() * 2.0);  // 2 or 3
  const Lattice lat = Lattice::of_extents(1, {sites, 1, 1});
  std::vector<std::int64_t> alpha(static_cast<std::size_t>(sites));
  for (auto& v : alpha) v = 1 + static_cast<std::int64_t>(eng.u01() * 3.0);  // 1..3
  BatteryCase c;
  c.env = Environment::with_depths(lat, alpha, 0.5, seed);
  const double as[3] = {0.0, 0.5, 1.0};
  c.a = as[static_cast<int>(eng.u01() * 3.0)];
  c.eta.counts.resize(static_cast<std::size_t>(sites));
  for (int s = 0; s < sites; ++s)
    c.eta.counts[static_cast<std::size_t>(s)] =
        static_cast<std::int64_t>(eng.u01() * static_cast<double>(alpha[s] + 1));
  c.t = 2.0 * std::max(eng.u01(), 1e-3);
  c.x = static_cast<std::int64_t>(eng.u01() * sites);
  // resample y until the rel2 dual function is defined
  for (;;) {
    c.y = static_cast<std::int64_t>(eng.u01() * sites);
    if (c.env.alpha(c.y) - (c.x == c.y ? 1 : 0) > 0) break;
  }
  return c;
}

struct BatterySummary {
  int cases = 0;
  int passed = 0;
  double worst_gap = 0.0;
  std::vector<DualityReport> reports;
};

inline BatterySummary run_duality_battery(std::uint64_t seed, int n_cases,
                                          double tol = 1e-10, bool keep_reports = false) {
  BatterySummary out;
  out.cases = n_cases;
  for (int i = 0; i < n_cases; ++i) {
    const BatteryCase c = draw_battery_case(seed, i);
    const DualityReport r1 = verify_duality_one(c.env, c.a, c.eta, c.x, c.t, tol);
    const DualityReport r2 = verify_duality_two(c.env, c.a, c.eta, c.x, c.y, c.t, tol);
    const bool ok = r1.pass && (r2.pass || r2.undefined);
    if (ok) ++out.passed;
    out.worst_gap = std::max({out.worst_gap, r1.abs_gap, r2.undefined ? 0.0 : r2.abs_gap});
    if (keep_reports || !ok) {
      out.reports.push_back(r1);
      out.reports.push_back(r2);
    }
  }
  return out;
}

}  // namespace traplab
