#include "doctest.h"

#include <cmath>

#include "traplab/fields.hpp"

#include "test_util.hpp"

using namespace traplab;

TEST_SUITE_BEGIN("fields");

TEST_CASE("theta_n evaluates the dimension-dependent speed-up") {
  CHECK(theta_n(10, 3, 0.5) == doctest::Approx(1e4));
  CHECK(theta_n(10, 1, 0.5) == doctest::Approx(1e3));
  CHECK(theta_n(10, 2, 0.5) == doctest::Approx(1e4 / std::log(10.0)).epsilon(1e-12));
  CHECK(theta_n(10, 2, 0.5) == doctest::Approx(4342.9448).epsilon(1e-7));
  CHECK_THROWS_AS(theta_n(1, 2, 0.5), std::invalid_argument);
  CHECK(ScalingSpec::make(10, 2, 0.5).theta == doctest::Approx(theta_n(10, 2, 0.5)));
  CHECK_THROWS_AS(ScalingSpec::make(1, 1, 0.5), std::invalid_argument);
}

TEST_CASE("density and frequency pairings") {
  const Environment env = Environment::with_depths(Lattice::box(1, 2), {2, 5, 3, 1, 4}, 0.5, 0);
  const int n = 2;
  const TestFunction f = TestFunction::triangle({0, 0, 0}, 1.2, 0.9);

  SUBCASE("empty configuration pairs to zero") {
    Configuration eta{{0, 0, 0, 0, 0}};
    CHECK(density_pair(env, eta, n, f) == 0.0);
    CHECK(frequency_pair(env, eta, n, f) == 0.0);
  }
  SUBCASE("saturated configuration gives <W^n|f> and the Riemann sum") {
    Configuration eta{{2, 5, 3, 1, 4}};
    CHECK(density_pair(env, eta, n, f) ==
          doctest::Approx(pair(rescaled_measure(env, n), f)).epsilon(1e-14));
    double riemann = 0.0;
    for (std::int64_t s = 0; s < env.n_sites(); ++s)
      riemann += f(env.lattice.point_of(s, 2.0), 1);
    riemann /= 2.0;  // n^{-d}
    CHECK(frequency_pair(env, eta, n, f) == doctest::Approx(riemann).epsilon(1e-14));
  }
  SUBCASE("density pairing is linear in f") {
    Configuration eta{{1, 3, 0, 1, 2}};
    const TestFunction f2 = TestFunction::cos2({0.2, 0, 0}, 0.8, 1.1);
    const double lhs = density_pair(env, eta, n, f) + density_pair(env, eta, n, f2);
    double rhs = 0.0;
    const double scale = std::pow(2.0, -2.0);
    for (std::int64_t s = 0; s < env.n_sites(); ++s) {
      const Point p = env.lattice.point_of(s, 2.0);
      rhs += scale * static_cast<double>(eta.counts[s]) * (f(p, 1) + f2(p, 1));
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  }
  SUBCASE("X-Z identity holds exactly per snapshot") {
    rng::Engine eng(19);
    for (int rep = 0; rep < 20; ++rep) {
      Configuration eta;
      eta.counts.resize(5);
      for (std::int64_t s = 0; s < 5; ++s)
        eta.counts[s] = static_cast<std::int64_t>(eng.u01() * (env.alpha(s) + 1));
      CHECK(frequency_pair(env, eta, n, f) ==
            doctest::Approx(frequency_via_density_identity(env, eta, n, f)).epsilon(1e-14));
    }
  }
}

TEST_CASE("domination invariants on live snapshots") {
  const TailLaw law{0.5, 1};
  const Environment env = build_environment(1, 8, law, 222);
  const int n = 3;
  const TestFunction f = TestFunction::cos2({0, 0, 0}, 1.5, 1.0);
  const double wn_f = pair(rescaled_measure(env, n), f);
  double riemann = 0.0;
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    riemann += f(env.lattice.point_of(s, static_cast<double>(n)), 1) / n;

  auto rho0 = [](const Point& p) { return 0.6 * std::max(0.0, 1.0 - 0.3 * p[0] * p[0]); };
  for (int rep = 0; rep < 6; ++rep) {
    const ReplicaSnapshot snap =
        run_field_replica(env, 0.0, n, {0.05, 0.2}, rho0, rng::derive(5000, rep));
    for (const Configuration& eta : snap.eta_t) {
      const double x = density_pair(env, eta, n, f);
      const double z = frequency_pair(env, eta, n, f);
      CHECK(x <= wn_f + 1e-12);
      CHECK(x >= 0.0);
      CHECK(z >= 0.0);
      CHECK(z <= riemann + 1e-12);
    }
  }
}

TEST_CASE("decomposition diagnostics") {
  const TailLaw law{0.5, 1};
  const Environment env = build_environment(1, 9, law, 4242);
  const int n = 3;
  const double t = 0.15;
  const TestFunction f = TestFunction::triangle({0, 0, 0}, 1.0, 1.0);
  const TestFunction rho0b = TestFunction::cos2({0, 0, 0}, 1.5, 0.5);
  auto rho0 = [&](const Point& p) { return rho0b(p, 1); };

  std::vector<ReplicaSnapshot> ensemble(300);
  for (std::size_t r = 0; r < ensemble.size(); ++r)
    ensemble[r] = run_field_replica(env, 0.0, n, {0.0, t}, rho0,
                                    rng::derive(31337, static_cast<int>(r)));

  SUBCASE("t = 0: I_n vanishes replica-wise and the field equals the reference in mean") {
    const DecompositionDiagnostics d0 =
        decomposition_diagnostics(env, 0.0, n, 0.0, f, rho0, ensemble, 0);
    CHECK(std::abs(d0.term_i.mean) <= 1e-9);
    CHECK(d0.var_i <= 1e-18);
    CHECK(d0.term_iii == 0.0);
    CHECK(testutil::zscore(d0.field.mean, d0.reference, d0.field.se) <= 3.0);
  }

  SUBCASE("t > 0: mean identity, decomposition closes, variance oracles agree") {
    const DecompositionDiagnostics d =
        decomposition_diagnostics(env, 0.0, n, t, f, rho0, ensemble, 1);
    // duality-forced identity E<X_t|f> = <P_t rho0 W^n|f>
    CHECK(testutil::zscore(d.field.mean, d.reference, d.field.se) <= 3.0);
    // per-replica closure X_t(f) = I + II + III + ref, up to solver tolerance
    CHECK(d.field.mean ==
          doctest::Approx(d.term_i.mean + d.term_ii.mean + d.term_iii + d.reference)
              .epsilon(1e-6));
    // exact binomial variance of II_n within 4 SE of the empirical variance
    const double var_se = d.var_ii * std::sqrt(2.0 / (ensemble.size() - 1.0));
    CHECK(std::abs(d.var_ii - d.var_ii_oracle) <= 4.0 * var_se);
    // negative-dependence bound at Monte Carlo level: Var(I_n) below the bound
    CHECK(d.var_i <= d.var_bound_mean + 4.0 * (d.var_i_se + d.var_bound_se));
  }

  SUBCASE("rho0 == 0 gives identically zero fields") {
    auto zero = [](const Point&) { return 0.0; };
    std::vector<ReplicaSnapshot> empty_ens(5);
    for (std::size_t r = 0; r < empty_ens.size(); ++r)
      empty_ens[r] = run_field_replica(env, 0.0, n, {t}, zero, rng::derive(1, static_cast<int>(r)));
    const DecompositionDiagnostics d =
        decomposition_diagnostics(env, 0.0, n, t, f, zero, empty_ens, 0);
    CHECK(d.field.mean == 0.0);
    CHECK(d.reference == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(d.term_i.mean == 0.0);
    CHECK(d.term_ii.mean == 0.0);
  }
}

// II_n computed as <W^n|(D_0 - rho0) P_t f> must equal the direct route
// n^{-gamma} sum_x alpha_x (P_t(eta0/alpha) - P_t rho0)(x) f(x/n): this is the
// alpha-weighted self-adjointness of the semigroup.
TEST_CASE("term II via both algebraic routes") {
  const TailLaw law{0.5, 1};
  const Environment env = build_environment(1, 5, law, 99);
  const std::size_t ns = static_cast<std::size_t>(env.n_sites());
  const int n = 2;
  const double t = 0.1, tau = t * theta_n(n, 1, env.beta);
  const double scale = std::pow(2.0, -2.0);
  const TestFunction f = TestFunction::triangle({0, 0, 0}, 1.3, 1.0);
  auto rho0 = [](const Point& p) { return 0.4 + 0.2 * std::cos(p[0]); };

  rng::Engine eng(7117);
  const Configuration eta0 = sample_binomial_profile(env, rho0, n, eng);

  std::vector<double> fv(ns), rho0v(ns), d0v(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const Point p = env.lattice.point_of(static_cast<std::int64_t>(s), 2.0);
    fv[s] = f(p, 1);
    rho0v[s] = rho0(p);
    d0v[s] = static_cast<double>(eta0.counts[s]) / static_cast<double>(env.alpha(s));
  }
  const auto pf = evolve_profile(env, 0.0, {tau}, fv)[0];
  const auto pd0 = evolve_profile(env, 0.0, {tau}, d0v)[0];
  const auto prho = evolve_profile(env, 0.0, {tau}, rho0v)[0];

  double route_a = 0.0, route_b = 0.0;
  for (std::size_t s = 0; s < ns; ++s) {
    const double alpha = static_cast<double>(env.alpha(s));
    route_a += scale * alpha * (d0v[s] - rho0v[s]) * pf[s];
    route_b += scale * alpha * (pd0[s] - prho[s]) * fv[s];
  }
  CHECK(route_a == doctest::Approx(route_b).epsilon(1e-7));
}

TEST_SUITE_END();
