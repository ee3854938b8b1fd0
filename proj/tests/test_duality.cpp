#include "doctest.h"

#include <cmath>
#include <map>

#include "traplab/duality.hpp"

#include "test_util.hpp"

using namespace traplab;

TEST_SUITE_BEGIN("duality");

TEST_CASE("full generator assembly") {
  SUBCASE("two sites alpha = (1,1): 4 states, 2 transitions") {
    const Environment env =
        Environment::with_depths(Lattice::of_extents(1, {2, 1, 1}), {1, 1}, 0.5, 0);
    const FullGenerator fg = build_full_generator(env, 0.0);
    CHECK(fg.gen.n == 4);
    std::size_t transitions = 0;
    for (const auto& row : fg.gen.rows) transitions += row.size();
    CHECK(transitions == 2);
    CHECK(fg.gen.max_row_sum_residual() <= 1e-12);
  }
  SUBCASE("block structure by particle number, alpha = (2,3)") {
    const Environment env =
        Environment::with_depths(Lattice::of_extents(1, {2, 1, 1}), {2, 3}, 0.5, 0);
    const FullGenerator fg = build_full_generator(env, 0.5);
    // combinatorial oracle: #\{eta : sum eta = k\}
    std::map<std::int64_t, int> block;
    for (std::uint64_t s = 0; s < fg.gen.n; ++s) {
      const auto c = fg.codec.decode(s);
      block[c[0] + c[1]]++;
    }
    const std::vector<int> expected = {1, 2, 3, 3, 2, 1};
    for (std::int64_t k = 0; k <= 5; ++k) CHECK(block[k] == expected[static_cast<std::size_t>(k)]);
    // no transition changes the total count
    for (std::uint64_t s = 0; s < fg.gen.n; ++s) {
      const auto cs = fg.codec.decode(s);
      for (const auto& [to, rate] : fg.gen.rows[s]) {
        const auto ct = fg.codec.decode(to);
        CHECK(cs[0] + cs[1] == ct[0] + ct[1]);
        CHECK(rate > 0.0);
      }
    }
  }
  SUBCASE("size refusal") {
    const Environment env = Environment::with_depths(
        Lattice::box(1, 10), std::vector<std::int64_t>(21, 3), 0.5, 0);
    CHECK_THROWS_AS(build_full_generator(env, 0.0), SizeRefusal);
  }
}

TEST_CASE("k-particle generators") {
  const Environment env = Environment::with_depths(Lattice::box(1, 1), {2, 3, 1}, 0.5, 0);
  SUBCASE("k = 1 matches btm_rates") {
    const KParticleGenerator g1 = build_kparticle_generator(env, 0.5, 1);
    for (std::int64_t x = 0; x < env.n_sites(); ++x) {
      std::map<std::int64_t, double> expect;
      for (const auto& [y, r] : btm_rates(env, 0.5, x)) expect[y] = r;
      for (const auto& [to, r] : g1.gen.rows[static_cast<std::uint64_t>(x)])
        CHECK(r == doctest::Approx(expect[static_cast<std::int64_t>(to)]).epsilon(1e-14));
    }
  }
  SUBCASE("alpha == 1 suppresses co-location entirely") {
    const Environment ones = Environment::with_depths(Lattice::box(1, 1), {1, 1, 1}, 0.5, 0);
    const KParticleGenerator g2 = build_kparticle_generator(ones, 0.0, 2);
    CHECK(g2.pairs.states.size() == 6);  // ordered pairs, no diagonal
    for (std::uint64_t s = 0; s < g2.gen.n; ++s)
      for (const auto& [to, rate] : g2.gen.rows[s]) {
        const auto [z, w] = g2.pairs.states[to];
        CHECK(z != w);
        CHECK(rate > 0.0);
      }
  }
  SUBCASE("pair process is reversible w.r.t. alpha_z (alpha_w - 1_z(w))") {
    rng::Engine eng(17);
    for (int rep = 0; rep < 10; ++rep) {
      const int sites = 2 + static_cast<int>(eng.u01() * 2.0);
      std::vector<std::int64_t> alpha(static_cast<std::size_t>(sites));
      for (auto& v : alpha) v = 1 + static_cast<std::int64_t>(eng.u01() * 3.0);
      const Environment e = Environment::with_depths(
          Lattice::of_extents(1, {sites, 1, 1}), alpha, 0.5, 0);
      for (double a : {0.0, 0.5, 1.0}) CHECK(check_pair_reversibility(e, a) <= 1e-12);
    }
  }
}

TEST_CASE("duality relation one") {
  const Environment env = Environment::with_depths(Lattice::box(1, 1), {1, 2, 1}, 0.5, 0);
  SUBCASE("t = 0 is the identity") {
    Configuration eta{{1, 2, 0}};
    const DualityReport r = verify_duality_one(env, 0.7, eta, 1, 0.0);
    CHECK(r.abs_gap <= 1e-13);
    CHECK(r.lhs == doctest::Approx(2.0));
  }
  SUBCASE("frozen full configuration") {
    Configuration eta{{1, 2, 1}};
    const DualityReport r = verify_duality_one(env, 0.0, eta, 2, 1.3);
    CHECK(r.lhs == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.rhs == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.pass);
  }
  SUBCASE("reference case: eta = (1,1,0), a = 0, t = 0.7") {
    Configuration eta{{1, 1, 0}};
    const DualityReport r = verify_duality_one(env, 0.0, eta, 0, 0.7);
    CHECK(r.pass);
    CHECK(r.abs_gap <= 1e-10);
  }
}

TEST_CASE("duality relation two") {
  const Environment env = Environment::with_depths(Lattice::box(1, 1), {1, 2, 1}, 0.5, 0);
  SUBCASE("t = 0 identity") {
    Configuration eta{{1, 2, 0}};
    const DualityReport r = verify_duality_two(env, 0.5, eta, 0, 1, 0.0);
    CHECK(!r.undefined);
    CHECK(r.abs_gap <= 1e-13);
    CHECK(r.lhs == doctest::Approx(1.0 * 2.0));
  }
  SUBCASE("empty pair sites still satisfy the relation") {
    Configuration eta{{0, 2, 0}};
    const DualityReport r = verify_duality_two(env, 0.0, eta, 0, 2, 0.9);
    CHECK(!r.undefined);
    CHECK(r.abs_gap <= 1e-10);
  }
  SUBCASE("alpha == 1 diagonal is reported undefined") {
    const Environment ones = Environment::with_depths(Lattice::box(1, 1), {1, 1, 1}, 0.5, 0);
    Configuration eta{{1, 0, 1}};
    const DualityReport r = verify_duality_two(ones, 0.0, eta, 0, 0, 0.5);
    CHECK(r.undefined);
  }
}

TEST_CASE("variance bound, exact") {
  SUBCASE("t = 0 makes both sides vanish") {
    const Environment env = Environment::with_depths(Lattice::box(1, 1), {2, 1, 2}, 0.5, 0);
    Configuration eta{{1, 1, 1}};
    const VarianceBoundReport r = verify_variance_bound(env, 0.0, eta, {0.2, -0.4, 1.0}, 2, 0.0);
    CHECK(std::abs(r.lhs) <= 1e-12);
    CHECK(std::abs(r.rhs) <= 1e-12);
    CHECK(r.pass);
  }
  SUBCASE("constant f: conservation kills both sides") {
    const Environment env = Environment::with_depths(Lattice::box(1, 1), {2, 1, 2}, 0.5, 0);
    Configuration eta{{2, 0, 1}};
    const VarianceBoundReport r =
        verify_variance_bound(env, 0.5, eta, {0.7, 0.7, 0.7}, 2, 0.9);
    CHECK(std::abs(r.lhs) <= 1e-10);
    CHECK(std::abs(r.rhs) <= 1e-10);
  }
  SUBCASE("generic f has strictly positive slack") {
    const Environment env = Environment::with_depths(Lattice::box(1, 1), {2, 1, 2}, 0.5, 0);
    Configuration eta{{1, 1, 1}};
    const VarianceBoundReport r =
        verify_variance_bound(env, 0.0, eta, {0.3, -1.1, 0.7}, 2, 0.5);
    CHECK(r.pass);
    CHECK(r.slack > 1e-6);
  }
  SUBCASE("randomized battery never violates the bound") {
    for (int i = 0; i < 60; ++i) {
      const BatteryCase c = draw_battery_case(0xbadbeef, i);
      std::vector<double> f(c.eta.counts.size());
      rng::Engine eng(rng::derive(0xf00, i));
      for (double& v : f) v = 2.0 * eng.u01() - 1.0;
      const VarianceBoundReport r =
          verify_variance_bound(c.env, c.a, c.eta, f, 2, c.t);
      CHECK(r.slack >= -1e-10);
    }
  }
}

TEST_CASE("semigroup property and algorithm agreement") {
  const BatteryCase c = draw_battery_case(2024, 7);
  const FullGenerator fg = build_full_generator(c.env, c.a);
  const double s = 0.6, t = 0.9;
  const Matrix est = expm_pade(fg.gen.dense(s + t));
  const Matrix split = expm_pade(fg.gen.dense(s)) * expm_pade(fg.gen.dense(t));
  CHECK(est.max_abs_diff(split) <= 1e-9);

  const Matrix uni = expm_uniformization(fg.gen.dense(1.0), s + t);
  CHECK(est.max_abs_diff(uni) <= 1e-11);
}

TEST_CASE("sixty-case battery passes at 1e-10") {
  const BatterySummary s = run_duality_battery(0x5eed, 60);
  CHECK(s.passed == 60);
  CHECK(s.worst_gap <= 1e-10);
}

TEST_SUITE_END();
