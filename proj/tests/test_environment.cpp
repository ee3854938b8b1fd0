#include "doctest.h"

#include <cmath>
#include <set>

#include "traplab/environment.hpp"
#include "traplab/io.hpp"
#include "traplab/quadrature.hpp"
#include "traplab/rng.hpp"

#include "test_util.hpp"

using namespace traplab;

TEST_SUITE_BEGIN("environment");

TEST_CASE("sample_alpha evaluates the ceiling construction") {
  const TailLaw law{0.5, 1};
  CHECK(sample_alpha(law, 0.25) == 16);
  CHECK(sample_alpha(law, 0.999) == 2);
  CHECK_THROWS_AS(sample_alpha(law, 0.0), std::domain_error);
  CHECK_THROWS_AS(sample_alpha(law, 1.0), std::domain_error);
  CHECK_THROWS_AS(sample_alpha(law, -0.3), std::domain_error);
  rng::Engine eng(11);
  for (int i = 0; i < 2000; ++i) CHECK(sample_alpha(law, eng.u01()) >= 1);
}

// The exact tail of alpha = ceil(u^{-1/beta}) is P(alpha > m) = m^{-beta}:
// ceil(v) > m iff v > m iff u < m^{-beta}. A 10^6-sample Monte Carlo confirms
// the analytic oracle at m = 10.
TEST_CASE("tail oracle at m=10, beta=1/2") {
  const TailLaw law{0.5, 1};
  const double exact = alpha_tail_exact(law, 10);
  CHECK(exact == doctest::Approx(std::pow(10.0, -0.5)).epsilon(1e-14));
  const int n = 1'000'000;
  std::int64_t hits = 0;
  for (int i = 0; i < n; ++i)
    if (sample_alpha(law, rng::site_u01(0x7a11, static_cast<std::uint64_t>(i))) > 10) ++hits;
  const double p_hat = static_cast<double>(hits) / n;
  const double se = std::sqrt(exact * (1.0 - exact) / n);
  CHECK(testutil::zscore(p_hat, exact, se) <= 4.0);
}

TEST_CASE("empirical tails match the exact CDF for all betas") {
  const int n = 1'000'000;
  int stream = 0;
  for (double beta : {0.3, 0.5, 0.8}) {
    const TailLaw law{beta, 1};
    for (std::int64_t u : {std::int64_t{10}, std::int64_t{100}, std::int64_t{1000}}) {
      std::int64_t hits = 0;
      for (int i = 0; i < n; ++i)
        if (sample_alpha(law, rng::site_u01(0xbe7a + stream, static_cast<std::uint64_t>(i))) > u)
          ++hits;
      const double p = alpha_tail_exact(law, u);
      const double se = std::sqrt(p * (1.0 - p) / n);
      CHECK(testutil::zscore(static_cast<double>(hits) / n, p, se) <= 4.0);
      ++stream;
    }
  }
}

TEST_CASE("build_environment is reproducible and valid") {
  const TailLaw law{0.5, 1};
  const Environment a = build_environment(1, 2, law, 7);
  const Environment b = build_environment(1, 2, law, 7);
  CHECK(a.depth.size() == 5);
  CHECK(a.depth == b.depth);
  const Environment c = build_environment(1, 2, law, 8);
  CHECK(a.depth != c.depth);

  const Environment big = build_environment(2, 10, law, 99);
  CHECK(big.depth.size() == 441);
  for (std::int64_t v : big.depth) CHECK(v >= 1);
}

// E[alpha ^ 100] = sum_{m=0}^{99} P(alpha > m) = 1 + sum_{m=1}^{99} m^{-beta}
TEST_CASE("truncated moment matches the exact sum") {
  const TailLaw law{0.5, 1};
  double exact = 1.0;
  for (int m = 1; m <= 99; ++m) exact += std::pow(static_cast<double>(m), -0.5);
  testutil::Welford w;
  for (int i = 0; i < 1'000'000; ++i) {
    const std::int64_t a =
        sample_alpha(law, rng::site_u01(0x31415, static_cast<std::uint64_t>(i)));
    w.add(static_cast<double>(std::min(a, std::int64_t{100})));
  }
  CHECK(testutil::zscore(w.mean, exact, w.se()) <= 3.0);
}

TEST_CASE("rescaled_measure applies n^{-d/beta} weights at x/n") {
  const Environment env = Environment::with_depths(Lattice::box(1, 1), {1, 3, 1}, 0.5, 0);
  const PointMeasure m1 = rescaled_measure(env, 1);
  REQUIRE(m1.atoms.size() == 3);
  CHECK(m1.atoms[1].x[0] == 0.0);
  CHECK(m1.atoms[1].weight == doctest::Approx(3.0));

  const PointMeasure m2 = rescaled_measure(env, 2);
  CHECK(m2.atoms[1].weight == doctest::Approx(3.0 * std::pow(2.0, -2.0)));  // d/beta = 2
  CHECK(m2.atoms[0].x[0] == doctest::Approx(-0.5));

  // pair(W^n, f) * n^{d/beta} = sum_x alpha_x f(x/n), exactly
  const TestFunction f = TestFunction::cos2({0.1, 0, 0}, 0.8);
  double direct = 0.0;
  for (std::int64_t s = 0; s < env.n_sites(); ++s)
    direct += static_cast<double>(env.alpha(s)) * f(env.lattice.point_of(s, 2.0), 1);
  CHECK(pair(m2, f) * std::pow(2.0, 2.0) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("pair basics") {
  PointMeasure m;
  m.dim = 1;
  m.atoms.push_back({{0.0, 0, 0}, 2.0});
  const TestFunction tri = TestFunction::triangle({0, 0, 0}, 1.0);
  CHECK(pair(m, tri) == doctest::Approx(2.0));

  PointMeasure empty;
  empty.dim = 1;
  CHECK(pair(empty, tri) == 0.0);

  PointMeasure two;
  two.dim = 1;
  two.atoms.push_back({{0.5, 0, 0}, 1.0});
  two.atoms.push_back({{3.0, 0, 0}, 5.0});
  CHECK(pair(two, tri) == doctest::Approx(1.0 * tri({0.5, 0, 0}, 1)));
}

TEST_CASE("pair is linear and additive over atom subsets") {
  rng::Engine eng(5);
  PointMeasure m, ma, mb;
  m.dim = ma.dim = mb.dim = 1;
  for (int i = 0; i < 40; ++i) {
    Atom a{{4.0 * eng.u01() - 2.0, 0, 0}, eng.u01() + 0.1};
    m.atoms.push_back(a);
    (i % 2 == 0 ? ma : mb).atoms.push_back(a);
  }
  const TestFunction f1 = TestFunction::triangle({0, 0, 0}, 1.5, 0.7);
  const TestFunction f2 = TestFunction::cos2({0.3, 0, 0}, 1.0, 1.3);
  auto combo = [&](const Point& x, int d) { return 2.0 * f1(x, d) - 0.5 * f2(x, d); };
  CHECK(pair(m, combo) ==
        doctest::Approx(2.0 * pair(m, f1) - 0.5 * pair(m, f2)).epsilon(1e-12));
  CHECK(pair(m, f1) == doctest::Approx(pair(ma, f1) + pair(mb, f1)).epsilon(1e-12));
}

TEST_CASE("ppp: atom count, Campbell mean, monotone coupling") {
  // expected atom count eps^{-beta} (2L)^d = 20
  testutil::Welford count, mean_pair;
  const TestFunction tri = TestFunction::triangle({0, 0, 0}, 1.0);
  for (int r = 0; r < 10'000; ++r) {
    const PppSample s = sample_ppp_w(0.5, 1, 1.0, 0.01, rng::derive(42, r));
    count.add(static_cast<double>(s.measure.atoms.size()));
    mean_pair.add(pair(s.measure, tri));
  }
  CHECK(testutil::zscore(count.mean, 20.0, count.se()) <= 4.0);

  // Campbell: E<W_trunc|f> = int f dx * beta eps^{1-beta}/(1-beta); int tri = 1
  const double campbell = 1.0 * 0.5 / 0.5 * std::pow(0.01, 0.5);
  CHECK(testutil::zscore(mean_pair.mean, campbell, mean_pair.se()) <= 4.0);

  // decreasing eps with a fixed seed extends the atom sequence
  const PppSample s1 = sample_ppp_w(0.5, 1, 1.0, 0.01, 42);
  const PppSample s2 = sample_ppp_w(0.5, 1, 1.0, 0.0005, 42);
  REQUIRE(s2.measure.atoms.size() >= s1.measure.atoms.size());
  for (std::size_t i = 0; i < s1.measure.atoms.size(); ++i) {
    CHECK(s1.measure.atoms[i].weight == s2.measure.atoms[i].weight);
    CHECK(s1.measure.atoms[i].x == s2.measure.atoms[i].x);
  }
  CHECK(s2.bias_bound < s1.bias_bound);
}

// int_0^infty (1 - e^{-v a}) beta v^{-1-beta} dv = Gamma(1-beta) a^beta,
// checked by quadrature after substituting w = v^{-beta} (the integrand
// becomes 1 - exp(-a w^{-1/beta})); the tail beyond the quadrature window is
// added analytically from the two-term expansion of 1 - e^{-x}.
TEST_CASE("inner weight integral identity") {
  for (double beta : {0.3, 0.5, 0.8}) {
    for (double a : {0.5, 1.0, 2.0}) {
      const double w_max = std::pow(a / 1e-4, beta);  // a w^{-1/beta} = 1e-4 at the cut
      const double body = quad::adaptive_simpson(
          [&](double w) {
            return w <= 0.0 ? 1.0 : 1.0 - std::exp(-a * std::pow(w, -1.0 / beta));
          },
          0.0, w_max, 1e-12);
      const double tail1 =
          a * beta / (1.0 - beta) * std::pow(w_max, -(1.0 - beta) / beta);
      const double tail2 =
          -0.5 * a * a * beta / (2.0 - beta) * std::pow(w_max, -(2.0 - beta) / beta);
      const double numeric = body + tail1 + tail2;
      CHECK(numeric ==
            doctest::Approx(std::tgamma(1.0 - beta) * std::pow(a, beta)).epsilon(1e-7));
    }
  }
}

TEST_CASE("laplace functional: closed form and Monte Carlo cross-oracle") {
  const TestFunction zero = TestFunction::triangle({0, 0, 0}, 1.0, 0.0);
  CHECK(laplace_functional_w(zero, 1, 0.5) == doctest::Approx(1.0));

  // triangle bump: int f^beta dx = 2/(1+beta) * r for amplitude 1
  const TestFunction tri = TestFunction::triangle({0, 0, 0}, 1.0);
  const double lf = laplace_functional_w(tri, 1, 0.5);
  CHECK(lf == doctest::Approx(std::exp(-std::tgamma(0.5) * 4.0 / 3.0)).epsilon(1e-9));

  // Monte Carlo with eps = 1e-4: |difference| <= 4 SE + truncation bias
  testutil::Welford w;
  for (int r = 0; r < 10'000; ++r) {
    const PppSample s = sample_ppp_w(0.5, 1, 1.0, 1e-4, rng::derive(777, r));
    w.add(std::exp(-pair(s.measure, tri)));
  }
  const double bias = 2.0 * 1.0 * std::pow(1e-4, 0.5);  // vol * beta/(1-beta) * eps^{1-beta}
  CHECK(std::abs(w.mean - lf) <= 4.0 * w.se() + bias);
}

TEST_CASE("test functions are nonnegative bumps with compact support") {
  const TestFunction tri = TestFunction::triangle({0.5, 0, 0}, 2.0, 0.8);
  const TestFunction c2 = TestFunction::cos2({0, 0, 0}, 1.0);
  CHECK(tri({0.5, 0, 0}, 1) == doctest::Approx(0.8));
  CHECK(tri({2.5, 0, 0}, 1) == 0.0);
  CHECK(tri({2.499, 0, 0}, 1) > 0.0);
  CHECK(c2({1.0, 0, 0}, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c2({0, 0, 0}, 1) == doctest::Approx(1.0));
  rng::Engine eng(3);
  for (int i = 0; i < 1000; ++i) {
    const Point x = {6.0 * eng.u01() - 3.0, 0, 0};
    CHECK(tri(x, 1) >= 0.0);
    CHECK(c2(x, 1) >= 0.0);
  }
}

TEST_CASE("environment JSON round trip keeps canonical order") {
  const TailLaw law{0.4, 1};
  const Environment env = build_environment(2, 3, law, 1234);
  const auto j = io::environment_to_json(env);
  const Environment back = io::environment_from_json(j);
  CHECK(back.depth == env.depth);
  CHECK(back.beta == env.beta);
  CHECK(back.seed == env.seed);
  CHECK(back.d() == env.d());
  CHECK(back.lattice.box_half_width() == 3);
}

TEST_SUITE_END();
