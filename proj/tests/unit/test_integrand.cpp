#include "doctest.h"
#include "helpers.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/integrand.hpp"

using namespace afreeqc;
using testutil::pi;

TEST_SUITE("integrand") {

TEST_CASE("recession_estimate examples") {
  const std::vector<double> ts{10.0, 100.0, 1e3, 1e4};
  const std::vector<double> x{0.0, 0.0};
  const std::vector<double> s{0.6, 0.8};
  const auto h = norm_sq_plus_norm(2);
  const auto est = recession_estimate(h, x, s, ts);
  CHECK(est.value == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(est.converged);
  for (std::size_t i = 1; i < est.differences.size(); ++i) CHECK(est.differences[i] < est.differences[i - 1]);

  const std::vector<double> F{0.3, -0.5, 0.7, 0.2};
  const auto d = recession_estimate(det2_full(), x, F, ts);
  for (double v : d.values) CHECK(v == doctest::Approx(0.3 * 0.2 + 0.5 * 0.7).epsilon(1e-15));

  const auto n = recession_estimate(neg_norm_power(2, 2.0), x, s, ts);
  CHECK(n.value == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(n.converged);
}

TEST_CASE("recession_estimate matches analytic recession") {
  const auto h = norm_sq_plus_norm(3);
  const std::vector<double> x{0.1, 0.2};
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const auto w = testutil::random_unit(3, rng);
    std::vector<double> s(w.data(), w.data() + 3);
    const std::vector<double> ts{10.0, 1e2, 1e3, 1e4};
    const auto est = recession_estimate(h, x, s, ts);
    // f(ts)/t^2 = 1 + 1/t for unit s, so the error at t = 1e4 is 1e-4
    CHECK(std::abs(est.value - (*h.recession())(x, s)) <= 1.5e-4);
  }
}

TEST_CASE("recession_estimate preconditions") {
  const auto h = norm_power(1, 2.0);
  const std::vector<double> x{0.0};
  const std::vector<double> s{1.0};
  CHECK_THROWS_AS(recession_estimate(h, x, s, std::vector<double>{10.0, 1e3}), InvalidArgument);
  CHECK_THROWS_AS(recession_estimate(h, x, s, std::vector<double>{10.0, 100.0, 500.0}), InvalidArgument);
  CHECK_THROWS_AS(recession_estimate(h, x, s, std::vector<double>{100.0, 10.0, 1e3}), InvalidArgument);
  const auto big = norm_power(1, 30.0);
  CHECK_THROWS_AS(recession_estimate(big, x, s, std::vector<double>{10.0, 1e3, 1e20}), ScaleLimitError);
  const auto e = expression_integrand("s0*s0 + abs(s0)*x0", 1, 2.0);
  const auto est = recession_estimate(e, std::vector<double>{0.5}, s, std::vector<double>{10.0, 1e2, 1e3, 1e4});
  CHECK(est.value == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("homogeneity of catalog integrands") {
  std::vector<HomogeneousIntegrand> cat{norm_power(2, 2.0), neg_norm_power(3, 2.0), norm_power(2, 3.5), det2_full(),
                                        det2_symmetric()};
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (const auto& v : cat) {
    CAPTURE(v.name());
    std::vector<double> x{g(rng), g(rng)};
    CHECK(v(x, std::vector<double>(static_cast<std::size_t>(v.m()), 0.0)) == 0.0);
    for (int t = 0; t < 20; ++t) {
      const auto w = testutil::random_unit(v.m(), rng);
      std::vector<double> s(w.data(), w.data() + v.m());
      const double base = v(x, s);
      for (double tt : {0.5, 2.0, 7.0}) {
        std::vector<double> ts(s);
        for (auto& c : ts) c *= tt;
        CHECK(std::abs(v(x, ts) - std::pow(tt, v.p()) * base) <= 1e-10 * std::pow(tt, v.p()) * std::max(1.0, std::abs(base)));
      }
    }
    CHECK(homogeneity_defect(v, 2) <= 1e-10);
  }
}

TEST_CASE("non-homogeneous integrands are rejected") {
  CHECK_THROWS_AS(HomogeneousIntegrand(norm_sq_plus_norm(2)), InvalidArgument);
  CHECK_THROWS_AS(HomogeneousIntegrand(expression_integrand("s0*s0 + 1", 1, 2.0), 1), InvalidArgument);
  CHECK_NOTHROW(HomogeneousIntegrand(expression_integrand("det2(s0, s1, s2, s3)", 4, 2.0)));
  CHECK_THROWS_AS(Integrand("bad", 1, 1.0, 1.0, [](auto, auto) { return 0.0; }), InvalidArgument);
  CHECK_THROWS_AS(Integrand("bad", 0, 2.0, 1.0, [](auto, auto) { return 0.0; }), InvalidArgument);
}

TEST_CASE("gradients: analytic vs central differences") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  const auto e = expression_integrand("pow(abs(s0), 3) - s1*s2*x1", 3, 3.0);
  CHECK_FALSE(e.has_analytic_gradient());
  for (const auto& v : std::vector<Integrand>{norm_power(3, 2.0), neg_norm_power(3, 3.0), e}) {
    std::vector<double> x{g(rng), g(rng)};
    std::vector<double> s{g(rng), g(rng), g(rng)};
    std::vector<double> out(3);
    v.gradient(x, s, out);
    for (std::size_t c = 0; c < 3; ++c) {
      auto p = s, m = s;
      p[c] += 1e-6;
      m[c] -= 1e-6;
      CHECK(out[c] == doctest::Approx((v(x, p) - v(x, m)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("expression grammar") {
  const std::vector<double> x{0.5, -1.0};
  const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
  CHECK(expression_integrand("s0 + s1*s2 - s3/2", 4, 2.0)(x, s) == doctest::Approx(5.0));
  CHECK(expression_integrand("-(s0 - 3) * 2", 4, 2.0)(x, s) == doctest::Approx(4.0));
  CHECK(expression_integrand("pow(s1, 3) + abs(x1)", 4, 3.0)(x, s) == doctest::Approx(9.0));
  CHECK(expression_integrand("det2(s0, s1, s2, s3)", 4, 2.0)(x, s) == doctest::Approx(-2.0));
  CHECK(expression_integrand("1.5e1 * x0", 4, 2.0)(x, s) == doctest::Approx(7.5));
  CHECK(expression_integrand("x0*s0", 4, 2.0).x_dependent());
  CHECK_FALSE(expression_integrand("s0*s0", 4, 2.0).x_dependent());
  CHECK_THROWS_AS(expression_integrand("s0 +", 4, 2.0), InvalidArgument);
  CHECK_THROWS_AS(expression_integrand("s9", 4, 2.0), InvalidArgument);
  CHECK_THROWS_AS(expression_integrand("foo(s0)", 4, 2.0), InvalidArgument);
  CHECK_THROWS_AS(expression_integrand("(s0", 4, 2.0), InvalidArgument);
}

TEST_CASE("catalog lookup") {
  CHECK(integrand_by_name("neg_norm_p", 2).p() == 2.0);
  CHECK(integrand_by_name("norm_p", 2, R"({"p": 3})").p() == 3.0);
  CHECK(integrand_by_name("det2", 4).m() == 4);
  CHECK(integrand_by_name("det2_sym", 3).m() == 3);
  CHECK(integrand_by_name("expr:s0*s1", 2).name() == "expr:s0*s1");
  const auto cof = integrand_by_name("cofactor_normal", 4, R"({"a0":[1,0],"a1":[0,0,0,0]})");
  CHECK(cof.x_dependent());
  CHECK_THROWS_AS(integrand_by_name("nope", 2), InvalidArgument);
  CHECK_THROWS_AS(integrand_by_name("norm_p", 2, R"({"q": 3})"), ConfigError);
  CHECK_THROWS_AS(integrand_by_name("norm_p", 2, "[1]"), ConfigError);
  CHECK_THROWS_AS(integrand_by_name("norm_p", 2, "{"), ConfigError);
  CHECK_THROWS_AS(homogeneous_by_name("norm2_plus_norm", 2), InvalidArgument);
}

TEST_CASE("cofactor_normal evaluates a . (Cof F) x") {
  const auto h = cofactor_normal(2, {1.0, 0.5}, {0.3, -0.2, 0.1, 0.4});
  const std::vector<double> x{0.2, -0.6};
  const std::vector<double> F{1.0, 2.0, 3.0, 4.0};
  // Cof F = [[4, -3], [-2, 1]], a = a0 + a1 x
  const double a0 = 1.0 + 0.3 * 0.2 - 0.2 * -0.6, a1 = 0.5 + 0.1 * 0.2 + 0.4 * -0.6;
  const double c0 = 4 * 0.2 - 3 * -0.6, c1 = -2 * 0.2 + 1 * -0.6;
  CHECK(h(x, F) == doctest::Approx(a0 * c0 + a1 * c1).epsilon(1e-15));
  const auto h3 = cofactor_normal(3, {1, 0, 0}, {});
  const std::vector<double> I3{1, 0, 0, 0, 1, 0, 0, 0, 1};
  CHECK(h3(std::vector<double>{0.5, 0.1, 0.2}, I3) == doctest::Approx(0.5));
  CHECK(h.growth_ratio(2) <= h.growth());
  CHECK_THROWS_AS(cofactor_normal(4, {}, {}), InvalidArgument);
}

TEST_CASE("frozen integrands") {
  const auto h = expression_integrand("x0 * s0 * s0", 1, 2.0);
  const auto f = h.frozen({2.0});
  CHECK_FALSE(f.x_dependent());
  CHECK(f(std::vector<double>{-7.0}, std::vector<double>{3.0}) == doctest::Approx(18.0));
}

TEST_CASE("functional_eval examples") {
  const auto g = GridSpec::cube(2, 32, 0.0, 1.0);
  const DomainSpec box = BoxDomain{{0.0, 0.0}, {1.0, 1.0}};
  const auto e1 = DomainField::from_function(g, box, 2, [](auto, std::span<double> o) {
    o[0] = 1.0;
    o[1] = 0.0;
  });
  CHECK(functional_eval(norm_power(2, 2.0), e1) == doctest::Approx(1.0).epsilon(1e-14));

  // additivity over disjoint regions
  const auto u = DomainField::from_function(g, box, 2, [](std::span<const double> x, std::span<double> o) {
    o[0] = std::sin(3 * x[0]) + x[1];
    o[1] = std::exp(x[0] * x[1]);
  });
  Mask left(g.size(), 0), right(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) (g.node(i)[0] < 0.4 ? left : right)[i] = 1;
  const auto h = norm_sq_plus_norm(2);
  const double all = functional_eval(h, u), a = functional_eval(h, u, &left), b = functional_eval(h, u, &right);
  CHECK(std::abs(a + b - all) <= 1e-12 * std::abs(all));

  const auto pu = testutil::random_field(2, 2, 16, 3);
  CHECK(functional_eval(neg_norm_power(2, 2.0), pu) == doctest::Approx(-std::pow(lp_norm(pu, 2.0), 2)).epsilon(1e-13));

  const auto disk = DomainField::from_function(GridSpec::cube(2, 16, -1, 1), BallDomain{{0, 0}, 0.5}, 2,
                                               [](auto, std::span<double> o) { o[0] = o[1] = 1.0; });
  Mask outside(disk.grid().size(), 1);
  CHECK_THROWS_AS(functional_eval(h, disk, &outside), InvalidArgument);
  CHECK_THROWS_AS(functional_eval(det2_full(), disk), InvalidArgument);
}

TEST_CASE("dilation invariance of homogeneous functionals") {
  // u_k(x) = k u(k x) for n = 2, p = 2 on a fine grid: I(u_k) is constant
  auto base = [](double x, double y, double* o) {
    const double r2 = x * x + y * y;
    const double b = r2 < 1.0 ? std::pow(1.0 - r2, 4) : 0.0;
    o[0] = b;
    o[1] = 0.5 * b * x;
  };
  const auto g = GridSpec::cube(2, 256, -1.0, 1.0);
  const auto v = neg_norm_power(2, 2.0);
  double first = 0.0;
  for (int k : {1, 2, 4}) {
    const auto uk = PeriodicField::from_function(g, 2, [&](std::span<const double> x, std::span<double> o) {
      double b[2];
      base(k * x[0], k * x[1], b);
      o[0] = k * b[0];
      o[1] = k * b[1];
    });
    const double I = functional_eval(v, uk);
    if (k == 1) first = I;
    CHECK(I == doctest::Approx(first).epsilon(1e-6));
  }
}

TEST_CASE("nemytskii continuity probe") {
  const auto g = GridSpec::cube(2, 32, -1.0, 1.0);
  const DomainSpec disk = BallDomain{{0.0, 0.0}, 1.0};
  const auto h = neg_norm_power(2, 2.0);
  std::vector<DomainField> us, vs, same;
  for (int k = 1; k <= 16; k *= 2) {
    auto u = DomainField::from_function(g, disk, 2, [k](std::span<const double> x, std::span<double> o) {
      o[0] = std::sin(k * 3.0 * x[0]);
      o[1] = std::cos(k * 2.0 * x[1]);
    });
    auto v = DomainField::from_function(g, disk, 2, [k](std::span<const double> x, std::span<double> o) {
      const double bump = std::max(0.0, 1.0 - x[0] * x[0] - x[1] * x[1]);
      o[0] = std::sin(k * 3.0 * x[0]) + bump / k;
      o[1] = std::cos(k * 2.0 * x[1]);
    });
    us.push_back(u);
    vs.push_back(v);
  }
  const auto zero = nemytskii_continuity_probe(h, us, us);
  for (const auto& r : zero) {
    CHECK(r.l1_gap == 0.0);
    CHECK(r.lp_gap == 0.0);
  }
  const auto rows = nemytskii_continuity_probe(h, us, vs);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].lp_gap < rows[i - 1].lp_gap);
    CHECK(rows[i].l1_gap < rows[i - 1].l1_gap);
  }
  CHECK_THROWS_AS(nemytskii_continuity_probe(h, us, vs, 0.5), PreconditionError);
  CHECK_THROWS_AS(nemytskii_continuity_probe(h, std::span<const DomainField>(us).first(2), vs), InvalidArgument);
}

}  // TEST_SUITE
