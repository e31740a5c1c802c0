#include "doctest.h"
#include "helpers.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/projection.hpp"
#include "afreeqc/sequences.hpp"

#include <cmath>

using namespace afreeqc;
using testutil::pi;

TEST_SUITE("sequences") {

TEST_CASE("smooth_cutoff") {
  CHECK(smooth_cutoff(0.2, 0.5, 1.0) == 1.0);
  CHECK(smooth_cutoff(0.5, 0.5, 1.0) == 1.0);
  CHECK(smooth_cutoff(1.0, 0.5, 1.0) == 0.0);
  CHECK(smooth_cutoff(0.75, 0.5, 1.0) == doctest::Approx(0.5));
  double prev = 1.0;
  for (double r = 0.5; r <= 1.0; r += 0.01) {
    const double e = smooth_cutoff(r, 0.5, 1.0);
    CHECK(e <= prev + 1e-15);
    prev = e;
  }
}

TEST_CASE("cr_mass_exact") {
  // rho = 1 + t; pi log(rho^2 / (rho^2 - 1))
  for (double t : {1e-6, 1e-2, 0.5, 3.0}) {
    const double ref = pi * (2.0 * std::log1p(t) - std::log(t) - std::log(2.0 + t));
    CHECK(cr_mass_exact(std::log(t)) == doctest::Approx(ref).epsilon(1e-12));
  }
  // tiny t keeps full precision through log1p
  CHECK(std::isfinite(cr_mass_exact(-600.0)));
  CHECK(cr_mass_exact(-600.0) > 0.0);
}

TEST_CASE("Cauchy-Riemann singular sequence") {
  const DiskSpec disk{};
  CrOptions o;
  o.grid = 64;
  double prev = 1e300;
  for (int k : {1, 4, 16, 64}) {
    CAPTURE(k);
    const auto u = cr_singular_sequence(disk, k, o);
    CHECK(u.mass == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(u.quadrature.lp_norm_p(2.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(u.log_distance == doctest::Approx(cr_log_distance_exact(k, 1.0)).epsilon(1e-6));
    CHECK(u.log_distance < prev);
    prev = u.log_distance;
    CHECK(u.quadrature.integrate(neg_norm_power(2, 2.0)) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(u.pole[0] >= 1.0);
    CHECK(u.boundary_point[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("CR sequence is holomorphic up to discretization") {
  // the grid samples are A-free to the order of the grid; refinement improves it
  const DiskSpec disk{};
  double prev = 1e300;
  for (int N : {32, 64, 128}) {
    CrOptions o;
    o.grid = N;
    const auto u = cr_singular_sequence(disk, 1, o);
    const GridSpec& g = u.field.grid();
    // interior residual of the centered difference A u
    const auto& v = u.field.values();
    const int n = g.points(0);
    double res = 0.0, cnt = 0.0;
    std::vector<double> x(2);
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) {
        // last axis fastest
        const std::size_t id = static_cast<std::size_t>(i) * n + j;
        g.node(id, x);
        if (std::hypot(x[0], x[1]) > 0.8) continue;
        auto at = [&](int di, int dj, int c) { return v[2 * (static_cast<std::size_t>(i + di) * n + (j + dj)) + c]; };
        const double h = g.h(0);
        const double d1u1 = (at(1, 0, 0) - at(-1, 0, 0)) / (2 * h), d2u2 = (at(0, 1, 1) - at(0, -1, 1)) / (2 * h);
        const double d2u1 = (at(0, 1, 0) - at(0, -1, 0)) / (2 * h), d1u2 = (at(1, 0, 1) - at(-1, 0, 1)) / (2 * h);
        res = std::max(res, std::abs(d1u1 - d2u2) + std::abs(d2u1 + d1u2));
        cnt += 1.0;
      }
    CHECK(cnt > 0.0);
    CHECK(res < prev);
    prev = res;
  }
}

TEST_CASE("dilation sequence invariances") {
  const auto base_grid = GridSpec::cube(2, 128, -1.0, 1.0);
  const std::vector<double> amp{1.0, 0.5};
  const auto base = base_bump(base_grid, amp);
  const auto target = GridSpec::cube(2, 256, -1.0, 1.0);
  const DomainSpec box = BoxDomain{{-1.0, -1.0}, {1.0, 1.0}};
  const auto mask = make_mask(target, box);
  const std::vector<double> x0{0.0, 0.0};
  const auto v = neg_norm_power(2, 2.0);
  const auto u1 = dilation_sequence(base, x0, 1, 2.0, target, mask, box);
  const double n1 = lp_norm(u1, 2.0), i1 = functional_eval(v, u1);
  for (int k : {2, 4}) {
    const auto uk = dilation_sequence(base, x0, k, 2.0, target, mask, box);
    CHECK(lp_norm(uk, 2.0) == doctest::Approx(n1).epsilon(2e-2));
    CHECK(functional_eval(v, uk) == doctest::Approx(i1).epsilon(4e-2));
  }
  const std::vector<double> far{3.0, 0.0};
  CHECK_THROWS_AS(dilation_sequence(base, far, 1, 2.0, target, mask, box), SupportError);
}

TEST_CASE("truncation decay") {
  const DiskSpec disk{};
  CrOptions o;
  o.grid = 64;
  const auto gen = cr_generator(disk, o);
  const CutoffSpec eta{{1.0, 0.0}, 0.5, 1.0};
  const std::vector<int> ks{1, 2, 4, 8};
  const auto t = truncation_decay(make_cauchy_riemann(), gen, eta, ks);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.decreasing);
  CHECK(t.rate < 0.0);
  CHECK(t.weakly_null);

  // a fixed field is not weakly null and its truncation does not decay
  const auto g = GridSpec::cube(2, 32, -1.0, 1.0);
  const auto u = DomainField::from_function(g, BallDomain{{0.0, 0.0}, 1.0}, 2, [](auto, std::span<double> out) {
    out[0] = 1.0;
    out[1] = 0.0;
  });
  const auto c = truncation_decay(make_cauchy_riemann(), constant_generator(u), CutoffSpec{{0.0, 0.0}, 0.5, 1.0}, ks);
  CHECK_FALSE(c.weakly_null);
  CHECK_FALSE(c.decreasing);
  for (const auto& r : c.rows) CHECK(r.neg_norm == doctest::Approx(c.rows[0].neg_norm).epsilon(1e-12));
}

TEST_CASE("boundary mass") {
  const DiskSpec disk{};
  CrOptions o;
  o.grid = 64;
  const std::vector<int> ks{1, 4, 16};
  const auto rows = boundary_mass(cr_generator(disk, o), ks, 2.0);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double s = 0.0;
    for (double h : rows[i].histogram) s += h;
    CHECK(s == doctest::Approx(rows[i].total).epsilon(1e-10));
    CHECK(rows[i].fraction >= 0.0);
    CHECK(rows[i].fraction <= 1.0);
    if (i > 0) CHECK(rows[i].fraction > rows[i - 1].fraction);
  }
  CHECK(rows.back().fraction > 0.5);
  CHECK_THROWS_AS(boundary_mass(cr_generator(disk, o), ks, 1.5), PreconditionError);
}

TEST_CASE("weak battery pairings decay") {
  const DiskSpec disk{};
  CrOptions o;
  o.grid = 64;
  const auto gen = cr_generator(disk, o);
  const auto bat = weak_battery(2, 2);
  REQUIRE(bat.size() == 10);
  std::vector<double> prev;
  for (int k : {1, 4, 16, 64}) {
    const auto p = battery_pairings(gen(k), bat);
    double mx = 0.0;
    for (double x : p) mx = std::max(mx, std::abs(x));
    if (!prev.empty()) {
      double pm = 0.0;
      for (double x : prev) pm = std::max(pm, std::abs(x));
      CHECK(mx <= 1.1 * pm);
    }
    prev = p;
  }
  double last = 0.0;
  for (double x : prev) last = std::max(last, std::abs(x));
  CHECK(last < 0.05);
}

TEST_CASE("Hessian example") {
  // a radial bump has zero half-box integral by symmetry
  const auto radial = HessianBump::radial_bump(8);
  CHECK(std::abs(hessian_half_integral_oracle(radial)) <= 1e-12 * std::pow(hessian_l2_norm(radial), 2));
  CHECK(hessian_demo(radial, std::vector<int>{1}, 128).sign == 0);

  const auto s = hessian_search(1);
  CHECK(s.found);
  CHECK(s.integral < -0.01);
  CHECK(hessian_l2_norm(s.bump) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(hessian_half_integral_oracle(s.bump) == doctest::Approx(s.integral).epsilon(1e-8));
  CHECK(hessian_search(1).integral == s.integral);

  CHECK(hessian_half_integral_spectral(s.bump, 1, 256) == doctest::Approx(s.integral).epsilon(1e-6));
  const std::vector<int> ks{1, 2, 4, 8};
  const auto rep = hessian_demo(s.bump, ks, 256);
  CHECK(rep.sign == -1);
  CHECK(rep.max_relative_spread <= 1e-6);
  CHECK(rep.oracle == doctest::Approx(s.integral).epsilon(1e-12));

  HessianBump slow = s.bump;
  slow.q = 1;
  CHECK_THROWS_AS(hessian_demo(slow, std::vector<int>{1}, 64), SupportError);
}

TEST_CASE("cofactor example") {
  const std::vector<int> ks{4, 8, 16, 32};
  CofactorSpec c;
  c.grid = 128;
  c.kind = CofactorSpec::Kind::Constant;
  const auto rc = cofactor_demo(c, ks);
  for (const auto& r : rc.rows) CHECK(r.gap == 0.0);
  CHECK(rc.rate == 0.0);

  c.kind = CofactorSpec::Kind::Perturbed;
  const auto rp = cofactor_demo(c, ks);
  for (std::size_t i = 1; i < rp.rows.size(); ++i) CHECK(rp.rows[i].gap < rp.rows[i - 1].gap);
  CHECK(rp.rate < -0.5);

  c.kind = CofactorSpec::Kind::Oscillating;
  const auto ro = cofactor_demo(c, ks);
  CHECK(ro.rate < -0.5);
  CHECK_THROWS_AS(cofactor_demo(CofactorSpec{{1.0, 0.5}, {}, CofactorSpec::Kind::Constant, {0.0, 0.0}, 64}, ks),
                  InvalidArgument);
}

TEST_CASE("sequence report columns") {
  const DiskSpec disk{};
  CrOptions o;
  o.grid = 64;
  const auto v = neg_norm_power(2, 2.0);
  const auto w = norm_power(2, 2.0);
  SequenceOptions so;
  const std::vector<int> ks{1, 2};
  auto rep = sequence_report("cr", cr_generator(disk, o), ks, {&v, &w}, so);
  const auto csv = rep.csv();
  const auto header = csv.substr(0, csv.find('\n'));
  CHECK(header.rfind("k,norm_lp,I,I_", 0) == 0);
  CHECK(header.find("pair_0") != std::string::npos);
  CHECK(header.find("neg_norm") == std::string::npos);
  CHECK(header.find("boundary_fraction") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(rep.rows[0].functionals[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(rep.rows[0].functionals[1] == doctest::Approx(1.0).epsilon(1e-6));

  so.op = make_cauchy_riemann();
  so.cutoff = CutoffSpec{{1.0, 0.0}, 0.5, 1.0};
  rep = sequence_report("cr", cr_generator(disk, o), ks, {&v}, so);
  CHECK(rep.csv().find("neg_norm") != std::string::npos);
  CHECK(rep.rows[0].neg_norm.has_value());
  CHECK(rep.sidecar().contains("rows"));
}

}  // TEST_SUITE
