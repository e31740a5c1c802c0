#include "doctest.h"
#include "helpers.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/projection.hpp"

using namespace afreeqc;
using testutil::pi;

namespace {

PeriodicField ops_field(const OperatorA& op, int N, std::uint64_t seed) {
  return testutil::random_field(op.n(), op.m(), N, seed, op.n() == 3 ? 3 : 4);
}

}  // namespace

TEST_SUITE("projection") {

TEST_CASE("div: Leray coefficients") {
  const auto u = testutil::random_field(2, 2, 32, 1);
  const auto tu = project_afree(make_div(2), u);
  const auto& su = u.spectrum();
  const auto& st = tu.spectrum();
  std::vector<double> k(2);
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < u.grid().size(); ++i) {
    su.wavevector(i, k);
    const double k2 = k[0] * k[0] + k[1] * k[1];
    Complex e0 = 0.0, e1 = 0.0;
    if (k2 > 0.0 && !su.nyquist(i)) {
      const Complex dot = (k[0] * su.component(0)[i] + k[1] * su.component(1)[i]) / k2;
      e0 = su.component(0)[i] - k[0] * dot;
      e1 = su.component(1)[i] - k[1] * dot;
    }
    err = std::max({err, std::abs(st.component(0)[i] - e0), std::abs(st.component(1)[i] - e1)});
    ref = std::max(ref, std::abs(su.component(0)[i]));
  }
  CHECK(err <= 1e-10 * ref);
}

TEST_CASE("cauchy_riemann projects to zero") {
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto tu = project_afree(make_cauchy_riemann(), testutil::random_field(2, 2, 32, s));
    for (double v : tu.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("curl2d recovers the gradient part") {
  const auto g = GridSpec::unit_cube(2, 64);
  // psi = sin(2 pi x) cos(4 pi y) + 0.3 cos(6 pi x + 2 pi y); sigma = rot of chi = cos(2 pi x + 4 pi y)
  auto grad_psi = [](std::span<const double> x, std::span<double> o) {
    o[0] = 2 * pi * std::cos(2 * pi * x[0]) * std::cos(4 * pi * x[1]) - 0.3 * 6 * pi * std::sin(6 * pi * x[0] + 2 * pi * x[1]);
    o[1] = -4 * pi * std::sin(2 * pi * x[0]) * std::sin(4 * pi * x[1]) - 0.3 * 2 * pi * std::sin(6 * pi * x[0] + 2 * pi * x[1]);
  };
  auto sigma = [](std::span<const double> x, std::span<double> o) {
    const double s = std::sin(2 * pi * x[0] + 4 * pi * x[1]);
    o[0] = 4 * pi * s;   // -d2 chi
    o[1] = -2 * pi * s;  // d1 chi
  };
  const auto gp = PeriodicField::from_function(g, 2, grad_psi);
  const auto u = PeriodicField::from_function(g, 2, [&](std::span<const double> x, std::span<double> o) {
    double a[2], b[2];
    grad_psi(x, a);
    sigma(x, b);
    o[0] = a[0] + b[0];
    o[1] = a[1] + b[1];
  });
  const auto tu = project_afree(make_curl2d(), u);
  CHECK(testutil::l2_diff(tu.values(), gp.values()) <= 1e-10 * testutil::l2(gp.values()));
}

TEST_CASE("projection_report on A-free fields") {
  const auto g = GridSpec::unit_cube(2, 32);
  const auto u = PeriodicField::from_function(g, 2, [](std::span<const double> x, std::span<double> o) {
    o[0] = -std::sin(2 * pi * x[0]) * std::cos(4 * pi * x[1]);
    o[1] = 0.5 * std::cos(2 * pi * x[0]) * std::sin(4 * pi * x[1]);
  });
  const auto rep = projection_report(make_div(2), u);
  CHECK_FALSE(rep.poincare_ratio.has_value());
  CHECK(rep.residual_afree <= 1e-12);
  const auto tu = project_afree(make_div(2), u);
  CHECK(testutil::l2_diff(tu.values(), u.values()) <= 1e-12 * testutil::l2(u.values()));
}

TEST_CASE("cauchy_riemann ratio equals the ellipticity quotient") {
  const auto op = make_cauchy_riemann();
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto u = testutil::random_field(2, 2, 32, s);
    const auto rep = projection_report(op, u);
    REQUIRE(rep.poincare_ratio.has_value());
    const double expect = lp_norm(u, 2.0) / hminus1_norm_periodic(apply_A_periodic(op, u));
    CHECK(*rep.poincare_ratio == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::isfinite(*rep.poincare_ratio));
    CHECK(rep.residual_afree == 0.0);
  }
}

TEST_CASE("projection invariants over the catalog") {
  for (const auto& name : catalog_names()) {
    const auto op = operator_by_name(name);
    const int N = op.n() == 3 ? 16 : 32;
    const AfreeProjector T(op, op.n() == 3 ? GridSpec::unit_cube(3, N) : GridSpec::unit_cube(2, N));
    CAPTURE(name);
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const auto u = ops_field(op, N, s);
      const auto v = ops_field(op, N, s + 100);
      const auto tu = T.apply(u);
      // A-freeness
      CHECK(hminus1_norm_periodic(apply_A_periodic(op, tu)) <= 1e-10 * lp_norm(tu, 2.0) + 1e-14);
      // idempotence
      const auto ttu = T.apply(tu);
      CHECK(testutil::l2_diff(ttu.values(), tu.values()) * std::sqrt(u.grid().cell_volume()) <=
            1e-12 * lp_norm(u, 2.0));
      // linearity
      std::vector<double> w(u.values().size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = 2.0 * u.values()[i] - 0.5 * v.values()[i];
      const auto tw = T.apply_values(w);
      const auto tv = T.apply(v);
      double err = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i)
        err = std::max(err, std::abs(tw[i] - (2.0 * tu.values()[i] - 0.5 * tv.values()[i])));
      CHECK(err <= 1e-12 * (1.0 + testutil::l2(w)));
      // L2 non-expansive, mean zero
      CHECK(lp_norm(tu, 2.0) <= lp_norm(u, 2.0) * (1.0 + 1e-14));
      for (double m : tu.mean()) CHECK(std::abs(m) <= 1e-14);
      const auto rep = projection_report(T, u);
      CHECK(rep.residual_afree >= 0.0);
      CHECK(rep.idempotence_gap <= 1e-12 * lp_norm(u, 2.0));
      CHECK(std::isfinite(rep.complement_norm));
    }
  }
}

TEST_CASE("constants are removed and Nyquist modes are dropped") {
  const auto g = GridSpec::unit_cube(2, 16);
  const auto u = PeriodicField::from_function(g, 2, [](std::span<const double> x, std::span<double> o) {
    o[0] = 3.0 + std::cos(16 * pi * x[0]);  // Nyquist along axis 0
    o[1] = -1.0;
  });
  const auto tu = project_afree(make_div(2), u);
  for (double v : tu.values()) CHECK(std::abs(v) <= 1e-14);
}

TEST_CASE("projector requires constant rank and matching shapes") {
  Matrix a1 = Matrix::Zero(1, 2);
  a1(0, 0) = 1.0;
  const OperatorA bad("degenerate", {a1, Matrix::Zero(1, 2)});
  CHECK_THROWS_AS(AfreeProjector(bad, GridSpec::unit_cube(2, 8)), ConstantRankViolation);
  CHECK_THROWS_AS(project_afree(make_curl3d(), testutil::random_field(2, 2, 8, 1)), InvalidArgument);
}

TEST_CASE("Poincare ratio is stable under refinement") {
  const auto op = make_div(2);
  double r[3] = {0, 0, 0};
  int idx = 0;
  for (int N : {32, 64, 128}) {
    for (std::uint64_t s = 1; s <= 10; ++s) {
      const auto rep = projection_report(op, testutil::random_field(2, 2, N, s));
      if (rep.poincare_ratio) r[idx] = std::max(r[idx], *rep.poincare_ratio);
    }
    ++idx;
  }
  CHECK(std::abs(r[1] - r[0]) <= 0.2 * r[0]);
  CHECK(std::abs(r[2] - r[1]) <= 0.2 * r[1]);
}

}  // TEST_SUITE
