// Python bindings. Fields cross the boundary as C-ordered float64 arrays of
// shape (N_0, ..., N_{n-1}, m), which is the library's node-major layout.
#include "afreeqc/errors.hpp"
#include "afreeqc/experiment.hpp"
#include "afreeqc/fields.hpp"
#include "afreeqc/integrand.hpp"
#include "afreeqc/projection.hpp"
#include "afreeqc/qctest.hpp"
#include "afreeqc/sequences.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace afreeqc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

OperatorA to_op(const std::string& op) {
  return resolve_operator(!op.empty() && op.front() == '{' ? nlohmann::json::parse(op) : nlohmann::json(op));
}

PeriodicField to_field(const OperatorA& op, const Array& a, double lo, double hi) {
  const int n = op.n();
  if (a.ndim() != n + 1 || a.shape(n) != op.m())
    throw InvalidArgument("field array must have shape (N,)*n + (m,) for the operator");
  const auto N = static_cast<int>(a.shape(0));
  for (int i = 1; i < n; ++i)
    if (a.shape(i) != N) throw InvalidArgument("field array must use N points on every axis");
  std::vector<double> v(a.data(), a.data() + a.size());
  return PeriodicField(GridSpec::cube(n, N, lo, hi), op.m(), std::move(v));
}

Array to_array(const GridSpec& g, int m, std::span<const double> v) {
  std::vector<py::ssize_t> shape(g.points().begin(), g.points().end());
  shape.push_back(m);
  Array out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::object json_obj(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::tuple certificate(const Certificate& c) {
  py::object w = py::none();
  if (c.witness) w = to_array(c.witness->grid, c.witness->m, c.witness->values);
  return py::make_tuple(json_obj(c.to_json()), w);
}

SearchConfig search(int grid, int restarts, std::uint64_t seed) {
  SearchConfig s;
  s.grid = grid;
  s.restarts = restarts;
  s.seed = seed;
  return s;
}

BoundaryParams boundary(const OperatorA& op, std::vector<double> normal, double eps, double beta, double gamma) {
  BoundaryParams p;
  if (normal.empty()) {
    normal.assign(static_cast<std::size_t>(op.n()), 0.0);
    normal[0] = 1.0;
  }
  p.normal = std::move(normal);
  p.eps = eps;
  p.beta = beta;
  p.gamma = gamma;
  return p;
}

}  // namespace

PYBIND11_MODULE(_afreeqc, m) {
  m.doc() = "A-free projections, negative norms and quasiconvexity testers";

  // translators run newest first, so the base class goes in first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConstantRankViolation>(m, "ConstantRankViolation", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("operators", &catalog_names, "Catalog operator names.");
  m.def(
      "rank_check",
      [](const std::string& op) {
        const auto o = to_op(op);
        return json_obj(rank_report_json(o, check_constant_rank(o)));
      },
      py::arg("op"), "Constant-rank report as a dict.");
  m.def(
      "symbol",
      [](const std::string& op, std::vector<double> w) {
        const Matrix s = symbol_at(to_op(op), std::span<const double>(w));
        py::array_t<double> out({s.rows(), s.cols()});
        auto r = out.mutable_unchecked<2>();
        for (Eigen::Index i = 0; i < s.rows(); ++i)
          for (Eigen::Index j = 0; j < s.cols(); ++j) r(i, j) = s(i, j);
        return out;
      },
      py::arg("op"), py::arg("w"), "Symbol A(w) for a unit direction w.");

  m.def(
      "project",
      [](const std::string& op, const Array& u, double lo, double hi) {
        const auto o = to_op(op);
        const auto f = to_field(o, u, lo, hi);
        const AfreeProjector proj(o, f.grid());
        const auto tu = proj.apply(f);
        const auto rep = projection_report(proj, f);
        py::dict d;
        d["residual_afree"] = rep.residual_afree;
        d["idempotence_gap"] = rep.idempotence_gap;
        d["complement_norm"] = rep.complement_norm;
        d["constraint_norm"] = rep.constraint_norm;
        d["poincare_ratio"] = rep.poincare_ratio ? py::cast(*rep.poincare_ratio) : py::none();
        return py::make_tuple(to_array(tu.grid(), tu.m(), tu.values()), d);
      },
      py::arg("op"), py::arg("u"), py::arg("lo") = -0.5, py::arg("hi") = 0.5,
      "Projection onto periodic A-free fields; returns (Tu, report).");
  m.def(
      "hminus1_norm",
      [](const std::string& op, const Array& u, double lo, double hi) {
        const auto o = to_op(op);
        return hminus1_norm_periodic(apply_A_periodic(o, to_field(o, u, lo, hi)));
      },
      py::arg("op"), py::arg("u"), py::arg("lo") = -0.5, py::arg("hi") = 0.5, "||A u|| in the periodic H^-1 norm.");
  m.def(
      "functional",
      [](const std::string& integrand, const Array& u, const std::string& params, double lo, double hi) {
        if (u.ndim() < 2) throw InvalidArgument("field array needs a component axis");
        const int mm = static_cast<int>(u.shape(u.ndim() - 1));
        const int n = static_cast<int>(u.ndim()) - 1;
        const auto h = integrand_by_name(integrand, mm, params);
        std::vector<double> v(u.data(), u.data() + u.size());
        return functional_eval(h, PeriodicField(GridSpec::cube(n, static_cast<int>(u.shape(0)), lo, hi), mm, v));
      },
      py::arg("integrand"), py::arg("u"), py::arg("params") = "{}", py::arg("lo") = -0.5, py::arg("hi") = 0.5,
      "Integral of an integrand over a periodic field.");

  m.def(
      "test_aqc",
      [](const std::string& op, const std::string& integrand, std::vector<double> s0, const std::string& params,
         int grid, int restarts, std::uint64_t seed) {
        const auto o = to_op(op);
        const auto v = integrand_by_name(integrand, o.m(), params);
        if (s0.empty()) s0.assign(static_cast<std::size_t>(o.m()), 0.0);
        return certificate(test_aqc(o, v, s0, search(grid, restarts, seed)));
      },
      py::arg("op"), py::arg("integrand") = "neg_norm_p", py::arg("s0") = std::vector<double>{},
      py::arg("params") = "{}", py::arg("grid") = 32, py::arg("restarts") = 4, py::arg("seed") = 1,
      "Interior tester; returns (certificate dict, witness or None).");
  m.def(
      "test_strong_aqcb",
      [](const std::string& op, const std::string& integrand, std::vector<double> normal, double eps, double beta,
         int grid, int restarts, std::uint64_t seed) {
        const auto o = to_op(op);
        const auto v = homogeneous_by_name(integrand, o.m());
        return certificate(test_strong_aqcb(o, v, boundary(o, normal, eps, beta, 0.5), search(grid, restarts, seed)));
      },
      py::arg("op"), py::arg("integrand") = "neg_norm_p", py::arg("normal") = std::vector<double>{},
      py::arg("eps") = 0.5, py::arg("beta") = 0.5, py::arg("grid") = 32, py::arg("restarts") = 4, py::arg("seed") = 1,
      "Strong boundary tester on the half ball.");
  m.def(
      "test_aqcb",
      [](const std::string& op, const std::string& integrand, std::vector<double> normal, double eps, double gamma,
         int grid, int restarts, std::uint64_t seed) {
        const auto o = to_op(op);
        const auto v = homogeneous_by_name(integrand, o.m());
        return certificate(
            test_aqcb_periodic(o, v, boundary(o, normal, eps, 0.5, gamma), search(grid, restarts, seed)));
      },
      py::arg("op"), py::arg("integrand") = "neg_norm_p", py::arg("normal") = std::vector<double>{},
      py::arg("eps") = 0.5, py::arg("gamma") = 0.5, py::arg("grid") = 32, py::arg("restarts") = 4, py::arg("seed") = 1,
      "Periodic boundary tester.");
  m.def(
      "table5",
      [](int grid, std::uint64_t seed) { return json_obj(table5(search(grid, 4, seed)).to_json()); },
      py::arg("grid") = 32, py::arg("seed") = 1, "Boundary tester verdicts for div, cauchy_riemann, curl2d.");

  m.def(
      "cr_sequence",
      [](int k_max, int grid) {
        CrOptions o;
        o.grid = grid;
        std::vector<int> ks;
        for (int k = 1; k <= k_max; k *= 2) ks.push_back(k);
        const auto h = neg_norm_power(2, 2.0);
        const auto rep = sequence_report("cr", cr_generator(DiskSpec{}, o), ks, {&h}, SequenceOptions{});
        auto j = rep.sidecar();
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : rep.rows)
          rows.push_back({{"k", r.k},
                          {"norm_lp", r.lp_norm},
                          {"I", r.functionals.at(0)},
                          {"pairings", r.pairings},
                          {"boundary_fraction", r.boundary_fraction}});
        j["table"] = rows;
        return json_obj(j);
      },
      py::arg("k_max") = 64, py::arg("grid") = 512, "Diagnostics of the concentrating Cauchy-Riemann sequence.");
  m.def(
      "hessian_search",
      [](std::uint64_t seed) {
        const auto s = hessian_search(seed);
        py::dict d;
        d["integral"] = s.integral;
        d["trials"] = s.trials;
        d["found"] = s.found;
        d["coeffs"] = s.bump.coeffs;
        return d;
      },
      py::arg("seed") = 1, "Seeded search for a bump with negative half-box Hessian determinant integral.");

  m.def(
      "run",
      [](const std::string& config) {
        const auto res = run(ExperimentConfig::from_json_string(config));
        return py::make_tuple(res.exit_code, res.summary, res.files);
      },
      py::arg("config"), "Runs an experiment config (JSON text); returns (exit_code, summary, files).");
}
