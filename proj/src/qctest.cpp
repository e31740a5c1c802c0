#include "afreeqc/qctest.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/parallel.hpp"
#include "afreeqc/projection.hpp"
#include "afreeqc/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

namespace afreeqc {

using nlohmann::json;

// SearchConfig ------------------------------------------------------------------------

void SearchConfig::validate() const {
  if (grid < 8 || (grid & (grid - 1)) != 0) throw InvalidArgument("search grid must be a power of two >= 8");
  if (restarts < 1) throw InvalidArgument("restarts must be positive");
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be positive");
  if (!(initial_step > 0.0)) throw InvalidArgument("initial_step must be positive");
  if (!(margin > 0.0)) throw InvalidArgument("margin must be positive");
  if (penalty_stages < 1) throw InvalidArgument("penalty_stages must be positive");
  if (!(penalty_factor > 1.0)) throw InvalidArgument("penalty_factor must exceed 1");
  if (!(penalty_start > 0.0)) throw InvalidArgument("penalty_start must be positive");
}

json SearchConfig::to_json() const {
  return json{{"grid", grid},
              {"restarts", restarts},
              {"max_iterations", max_iterations},
              {"initial_step", initial_step},
              {"seed", seed},
              {"margin", margin},
              {"penalty_stages", penalty_stages},
              {"penalty_factor", penalty_factor},
              {"penalty_start", penalty_start}};
}

SearchConfig SearchConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("search config must be an object");
  SearchConfig c;
  for (const auto& [key, val] : j.items()) {
    if (key == "grid") c.grid = val.get<int>();
    else if (key == "restarts") c.restarts = val.get<int>();
    else if (key == "max_iterations") c.max_iterations = val.get<int>();
    else if (key == "initial_step") c.initial_step = val.get<double>();
    else if (key == "seed") c.seed = val.get<std::uint64_t>();
    else if (key == "margin") c.margin = val.get<double>();
    else if (key == "penalty_stages") c.penalty_stages = val.get<int>();
    else if (key == "penalty_factor") c.penalty_factor = val.get<double>();
    else if (key == "penalty_start") c.penalty_start = val.get<double>();
    else throw ConfigError("search config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string to_string(Verdict v) { return v == Verdict::Violation ? "violation" : "none_found"; }

// Certificate --------------------------------------------------------------------------

json Certificate::to_json() const {
  json j;
  j["tester"] = tester;
  j["status"] = to_string(status);
  j["flags"] = {{"marginal", marginal}, {"unbounded", unbounded}, {"infeasible", infeasible}, {"trivial", trivial}};
  j["operator"] = json::parse(op_json);
  j["integrand"] = integrand;
  j["objective"] = objective;
  j["reference"] = reference;
  j["constraints"] = constraints;
  j["parameters"] = parameters;
  j["s0"] = s0;
  j["normal"] = normal;
  j["search"] = config.to_json();
  j["trace"] = {{"iterations", iterations},
                {"restarts", config.restarts},
                {"seed", config.seed},
                {"best_restart", best_restart},
                {"objective_min", objective_min},
                {"objective_max", objective_max}};
  j["witness"] = witness_file.empty() ? json(nullptr) : json(witness_file);
  return j;
}

std::string Certificate::to_json_string() const { return to_json().dump(2) + "\n"; }

Certificate Certificate::from_json(const json& j) {
  Certificate c;
  try {
    c.tester = j.at("tester").get<std::string>();
    c.status = j.at("status").get<std::string>() == "violation" ? Verdict::Violation : Verdict::NoneFound;
    const auto& f = j.at("flags");
    c.marginal = f.at("marginal").get<bool>();
    c.unbounded = f.at("unbounded").get<bool>();
    c.infeasible = f.at("infeasible").get<bool>();
    c.trivial = f.at("trivial").get<bool>();
    c.op_json = j.at("operator").dump();
    c.integrand = j.at("integrand").get<std::string>();
    c.objective = j.at("objective").get<double>();
    c.reference = j.at("reference").get<double>();
    c.constraints = j.at("constraints").get<std::map<std::string, double>>();
    c.parameters = j.at("parameters").get<std::map<std::string, double>>();
    c.s0 = j.at("s0").get<std::vector<double>>();
    c.normal = j.at("normal").get<std::vector<double>>();
    c.config = SearchConfig::from_json(j.at("search"));
    const auto& t = j.at("trace");
    c.iterations = t.at("iterations").get<int>();
    c.best_restart = t.at("best_restart").get<int>();
    c.objective_min = t.at("objective_min").get<double>();
    c.objective_max = t.at("objective_max").get<double>();
    if (!j.at("witness").is_null()) c.witness_file = j.at("witness").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("certificate: ") + e.what());
  }
  return c;
}

// Geometry helpers ---------------------------------------------------------------------

Matrix frame_with_first_axis(std::span<const double> nu) {
  const auto n = static_cast<Eigen::Index>(nu.size());
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nu[static_cast<std::size_t>(i)];
  const double len = v.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw InvalidArgument("normal must be a nonzero finite vector");
  v /= len;
  // Householder reflection mapping e_1 to v.
  Vector e1 = Vector::Zero(n);
  e1[0] = 1.0;
  Vector w = e1 - v;
  Matrix R = Matrix::Identity(n, n);
  if (w.norm() > 1e-14) {
    w /= w.norm();
    R -= 2.0 * w * w.transpose();
  }
  return R;
}

namespace {

std::vector<double> unit_normal(std::span<const double> nu, int n) {
  if (static_cast<int>(nu.size()) != n) throw InvalidArgument("normal has wrong dimension");
  double len = 0.0;
  for (double v : nu) len += v * v;
  len = std::sqrt(len);
  if (!(len > 0.0) || !std::isfinite(len)) throw InvalidArgument("normal must be a nonzero finite vector");
  std::vector<double> out(nu.begin(), nu.end());
  for (auto& v : out) v /= len;
  return out;
}

bool same_coeffs(const OperatorA& a, const OperatorA& b) {
  if (a.n() != b.n() || a.m() != b.m() || a.d() != b.d()) return false;
  for (int i = 0; i < a.n(); ++i)
    if (a.coeff(i) != b.coeff(i)) return false;
  return true;
}

// Polynomial bump chi = (1 - |x-c|^2/a^2)^q with first and second derivatives.
struct BumpJet {
  double value = 0.0;
  double grad[3] = {0, 0, 0};
  double hess[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
};

BumpJet bump_jet(std::span<const double> x, std::span<const double> c, double a, int q) {
  BumpJet j;
  const std::size_t n = x.size();
  double t2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) t2 += (x[i] - c[i]) * (x[i] - c[i]);
  t2 /= a * a;
  if (t2 >= 1.0) return j;
  const double b = 1.0 - t2;
  j.value = std::pow(b, q);
  const double d1 = -2.0 * q * std::pow(b, q - 1) / (a * a);
  const double d2 = 4.0 * q * (q - 1) * std::pow(b, q - 2) / (a * a * a * a);
  for (std::size_t i = 0; i < n; ++i) {
    j.grad[i] = d1 * (x[i] - c[i]);
    for (std::size_t k = 0; k < n; ++k) j.hess[i][k] = d2 * (x[i] - c[i]) * (x[k] - c[k]) + (i == k ? d1 : 0.0);
  }
  return j;
}

}  // namespace

std::optional<std::vector<double>> afree_bump(const OperatorA& op, const GridSpec& grid, std::span<const double> center,
                                              double radius, const Matrix* R) {
  const int n = grid.n();
  if (op.n() != n) throw InvalidArgument("afree_bump: operator and grid dimensions differ");
  enum class Kind { None, Div2, Div3, Grad, Rows, Hessian } kind = Kind::None;
  if (n == 2 && same_coeffs(op, make_div(2))) kind = Kind::Div2;
  else if (n == 3 && same_coeffs(op, make_div(3))) kind = Kind::Div3;
  else if ((n == 2 && same_coeffs(op, make_curl2d())) || (n == 3 && same_coeffs(op, make_curl3d()))) kind = Kind::Grad;
  else if (n == 2 && same_coeffs(op, make_curl2d_rows())) kind = Kind::Rows;
  else if (n == 2 && same_coeffs(op, make_hessian_curl())) kind = Kind::Hessian;
  if (kind == Kind::None) return std::nullopt;

  const auto un = static_cast<std::size_t>(n);
  const auto m = static_cast<std::size_t>(op.m());
  std::vector<double> cx(un);
  if (R != nullptr) {
    for (std::size_t i = 0; i < un; ++i) {
      cx[i] = 0.0;
      for (std::size_t j = 0; j < un; ++j) cx[i] += (*R)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * center[j];
    }
  } else {
    cx.assign(center.begin(), center.end());
  }
  std::vector<double> out(grid.size() * m, 0.0), y(un), x(un);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    grid.node(idx, y);
    if (R != nullptr) {
      for (std::size_t i = 0; i < un; ++i) {
        x[i] = 0.0;
        for (std::size_t j = 0; j < un; ++j) x[i] += (*R)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * y[j];
      }
    } else {
      x = y;
    }
    const auto b = bump_jet(x, cx, radius, 6);
    double* o = out.data() + idx * m;
    switch (kind) {
      case Kind::Div2: o[0] = -b.grad[1]; o[1] = b.grad[0]; break;
      case Kind::Div3: o[0] = 0.0; o[1] = b.grad[2]; o[2] = -b.grad[1]; break;
      case Kind::Grad: for (std::size_t i = 0; i < un; ++i) o[i] = b.grad[i]; break;
      case Kind::Rows: o[0] = b.grad[0]; o[1] = b.grad[1]; o[2] = 0.5 * b.grad[0]; o[3] = 0.5 * b.grad[1]; break;
      case Kind::Hessian: o[0] = b.hess[0][0]; o[1] = b.hess[0][1]; o[2] = b.hess[1][1]; break;
      case Kind::None: break;
    }
  }
  return out;
}

namespace {

// Search problems -------------------------------------------------------------------------

// Objective and constraint are homogeneous of degree 0 when normalized() holds;
// gradients are taken in the cell-weighted inner product (nodal / h^n).
class Problem {
 public:
  virtual ~Problem() = default;
  virtual const GridSpec& grid() const = 0;
  virtual int m() const = 0;
  virtual double objective(const std::vector<double>& phi, std::vector<double>* grad) const = 0;
  virtual bool constrained() const { return false; }
  virtual double constraint_sq(const std::vector<double>&, std::vector<double>*) const { return 0.0; }
  virtual double bound_sq() const { return 0.0; }
  virtual void project(std::vector<double>& g) const = 0;
  virtual bool normalized() const { return true; }
  virtual double norm_sq(const std::vector<double>& phi) const = 0;
  virtual double threshold() const { return 0.0; }
  virtual std::map<std::string, double> diagnostics(const std::vector<double>& phi) const = 0;

  std::size_t size() const { return grid().size() * static_cast<std::size_t>(m()); }
  double cell() const { return grid().cell_volume(); }
  void normalize(std::vector<double>& phi) const {
    const double s = norm_sq(phi);
    if (s > 0.0) {
      const double f = 1.0 / std::sqrt(s);
      for (auto& v : phi) v *= f;
    }
  }
};

std::vector<std::vector<double>> eval_points(const GridSpec& grid, const Integrand& v, const BoundaryParams& p,
                                             const Matrix* R) {
  const auto n = static_cast<std::size_t>(grid.n());
  std::vector<double> x0 = p.x0.empty() ? std::vector<double>(n, 0.0) : p.x0;
  if (x0.size() != n) throw InvalidArgument("x0 has wrong dimension");
  std::vector<std::vector<double>> pts;
  if (!v.x_dependent() || p.freeze_x) {
    pts.assign(1, x0);
    return pts;
  }
  pts.resize(grid.size());
  std::vector<double> y(n);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, y);
    pts[i].resize(n);
    for (std::size_t a = 0; a < n; ++a) {
      double ya = y[a];
      if (R != nullptr) {
        ya = 0.0;
        for (std::size_t b = 0; b < n; ++b) ya += (*R)(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * y[b];
      }
      pts[i][a] = x0[a] + p.delta * ya;
    }
  }
  return pts;
}

const std::vector<double>& point_at(const std::vector<std::vector<double>>& pts, std::size_t i) {
  return pts.size() == 1 ? pts[0] : pts[i];
}

class StrongProblem final : public Problem {
 public:
  StrongProblem(const OperatorA& op, const Integrand& v, const BoundaryParams& p, int N)
      : op_(op), v_(v), eps_(p.eps), beta_(p.beta), grid_(GridSpec::cube(op.n(), N, -1.0, 1.0)) {
    const auto n = static_cast<std::size_t>(op.n());
    normal_ = unit_normal(p.normal, op.n());
    dom_ = HalfBallDomain{std::vector<double>(n, 0.0), 1.0, normal_};
    d_mask_ = make_mask(grid_, dom_);
    s_mask_ = mask_and(d_mask_, make_mask(grid_, BallDomain{std::vector<double>(n, 0.0), 0.5}));
    if (mask_count(s_mask_) == 0) throw ResolutionError("support region has no grid nodes; increase the grid");
    SolverOptions o;
    o.method = SolverOptions::Method::Automatic;
    domain_norm_ = std::make_unique<ConstraintNorm>(op, shared_domain_solver(grid_, d_mask_, o));
    full_norm_ = std::make_unique<ConstraintNorm>(op, shared_domain_solver(grid_, Mask(grid_.size(), 1), SolverOptions{}));
    pts_ = eval_points(grid_, v, p, nullptr);
  }

  const GridSpec& grid() const override { return grid_; }
  int m() const override { return op_.m(); }
  const Mask& domain_mask() const { return d_mask_; }
  const Mask& support_mask() const { return s_mask_; }
  const DomainSpec& domain() const { return dom_; }
  const std::vector<double>& normal() const { return normal_; }

  double norm_sq(const std::vector<double>& phi) const override {
    return lp_sq(phi);
  }

  double objective(const std::vector<double>& phi, std::vector<double>* grad) const override {
    const auto mm = static_cast<std::size_t>(m());
    double a = 0.0;
    std::vector<double> g(mm);
    if (grad != nullptr) grad->assign(phi.size(), 0.0);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!d_mask_[i]) continue;
      std::span<const double> s(phi.data() + i * mm, mm);
      const auto& x = point_at(pts_, i);
      double s2 = 0.0;
      for (double c : s) s2 += c * c;
      a += v_(x, s) + eps_ * s2;
      if (grad != nullptr) {
        v_.gradient(x, s, g);
        for (std::size_t c = 0; c < mm; ++c) (*grad)[i * mm + c] = g[c] + 2.0 * eps_ * s[c];
      }
    }
    a *= cell();
    const double b = lp_sq(phi);
    const double r = a / b;
    if (grad != nullptr)
      for (std::size_t k = 0; k < phi.size(); ++k) (*grad)[k] = ((*grad)[k] - r * 2.0 * masked(phi, k)) / b;
    return r;
  }

  bool constrained() const override { return true; }
  double bound_sq() const override { return beta_ * beta_; }

  double constraint_sq(const std::vector<double>& phi, std::vector<double>* grad) const override {
    const double c = domain_norm_->value_sq(phi, grad);
    const double b = lp_sq(phi);
    const double q = c / b;
    if (grad != nullptr)
      for (std::size_t k = 0; k < phi.size(); ++k) (*grad)[k] = ((*grad)[k] / cell() - q * 2.0 * masked(phi, k)) / b;
    return q;
  }

  void project(std::vector<double>& g) const override {
    const auto mm = static_cast<std::size_t>(m());
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (!s_mask_[i])
        for (std::size_t c = 0; c < mm; ++c) g[i * mm + c] = 0.0;
  }

  std::map<std::string, double> diagnostics(const std::vector<double>& phi) const override {
    const double b = lp_sq(phi);
    const double rd = std::sqrt(domain_norm_->value_sq(phi, nullptr) / b);
    const double rf = std::sqrt(full_norm_->value_sq(phi, nullptr) / b);
    return {{"ratio", rd}, {"ratio_full", rf}, {"norm", std::sqrt(b)}};
  }

 private:
  double masked(const std::vector<double>& phi, std::size_t k) const {
    return d_mask_[k / static_cast<std::size_t>(m())] ? phi[k] : 0.0;
  }
  double lp_sq(const std::vector<double>& phi) const {
    const auto mm = static_cast<std::size_t>(m());
    double s = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (d_mask_[i])
        for (std::size_t c = 0; c < mm; ++c) s += phi[i * mm + c] * phi[i * mm + c];
    return s * cell();
  }

  OperatorA op_;
  const Integrand& v_;
  double eps_, beta_;
  GridSpec grid_;
  std::vector<double> normal_;
  DomainSpec dom_;
  Mask d_mask_, s_mask_;
  std::unique_ptr<ConstraintNorm> domain_norm_, full_norm_;
  std::vector<std::vector<double>> pts_;
};

class PeriodicProblem final : public Problem {
 public:
  PeriodicProblem(const OperatorA& op, const Integrand& v, const BoundaryParams& p, int N)
      : base_(op), v_(v), eps_(p.eps), gamma_(p.gamma), grid_(GridSpec::unit_cube(op.n(), N)),
        R_(frame_with_first_axis(unit_normal(p.normal, op.n()))), op_(op.rotated(R_)), proj_(op_, grid_) {
    const auto n = static_cast<std::size_t>(grid_.n());
    minus_.resize(grid_.size());
    outer_.resize(grid_.size());
    std::vector<double> y(n);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      grid_.node(i, y);
      minus_[i] = y[0] < 0.0 ? 1 : 0;
      double mx = 0.0;
      for (double c : y) mx = std::max(mx, std::abs(c));
      outer_[i] = mx >= 0.25 ? 1 : 0;
    }
    pts_ = eval_points(grid_, v, p, &R_);
  }

  const GridSpec& grid() const override { return grid_; }
  int m() const override { return op_.m(); }
  const Matrix& frame() const { return R_; }
  const OperatorA& base_op() const { return base_; }
  const AfreeProjector& projector() const { return proj_; }

  double norm_sq(const std::vector<double>& phi) const override {
    double s = 0.0;
    for (double v : phi) s += v * v;
    return s * cell();
  }

  double objective(const std::vector<double>& phi, std::vector<double>* grad) const override {
    const auto mm = static_cast<std::size_t>(m());
    double a = 0.0;
    std::vector<double> g(mm);
    if (grad != nullptr) grad->assign(phi.size(), 0.0);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (!minus_[i]) continue;
      std::span<const double> s(phi.data() + i * mm, mm);
      const auto& x = point_at(pts_, i);
      double s2 = 0.0;
      for (double c : s) s2 += c * c;
      a += v_(x, s) + eps_ * s2;
      if (grad != nullptr) {
        v_.gradient(x, s, g);
        for (std::size_t c = 0; c < mm; ++c) (*grad)[i * mm + c] = g[c] + 2.0 * eps_ * s[c];
      }
    }
    a *= cell();
    const double b = norm_sq(phi);
    const double r = a / b;
    if (grad != nullptr)
      for (std::size_t k = 0; k < phi.size(); ++k) (*grad)[k] = ((*grad)[k] - r * 2.0 * phi[k]) / b;
    return r;
  }

  bool constrained() const override { return true; }
  double bound_sq() const override { return gamma_ * gamma_; }

  double constraint_sq(const std::vector<double>& phi, std::vector<double>* grad) const override {
    const auto mm = static_cast<std::size_t>(m());
    double o = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (outer_[i])
        for (std::size_t c = 0; c < mm; ++c) o += phi[i * mm + c] * phi[i * mm + c];
    o *= cell();
    const double b = norm_sq(phi);
    const double q = o / b;
    if (grad != nullptr) {
      grad->assign(phi.size(), 0.0);
      for (std::size_t k = 0; k < phi.size(); ++k)
        (*grad)[k] = ((outer_[k / mm] ? 2.0 * phi[k] : 0.0) - q * 2.0 * phi[k]) / b;
    }
    return q;
  }

  void project(std::vector<double>& g) const override {
    const auto mm = static_cast<std::size_t>(m());
    std::vector<double> mean(mm, 0.0);
    for (std::size_t i = 0; i < grid_.size(); ++i)
      for (std::size_t c = 0; c < mm; ++c) mean[c] += g[i * mm + c];
    for (auto& v : mean) v /= static_cast<double>(grid_.size());
    auto t = proj_.apply_values(g);
    for (std::size_t i = 0; i < grid_.size(); ++i)
      for (std::size_t c = 0; c < mm; ++c) g[i * mm + c] = mean[c] + t[i * mm + c];
  }

  std::map<std::string, double> diagnostics(const std::vector<double>& phi) const override {
    const double b = norm_sq(phi);
    const double q = constraint_sq(phi, nullptr);
    const auto spec = apply_A_spectral(op_, forward_transform(grid_, m(), phi));
    return {{"outer_mass_fraction", std::sqrt(q)},
            {"afree_residual", hminus1_norm_periodic(spec) / std::sqrt(b)},
            {"norm", std::sqrt(b)}};
  }

 private:
  OperatorA base_;
  const Integrand& v_;
  double eps_, gamma_;
  GridSpec grid_;
  Matrix R_;
  OperatorA op_;
  AfreeProjector proj_;
  Mask minus_, outer_;
  std::vector<std::vector<double>> pts_;
};

class AqcProblem final : public Problem {
 public:
  AqcProblem(const OperatorA& op, const Integrand& v, std::span<const double> s0, int N)
      : op_(op), v_(v), s0_(s0.begin(), s0.end()), grid_(GridSpec::unit_cube(op.n(), N)), proj_(op, grid_) {
    if (static_cast<int>(s0_.size()) != op.m()) throw InvalidArgument("s0 has wrong dimension");
    if (v.m() != op.m()) throw InvalidArgument("integrand and operator disagree on m");
    ref_ = v_(std::vector<double>(static_cast<std::size_t>(op.n()), 0.0), s0_);
  }

  const GridSpec& grid() const override { return grid_; }
  int m() const override { return op_.m(); }
  bool normalized() const override { return false; }
  double threshold() const override { return ref_; }
  const AfreeProjector& projector() const { return proj_; }

  double norm_sq(const std::vector<double>& phi) const override {
    double s = 0.0;
    for (double v : phi) s += v * v;
    return s * cell();
  }

  double objective(const std::vector<double>& phi, std::vector<double>* grad) const override {
    const auto mm = static_cast<std::size_t>(m());
    std::vector<double> s(mm), g(mm), x(static_cast<std::size_t>(grid_.n()));
    if (grad != nullptr) grad->assign(phi.size(), 0.0);
    double a = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      grid_.node(i, x);
      for (std::size_t c = 0; c < mm; ++c) s[c] = s0_[c] + phi[i * mm + c];
      a += v_(x, s);
      if (grad != nullptr) {
        v_.gradient(x, s, g);
        for (std::size_t c = 0; c < mm; ++c) (*grad)[i * mm + c] = g[c];
      }
    }
    return a * cell();
  }

  void project(std::vector<double>& g) const override { g = proj_.apply_values(g); }

  std::map<std::string, double> diagnostics(const std::vector<double>& phi) const override {
    const auto spec = apply_A_spectral(op_, forward_transform(grid_, m(), phi));
    const double b = std::sqrt(norm_sq(phi));
    const auto mm = static_cast<std::size_t>(m());
    double mean2 = 0.0;
    for (std::size_t c = 0; c < mm; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < grid_.size(); ++i) s += phi[i * mm + c];
      s /= static_cast<double>(grid_.size());
      mean2 += s * s;
    }
    return {{"afree_residual", hminus1_norm_periodic(spec)}, {"norm", b}, {"mean_norm", std::sqrt(mean2)}};
  }

 private:
  OperatorA op_;
  const Integrand& v_;
  std::vector<double> s0_;
  GridSpec grid_;
  AfreeProjector proj_;
  double ref_ = 0.0;
};

// Optimizer -----------------------------------------------------------------------------

struct RestartResult {
  bool any_feasible = false;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_phi;
  int iterations = 0;
  double omin = std::numeric_limits<double>::infinity();
  double omax = -std::numeric_limits<double>::infinity();
  bool unbounded = false;
  bool zero_start = false;
};

constexpr double kUnboundedLevel = -1e12;
constexpr double kPenaltyTarget = 0.81;  // penalize beyond (0.9 bound)^2

double weighted_dot(const Problem& P, const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * P.cell();
}

RestartResult run_restart(const Problem& P, std::vector<double> phi, const SearchConfig& cfg) {
  RestartResult res;
  P.project(phi);
  if (P.norm_sq(phi) <= 0.0) {
    res.zero_start = true;
    if (P.normalized()) return res;
  }
  if (P.normalized()) P.normalize(phi);

  const double target = kPenaltyTarget * P.bound_sq();
  std::vector<double> g_obj, g_con;
  auto penalized = [&](const std::vector<double>& x, double mu, std::vector<double>* grad, double* obj, double* q) {
    *obj = P.objective(x, grad != nullptr ? &g_obj : nullptr);
    double f = *obj;
    *q = 0.0;
    if (grad != nullptr) *grad = g_obj;
    if (P.constrained()) {
      *q = P.constraint_sq(x, grad != nullptr ? &g_con : nullptr);
      const double exc = std::max(0.0, *q - target);
      f += mu * exc * exc;
      if (grad != nullptr && exc > 0.0)
        for (std::size_t k = 0; k < x.size(); ++k) (*grad)[k] += 2.0 * mu * exc * g_con[k];
    }
    return f;
  };

  bool stop = false;
  auto record = [&](const std::vector<double>& x, double obj, double q) {
    if (!std::isfinite(obj)) return;
    if (obj < kUnboundedLevel && !P.normalized()) {
      res.unbounded = true;
      stop = true;
      return;
    }
    res.omin = std::min(res.omin, obj);
    res.omax = std::max(res.omax, obj);
    const bool feasible = !P.constrained() || q <= P.bound_sq();
    if (feasible) {
      res.any_feasible = true;
      if (obj < res.best) {
        res.best = obj;
        res.best_phi = x;
      }
      if (P.normalized() && obj < P.threshold() - cfg.margin) stop = true;
    }
  };

  double obj = 0.0, q = 0.0;
  std::vector<double> grad, trial;
  const int stages = P.constrained() ? cfg.penalty_stages : 1;
  double mu = cfg.penalty_start;
  {
    penalized(phi, mu, nullptr, &obj, &q);
    record(phi, obj, q);
  }
  for (int stage = 0; stage < stages && !stop; ++stage, mu *= cfg.penalty_factor) {
    double alpha = cfg.initial_step;
    for (int it = 0; it < cfg.max_iterations && !stop; ++it) {
      const double f = penalized(phi, mu, &grad, &obj, &q);
      P.project(grad);
      const double g2 = weighted_dot(P, grad, grad);
      if (!(g2 > 1e-24 * (1.0 + f * f))) break;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        trial = phi;
        for (std::size_t k = 0; k < trial.size(); ++k) trial[k] -= alpha * grad[k];
        if (P.normalized()) P.normalize(trial);
        double tobj = 0.0, tq = 0.0;
        const double ft = penalized(trial, mu, nullptr, &tobj, &tq);
        if (std::isfinite(ft) && ft <= f - 1e-4 * alpha * g2) {
          phi.swap(trial);
          record(phi, tobj, tq);
          accepted = true;
          alpha = std::min(alpha * 2.0, 1e12);
          break;
        }
        if (!std::isfinite(ft) && !P.normalized()) {
          res.unbounded = true;
          stop = true;
          break;
        }
        alpha *= 0.5;
      }
      ++res.iterations;
      if (!accepted) break;
    }
  }
  return res;
}

std::uint64_t restart_seed(std::uint64_t seed, std::size_t r) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), 0x51edu};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Random smooth periodic field with frequencies |xi_a| <= 3 on the grid's box.
std::vector<double> random_smooth(const GridSpec& grid, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  SpectralField s(grid, m);
  std::vector<int> j(static_cast<std::size_t>(grid.n()));
  for (int c = 0; c < m; ++c) {
    auto comp = s.component(c);
    for (std::size_t idx = 0; idx < grid.size(); ++idx) {
      grid.unravel(idx, j);
      bool low = true;
      for (int a = 0; a < grid.n(); ++a) low = low && std::abs(grid.frequency(a, j[static_cast<std::size_t>(a)])) <= 3;
      if (low) comp[idx] = Complex(g(rng), g(rng));
    }
  }
  // Hermitian symmetrization keeps the inverse transform real.
  auto vals = inverse_transform(s);
  return vals;
}

std::vector<double> random_bumps(const GridSpec& grid, int m, std::span<const double> center, double spread,
                                 std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-1.0, 1.0), rad(0.4, 1.0);
  const auto n = static_cast<std::size_t>(grid.n());
  const auto mm = static_cast<std::size_t>(m);
  std::vector<double> out(grid.size() * mm, 0.0), x(n);
  for (int b = 0; b < 3; ++b) {
    std::vector<double> c(n), amp(mm);
    for (std::size_t a = 0; a < n; ++a) c[a] = center[a] + 0.5 * spread * u(rng);
    const double r = spread * rad(rng);
    for (auto& v : amp) v = g(rng);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid.node(i, x);
      const double w = bump_jet(x, c, r, 3).value;
      if (w != 0.0)
        for (std::size_t k = 0; k < mm; ++k) out[i * mm + k] += w * amp[k];
    }
  }
  return out;
}

struct SearchOutcome {
  std::vector<RestartResult> restarts;
  std::size_t best = 0;
  bool any_feasible = false;
  bool unbounded = false;
  int iterations = 0;
  double omin = 0.0, omax = 0.0;
  bool all_zero_start = true;
};

SearchOutcome run_search(const Problem& P, const std::vector<std::vector<double>>& starts, const SearchConfig& cfg) {
  SearchOutcome out;
  out.restarts.resize(starts.size());
  parallel_for(starts.size(), [&](std::size_t r) { out.restarts[r] = run_restart(P, starts[r], cfg); });
  double best = std::numeric_limits<double>::infinity();
  double omin = std::numeric_limits<double>::infinity(), omax = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (std::size_t r = 0; r < out.restarts.size(); ++r) {
    const auto& rr = out.restarts[r];
    out.iterations += rr.iterations;
    out.all_zero_start = out.all_zero_start && rr.zero_start;
    omin = std::min(omin, rr.omin);
    omax = std::max(omax, rr.omax);
    if (rr.unbounded && !out.unbounded) {
      out.unbounded = true;
      out.best = r;
      have = true;
    }
    if (out.unbounded) continue;
    const double tie = std::isfinite(best) ? 1e-12 * std::max(1.0, std::abs(best)) : 0.0;
    if (rr.any_feasible && rr.best < best - tie) {
      best = rr.best;
      out.best = r;
      have = true;
    }
  }
  out.any_feasible = have;
  out.omin = std::isfinite(omin) ? omin : 0.0;
  out.omax = std::isfinite(omax) ? omax : 0.0;
  return out;
}

void finish_certificate(Certificate& cert, const Problem& P, const SearchOutcome& out, const SearchConfig& cfg,
                        std::optional<Mask> witness_mask) {
  cert.config = cfg;
  cert.iterations = out.iterations;
  cert.objective_min = out.omin;
  cert.objective_max = out.omax;
  cert.reference = P.threshold();
  cert.infeasible = !out.any_feasible;
  if (!out.any_feasible) {
    cert.status = Verdict::NoneFound;
    cert.objective = P.threshold();
    cert.best_restart = -1;
    return;
  }
  const auto& rr = out.restarts[out.best];
  cert.best_restart = static_cast<int>(out.best);
  std::vector<double> phi = rr.best_phi;
  if (phi.empty()) phi.assign(P.size(), 0.0);
  cert.unbounded = out.unbounded;
  cert.objective = P.objective(phi, nullptr);
  cert.constraints = P.diagnostics(phi);
  if (P.constrained()) cert.constraints["constraint_sq"] = P.constraint_sq(phi, nullptr);
  const bool violation = out.unbounded || cert.objective < P.threshold() - cfg.margin;
  cert.status = violation ? Verdict::Violation : Verdict::NoneFound;
  cert.marginal = !violation && std::abs(cert.objective - P.threshold()) <= cfg.margin;
  cert.witness = FieldData{P.grid(), P.m(), std::move(witness_mask), std::move(phi)};
}

std::string op_json_of(const OperatorA& op) { return operator_to_json(op); }

}  // namespace

// Testers -------------------------------------------------------------------------------

Certificate test_aqc(const OperatorA& op, const Integrand& v, std::span<const double> s0, const SearchConfig& cfg) {
  cfg.validate();
  AqcProblem P(op, v, s0, cfg.grid);
  std::vector<std::vector<double>> starts;
  for (int r = 0; r < cfg.restarts; ++r) {
    std::mt19937_64 rng(restart_seed(cfg.seed, static_cast<std::size_t>(r)));
    auto psi = random_smooth(P.grid(), op.m(), rng);
    auto t = P.projector().apply_values(psi);
    double s = 0.0;
    for (double x : t) s += x * x;
    s = std::sqrt(s * P.cell());
    double s0n = 0.0;
    for (double x : s0) s0n += x * x;
    const double scale = s > 0.0 ? 0.25 * (1.0 + std::sqrt(s0n)) * std::pow(2.0, -r) / s : 0.0;
    for (auto& x : t) x *= scale;
    starts.push_back(std::move(t));
  }
  auto out = run_search(P, starts, cfg);
  Certificate cert;
  cert.tester = "test_aqc";
  cert.op_json = op_json_of(op);
  cert.integrand = v.name();
  cert.s0.assign(s0.begin(), s0.end());
  cert.parameters = {{"margin", cfg.margin}};
  finish_certificate(cert, P, out, cfg, std::nullopt);
  cert.trivial = out.all_zero_start;
  return cert;
}

Certificate test_strong_aqcb(const OperatorA& op, const HomogeneousIntegrand& v, const BoundaryParams& params,
                             const SearchConfig& cfg) {
  cfg.validate();
  if (std::abs(v.p() - 2.0) > 1e-12) throw InvalidArgument("boundary testers require p = 2");
  if (!(params.eps > 0.0) || !(params.beta > 0.0)) throw InvalidArgument("eps and beta must be positive");
  if (v.m() != op.m()) throw InvalidArgument("integrand and operator disagree on m");
  StrongProblem P(op, v, params, cfg.grid);
  const auto n = static_cast<std::size_t>(op.n());
  const auto& nu = P.normal();
  const double h = P.grid().h(0);

  std::vector<std::vector<double>> structured;
  std::vector<double> c(n);
  for (std::size_t a = 0; a < n; ++a) c[a] = -0.25 * nu[a];
  if (auto b = afree_bump(op, P.grid(), c, 0.24)) structured.push_back(std::move(*b));
  if (op.n() == 2) {
    for (double mult : {2.0, 4.0, 8.0}) {
      const double del = mult * h;
      structured.push_back(
          truncated_singular_values(P.grid(), P.support_mask(), {del * nu[0], del * nu[1]}, 0.25, 0.5));
    }
  }
  std::vector<std::vector<double>> starts;
  for (int r = 0; r < cfg.restarts; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    if (ur < structured.size()) {
      starts.push_back(structured[ur]);
      continue;
    }
    std::mt19937_64 rng(restart_seed(cfg.seed, ur));
    if (r % 2 == 0) {
      starts.push_back(random_bumps(P.grid(), op.m(), c, 0.2, rng));
    } else {
      auto psi = random_smooth(P.grid(), op.m(), rng);
      AfreeProjector T(op, P.grid());
      auto t = T.apply_values(psi);
      const auto mm = static_cast<std::size_t>(op.m());
      std::vector<double> x(n);
      for (std::size_t i = 0; i < P.grid().size(); ++i) {
        P.grid().node(i, x);
        double rr = 0.0;
        for (double xa : x) rr += xa * xa;
        const double eta = smooth_cutoff(std::sqrt(rr), 0.25, 0.5);
        for (std::size_t k = 0; k < mm; ++k) t[i * mm + k] *= eta;
      }
      starts.push_back(std::move(t));
    }
  }
  auto out = run_search(P, starts, cfg);
  Certificate cert;
  cert.tester = "test_strong_aqcb";
  cert.op_json = op_json_of(op);
  cert.integrand = v.name();
  cert.normal = nu;
  cert.parameters = {{"eps", params.eps}, {"beta", params.beta}, {"margin", cfg.margin}, {"delta", params.delta},
                     {"freeze_x", params.freeze_x ? 1.0 : 0.0}};
  finish_certificate(cert, P, out, cfg, P.domain_mask());
  if (cert.witness) {
    const double rd = cert.constraints.at("ratio"), rf = cert.constraints.at("ratio_full");
    cert.constraints["nesting_ok"] = rd <= rf * (1.0 + 1e-9) + 1e-12 ? 1.0 : 0.0;
  }
  return cert;
}

Certificate test_aqcb_periodic(const OperatorA& op, const HomogeneousIntegrand& v, const BoundaryParams& params,
                               const SearchConfig& cfg) {
  cfg.validate();
  if (std::abs(v.p() - 2.0) > 1e-12) throw InvalidArgument("boundary testers require p = 2");
  if (!(params.eps > 0.0) || !(params.gamma > 0.0)) throw InvalidArgument("eps and gamma must be positive");
  if (v.m() != op.m()) throw InvalidArgument("integrand and operator disagree on m");
  PeriodicProblem P(op, v, params, cfg.grid);
  const auto n = static_cast<std::size_t>(op.n());
  const auto mm = static_cast<std::size_t>(op.m());

  std::vector<double> c(n, 0.0);
  c[0] = -0.125;
  std::vector<std::vector<double>> structured;
  if (auto b = afree_bump(op, P.grid(), c, 0.12, &P.frame())) structured.push_back(std::move(*b));

  std::vector<std::vector<double>> starts;
  for (int r = 0; r < cfg.restarts; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    if (ur < structured.size()) {
      starts.push_back(structured[ur]);
      continue;
    }
    std::mt19937_64 rng(restart_seed(cfg.seed, ur));
    auto f = random_bumps(P.grid(), op.m(), c, 0.12, rng);
    if (r % 2 == 1) {
      std::normal_distribution<double> g;
      for (std::size_t k = 0; k < mm; ++k) {
        const double cst = 0.3 * g(rng);
        for (std::size_t i = 0; i < P.grid().size(); ++i) f[i * mm + k] += cst;
      }
    }
    starts.push_back(std::move(f));
  }
  auto out = run_search(P, starts, cfg);

  // Admissible set reduced to constants when T vanishes; constants carry the
  // outer-mass fraction (1 - 2^-n)^{1/2}.
  std::mt19937_64 rng(restart_seed(cfg.seed, 0xffff));
  auto probe = random_smooth(P.grid(), op.m(), rng);
  auto tp = P.projector().apply_values(probe);
  double tn = 0.0, pn = 0.0;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    tn += tp[k] * tp[k];
    pn += probe[k] * probe[k];
  }
  const bool t_zero = tn <= 1e-24 * pn;
  const double const_fraction = std::sqrt(1.0 - std::pow(2.0, -static_cast<double>(n)));

  Certificate cert;
  cert.tester = "test_aqcb_periodic";
  cert.op_json = op_json_of(op);
  cert.integrand = v.name();
  cert.normal = unit_normal(params.normal, op.n());
  cert.parameters = {{"eps", params.eps}, {"gamma", params.gamma}, {"margin", cfg.margin}, {"delta", params.delta},
                     {"freeze_x", params.freeze_x ? 1.0 : 0.0}};
  finish_certificate(cert, P, out, cfg, std::nullopt);
  cert.trivial = t_zero && const_fraction > params.gamma;
  return cert;
}

GapReport qcb_gap_probe(const OperatorA& op, const HomogeneousIntegrand& v, const BoundaryParams& params,
                        const SearchConfig& cfg) {
  return GapReport{test_strong_aqcb(op, v, params, cfg), test_aqcb_periodic(op, v, params, cfg)};
}

// Re-validation ---------------------------------------------------------------------------

namespace {

BoundaryParams params_of(const Certificate& cert) {
  BoundaryParams p;
  p.normal = cert.normal;
  auto get = [&](const char* k, double d) {
    auto it = cert.parameters.find(k);
    return it == cert.parameters.end() ? d : it->second;
  };
  p.eps = get("eps", 0.5);
  p.beta = get("beta", 0.5);
  p.gamma = get("gamma", 0.5);
  p.delta = get("delta", 1.0);
  p.freeze_x = get("freeze_x", 1.0) != 0.0;
  return p;
}

}  // namespace

WitnessMetrics evaluate_witness(const Certificate& cert, const OperatorA& op, const Integrand& v,
                                const FieldData& field) {
  const int N = field.grid.points(0);
  std::unique_ptr<Problem> P;
  if (cert.tester == "test_aqc") P = std::make_unique<AqcProblem>(op, v, cert.s0, N);
  else if (cert.tester == "test_strong_aqcb") P = std::make_unique<StrongProblem>(op, v, params_of(cert), N);
  else if (cert.tester == "test_aqcb_periodic") P = std::make_unique<PeriodicProblem>(op, v, params_of(cert), N);
  else throw InvalidArgument("unknown tester '" + cert.tester + "'");
  if (!(P->grid() == field.grid) || P->m() != field.m) throw InvalidArgument("witness does not match the tester grid");
  WitnessMetrics w;
  w.objective = P->objective(field.values, nullptr);
  w.constraints = P->diagnostics(field.values);
  if (P->constrained()) {
    const double q = P->constraint_sq(field.values, nullptr);
    w.constraints["constraint_sq"] = q;
    w.feasible = q <= P->bound_sq();
  } else {
    w.feasible = true;
  }
  return w;
}

Revalidation revalidate(const Certificate& cert, const OperatorA& op, const Integrand& v) {
  Revalidation r;
  if (!cert.witness) {
    r.ok = cert.status == Verdict::NoneFound;
    r.detail = r.ok ? "no witness" : "violation without witness";
    return r;
  }
  const auto m = evaluate_witness(cert, op, v, *cert.witness);
  auto cmp = [&](const std::string& name, double recorded, double now) {
    const double err = std::abs(recorded - now) / std::max({std::abs(recorded), std::abs(now), 1e-300});
    const bool tiny = std::abs(recorded - now) <= 1e-14;
    const double e = tiny ? 0.0 : err;
    if (e > r.max_relative_error) {
      r.max_relative_error = e;
      r.detail = name;
    }
  };
  cmp("objective", cert.objective, m.objective);
  for (const auto& [k, val] : m.constraints) {
    auto it = cert.constraints.find(k);
    if (it != cert.constraints.end()) cmp(k, it->second, val);
  }
  const bool violation_holds = cert.unbounded || m.objective < cert.reference - cert.config.margin;
  r.ok = r.max_relative_error <= 1e-8 && (cert.status != Verdict::Violation || (violation_holds && m.feasible));
  if (r.ok && r.detail.empty()) r.detail = "exact";
  return r;
}

// Frozen-x probe ----------------------------------------------------------------------------

FrozenProbe frozen_x_probe(const OperatorA& op, const HomogeneousIntegrand& v, BoundaryParams params,
                           std::span<const double> deltas, const SearchConfig& cfg) {
  FrozenProbe probe;
  for (double d : deltas) {
    FrozenRow row;
    row.delta = d;
    params.delta = d;
    params.freeze_x = false;
    const auto full = test_strong_aqcb(op, v, params, cfg);
    params.freeze_x = true;
    const auto frozen = test_strong_aqcb(op, v, params, cfg);
    row.full = full.status;
    row.frozen = frozen.status;
    row.objective_full = full.objective;
    row.objective_frozen = frozen.objective;
    probe.rows.push_back(row);
  }
  std::vector<FrozenRow> sorted = probe.rows;
  std::sort(sorted.begin(), sorted.end(), [](const FrozenRow& a, const FrozenRow& b) { return a.delta < b.delta; });
  for (const auto& row : sorted) {
    if (row.full != row.frozen) break;
    probe.threshold = row.delta;
  }
  return probe;
}

}  // namespace afreeqc
