#include "afreeqc/symbol.hpp"

#include "afreeqc/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace afreeqc {

OperatorA::OperatorA(std::string name, std::vector<Matrix> coeffs)
    : name_(std::move(name)), coeffs_(std::move(coeffs)) {
  if (coeffs_.empty()) throw InvalidArgument("operator needs at least one coefficient matrix");
  const auto rows = coeffs_.front().rows();
  const auto cols = coeffs_.front().cols();
  if (rows < 1 || cols < 1) throw InvalidArgument("operator coefficients must be non-empty");
  for (const auto& a : coeffs_) {
    if (a.rows() != rows || a.cols() != cols)
      throw InvalidArgument("operator coefficients must share one shape d x m");
    if (!a.allFinite()) throw InvalidArgument("operator coefficients must be finite");
  }
}

OperatorA OperatorA::rotated(const Matrix& R) const {
  if (R.rows() != n() || R.cols() != n()) throw InvalidArgument("rotation must be n x n");
  std::vector<Matrix> out(static_cast<std::size_t>(n()), Matrix::Zero(d(), m()));
  for (int j = 0; j < n(); ++j)
    for (int i = 0; i < n(); ++i) out[j] += R(i, j) * coeffs_[i];
  return OperatorA(name_, std::move(out));
}

Matrix symbol_unnormalized(const OperatorA& op, const Vector& w) {
  if (w.size() != op.n()) throw InvalidArgument("direction has wrong dimension");
  Matrix s = Matrix::Zero(op.d(), op.m());
  for (int i = 0; i < op.n(); ++i) s += w[i] * op.coeff(i);
  return s;
}

Matrix symbol_at(const OperatorA& op, const Vector& w) {
  if (!w.allFinite()) throw InvalidArgument("symbol direction must be finite");
  const double len = w.norm();
  if (len == 0.0) throw InvalidArgument("symbol direction must be nonzero");
  if (std::abs(len - 1.0) > 1e-10) throw InvalidArgument("symbol direction must have unit length");
  return symbol_unnormalized(op, w);
}

Matrix symbol_at(const OperatorA& op, std::span<const double> w) {
  Vector v(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) v[static_cast<Eigen::Index>(i)] = w[i];
  return symbol_at(op, v);
}

int numerical_rank(const Matrix& a, double tol) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  int r = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j)
    if (sv[j] / sv[0] > tol) ++r;
  return r;
}

std::vector<Vector> sphere_samples(int n, std::size_t num_samples, std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("dimension must be positive");
  std::vector<Vector> out;
  out.reserve(num_samples);
  for (int i = 0; i < n && out.size() < num_samples; ++i) {
    out.push_back(Vector::Unit(n, i));
    if (out.size() < num_samples) out.push_back(-Vector::Unit(n, i));
  }
  if (n == 1) return out;  // S^0 = {+1, -1}

  const std::size_t remaining = num_samples - out.size();
  const std::size_t lattice = (n <= 3) ? remaining - remaining / 4 : 0;
  constexpr double pi = std::numbers::pi;
  for (std::size_t k = 0; k < lattice; ++k) {
    Vector v(n);
    if (n == 2) {
      const double t = 2.0 * pi * (static_cast<double>(k) + 0.5) / static_cast<double>(lattice);
      v << std::cos(t), std::sin(t);
    } else {
      const double golden = pi * (3.0 - std::sqrt(5.0));
      const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(lattice);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double t = golden * static_cast<double>(k);
      v << r * std::cos(t), r * std::sin(t), z;
    }
    out.push_back(v);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  while (out.size() < num_samples) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
    const double len = v.norm();
    if (len < 1e-8) continue;
    out.push_back(v / len);
  }
  return out;
}

RankReport check_constant_rank(const OperatorA& op, std::size_t num_samples, double tol) {
  if (num_samples < static_cast<std::size_t>(2 * op.n()))
    throw InvalidArgument("check_constant_rank needs at least 2n samples");
  RankReport rep;
  rep.tolerance = tol;
  rep.num_samples = num_samples;
  rep.min_rank = std::numeric_limits<int>::max();
  rep.max_rank = -1;
  for (const auto& w : sphere_samples(op.n(), num_samples)) {
    const int r = numerical_rank(symbol_unnormalized(op, w), tol);
    if (r < rep.min_rank) {
      rep.min_rank = r;
      rep.witness_direction = w;
    }
    rep.max_rank = std::max(rep.max_rank, r);
  }
  rep.rank = rep.max_rank;
  return rep;
}

Matrix kernel_projector(const OperatorA& op, const Vector& w, int rank, double tol) {
  const Matrix a = symbol_at(op, w);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int r = 0;
  if (sv.size() > 0 && sv[0] > 0.0)
    for (Eigen::Index j = 0; j < sv.size(); ++j)
      if (sv[j] / sv[0] > tol) ++r;
  if (r != rank)
    throw ConstantRankViolation("symbol rank " + std::to_string(r) + " differs from operator rank " +
                                std::to_string(rank));
  // built from the kernel basis, so a trivial kernel gives exact zeros
  const Matrix vk = svd.matrixV().rightCols(op.m() - r);
  Matrix p = vk * vk.transpose();
  return 0.5 * (p + p.transpose());
}

Matrix kernel_projector(const OperatorA& op, const Vector& w) {
  const RankReport rep = check_constant_rank(op);
  if (!rep.constant_rank())
    throw ConstantRankViolation("operator " + op.name() + " does not have constant rank");
  return kernel_projector(op, w, rep.rank);
}

// Catalog ------------------------------------------------------------------

namespace {

Matrix rows(int d, int m, std::initializer_list<double> v) {
  Matrix a(d, m);
  auto it = v.begin();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = *it++;
  return a;
}

}  // namespace

OperatorA make_div(int n) {
  if (n < 1) throw InvalidArgument("div needs n >= 1");
  std::vector<Matrix> c;
  for (int i = 0; i < n; ++i) {
    Matrix a = Matrix::Zero(1, n);
    a(0, i) = 1.0;
    c.push_back(a);
  }
  return OperatorA(n == 2 ? "div" : "div" + std::to_string(n), std::move(c));
}

OperatorA make_curl2d() {
  // d1 u2 - d2 u1
  return OperatorA("curl2d", {rows(1, 2, {0, 1}), rows(1, 2, {-1, 0})});
}

OperatorA make_curl3d() {
  // A^(i) s = e_i x s
  std::vector<Matrix> c;
  c.push_back(rows(3, 3, {0, 0, 0, 0, 0, -1, 0, 1, 0}));
  c.push_back(rows(3, 3, {0, 0, 1, 0, 0, 0, -1, 0, 0}));
  c.push_back(rows(3, 3, {0, -1, 0, 1, 0, 0, 0, 0, 0}));
  return OperatorA("curl3d", std::move(c));
}

OperatorA make_cauchy_riemann() {
  // (d1 u1 - d2 u2, d2 u1 + d1 u2)
  return OperatorA("cauchy_riemann", {rows(2, 2, {1, 0, 0, 1}), rows(2, 2, {0, -1, 1, 0})});
}

OperatorA make_hessian_curl() {
  // components (w11, w12, w22):  (d2 w11 - d1 w12, d2 w12 - d1 w22)
  return OperatorA("hessian_curl", {rows(2, 3, {0, -1, 0, 0, 0, -1}), rows(2, 3, {1, 0, 0, 0, 1, 0})});
}

OperatorA make_curl2d_rows() {
  // rows (F11, F12), (F21, F22):  d1 F12 - d2 F11,  d1 F22 - d2 F21
  return OperatorA("curl2d_rows",
                   {rows(2, 4, {0, 1, 0, 0, 0, 0, 0, 1}), rows(2, 4, {-1, 0, 0, 0, 0, 0, -1, 0})});
}

std::vector<std::string> catalog_names() {
  return {"div", "div3", "curl2d", "curl3d", "cauchy_riemann", "hessian_curl", "curl2d_rows"};
}

OperatorA operator_by_name(const std::string& name) {
  if (name == "div" || name == "div2") return make_div(2);
  if (name.rfind("div", 0) == 0 && name.size() > 3) {
    const int n = std::stoi(name.substr(3));
    return make_div(n);
  }
  if (name == "curl2d") return make_curl2d();
  if (name == "curl3d") return make_curl3d();
  if (name == "cauchy_riemann" || name == "cr") return make_cauchy_riemann();
  if (name == "hessian_curl") return make_hessian_curl();
  if (name == "curl2d_rows") return make_curl2d_rows();
  throw InvalidArgument("unknown operator: " + name);
}

OperatorA operator_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("operator JSON: ") + e.what());
  }
  for (const auto& [key, _] : j.items())
    if (key != "name" && key != "n" && key != "m" && key != "d" && key != "coeffs")
      throw ConfigError("operator JSON: unknown key '" + key + "'");
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  const int d = j.at("d").get<int>();
  const auto& cs = j.at("coeffs");
  if (n < 1 || m < 1 || d < 1) throw ConfigError("operator JSON: n, m, d must be positive");
  if (!cs.is_array() || static_cast<int>(cs.size()) != n)
    throw ConfigError("operator JSON: expected n coefficient matrices");
  std::vector<Matrix> coeffs;
  for (const auto& c : cs) {
    if (!c.is_array() || static_cast<int>(c.size()) != d * m)
      throw ConfigError("operator JSON: each matrix must list d*m entries row-major");
    Matrix a(d, m);
    for (int r = 0; r < d; ++r)
      for (int s = 0; s < m; ++s) a(r, s) = c[static_cast<std::size_t>(r * m + s)].get<double>();
    coeffs.push_back(a);
  }
  return OperatorA(j.value("name", std::string("custom")), std::move(coeffs));
}

std::string operator_to_json(const OperatorA& op) {
  nlohmann::json j;
  j["name"] = op.name();
  j["n"] = op.n();
  j["m"] = op.m();
  j["d"] = op.d();
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& a : op.coeffs()) {
    nlohmann::json row = nlohmann::json::array();
    for (int r = 0; r < op.d(); ++r)
      for (int s = 0; s < op.m(); ++s) row.push_back(a(r, s));
    cs.push_back(row);
  }
  j["coeffs"] = cs;
  return j.dump();
}

}  // namespace afreeqc
