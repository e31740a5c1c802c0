#include "afreeqc/integrand.hpp"

#include "afreeqc/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <memory>
#include <random>

namespace afreeqc {

namespace {

double norm2(std::span<const double> s) {
  double a = 0.0;
  for (double v : s) a += v * v;
  return a;
}

std::vector<double> unit_sample(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> g;
  std::vector<double> s(static_cast<std::size_t>(m));
  double r = 0.0;
  do {
    for (auto& v : s) v = g(rng);
    r = std::sqrt(norm2(s));
  } while (r < 1e-8);
  for (auto& v : s) v /= r;
  return s;
}

std::vector<double> box_sample(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

// Integrand -------------------------------------------------------------------------

Integrand::Integrand(std::string name, int m, double p, double growth, Eval eval, Grad grad,
                     std::optional<Eval> recession, bool x_dependent)
    : name_(std::move(name)), m_(m), p_(p), growth_(growth), eval_(std::move(eval)), grad_(std::move(grad)),
      recession_(std::move(recession)), x_dependent_(x_dependent) {
  if (m_ < 1) throw InvalidArgument("integrand needs m >= 1");
  if (!(p_ > 1.0) || !std::isfinite(p_)) throw InvalidArgument("integrand growth exponent must satisfy p > 1");
  if (!(growth_ > 0.0)) throw InvalidArgument("integrand growth constant must be positive");
  if (!eval_) throw InvalidArgument("integrand needs an evaluator");
}

void Integrand::gradient(std::span<const double> x, std::span<const double> s, std::span<double> out) const {
  if (grad_) {
    grad_(x, s, out);
    return;
  }
  const double step = 1e-6 * std::max(1.0, std::sqrt(norm2(s)));
  std::vector<double> t(s.begin(), s.end());
  for (std::size_t c = 0; c < t.size(); ++c) {
    const double s0 = t[c];
    t[c] = s0 + step;
    const double fp = eval_(x, t);
    t[c] = s0 - step;
    const double fm = eval_(x, t);
    t[c] = s0;
    out[c] = (fp - fm) / (2.0 * step);
  }
}

Integrand Integrand::frozen(std::vector<double> x0) const {
  auto e = eval_;
  auto x0p = std::make_shared<const std::vector<double>>(std::move(x0));
  Eval fe = [e, x0p](std::span<const double>, std::span<const double> s) { return e(*x0p, s); };
  Grad fg;
  if (grad_) {
    auto g = grad_;
    fg = [g, x0p](std::span<const double>, std::span<const double> s, std::span<double> out) { g(*x0p, s, out); };
  }
  std::optional<Eval> fr;
  if (recession_) {
    auto r = *recession_;
    fr = [r, x0p](std::span<const double>, std::span<const double> s) { return r(*x0p, s); };
  }
  return Integrand(name_, m_, p_, growth_, std::move(fe), std::move(fg), std::move(fr), false);
}

double Integrand::growth_ratio(int dim_x, std::size_t samples) const {
  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  std::exponential_distribution<double> radius(0.2);
  double worst = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    auto x = box_sample(rng, dim_x);
    auto s = unit_sample(rng, m_);
    const double r = radius(rng);
    for (auto& v : s) v *= r;
    worst = std::max(worst, std::abs(eval_(x, s)) / (1.0 + std::pow(r, p_)));
  }
  return worst;
}

// HomogeneousIntegrand --------------------------------------------------------------

double homogeneity_defect(const Integrand& v, int dim_x, std::size_t samples) {
  std::mt19937_64 rng(0x5eedULL);
  double worst = 0.0;
  const std::vector<double> zero(static_cast<std::size_t>(v.m()), 0.0);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto x = box_sample(rng, dim_x);
    const auto s = unit_sample(rng, v.m());
    worst = std::max(worst, std::abs(v(x, zero)));
    const double base = v(x, s);
    for (double t : {0.5, 2.0, 7.0}) {
      std::vector<double> ts(s);
      for (auto& c : ts) c *= t;
      const double tp = std::pow(t, v.p());
      const double err = std::abs(v(x, ts) - tp * base) / (tp * std::max(1.0, std::abs(base)));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

HomogeneousIntegrand::HomogeneousIntegrand(std::string name, int m, double p, Eval eval, Grad grad,
                                           bool x_dependent, int dim_x)
    : Integrand(std::move(name), m, p, 1.0, std::move(eval), std::move(grad), std::nullopt, x_dependent) {
  const double defect = homogeneity_defect(*this, dim_x);
  if (!(defect <= 1e-10))
    throw InvalidArgument("integrand '" + name_ + "' is not positively " + std::to_string(p) +
                          "-homogeneous (defect " + std::to_string(defect) + ")");
  growth_ = std::max(1.0, growth_ratio(dim_x));
  recession_ = eval_;
}

HomogeneousIntegrand::HomogeneousIntegrand(const Integrand& h, int dim_x)
    : HomogeneousIntegrand(h.name(), h.m(), h.p(),
                           [h](std::span<const double> x, std::span<const double> s) { return h(x, s); },
                           h.has_analytic_gradient()
                               ? Grad([h](std::span<const double> x, std::span<const double> s,
                                          std::span<double> out) { h.gradient(x, s, out); })
                               : Grad{},
                           h.x_dependent(), dim_x) {}

HomogeneousIntegrand HomogeneousIntegrand::frozen(std::vector<double> x0) const {
  const int dim_x = static_cast<int>(x0.size());
  return HomogeneousIntegrand(Integrand::frozen(std::move(x0)), dim_x);
}

// Catalog ---------------------------------------------------------------------------

HomogeneousIntegrand norm_power(int m, double p) {
  return HomogeneousIntegrand(
      "norm_p", m, p, [p](std::span<const double>, std::span<const double> s) { return std::pow(norm2(s), 0.5 * p); },
      [p](std::span<const double>, std::span<const double> s, std::span<double> out) {
        const double r2 = norm2(s);
        const double f = r2 > 0.0 ? p * std::pow(r2, 0.5 * p - 1.0) : 0.0;
        for (std::size_t c = 0; c < s.size(); ++c) out[c] = f * s[c];
      });
}

HomogeneousIntegrand neg_norm_power(int m, double p) {
  return HomogeneousIntegrand(
      "neg_norm_p", m, p,
      [p](std::span<const double>, std::span<const double> s) { return -std::pow(norm2(s), 0.5 * p); },
      [p](std::span<const double>, std::span<const double> s, std::span<double> out) {
        const double r2 = norm2(s);
        const double f = r2 > 0.0 ? -p * std::pow(r2, 0.5 * p - 1.0) : 0.0;
        for (std::size_t c = 0; c < s.size(); ++c) out[c] = f * s[c];
      });
}

HomogeneousIntegrand det2_full() {
  return HomogeneousIntegrand(
      "det2", 4, 2.0, [](std::span<const double>, std::span<const double> s) { return s[0] * s[3] - s[1] * s[2]; },
      [](std::span<const double>, std::span<const double> s, std::span<double> out) {
        out[0] = s[3];
        out[1] = -s[2];
        out[2] = -s[1];
        out[3] = s[0];
      });
}

HomogeneousIntegrand det2_symmetric() {
  return HomogeneousIntegrand(
      "det2_sym", 3, 2.0, [](std::span<const double>, std::span<const double> s) { return s[0] * s[2] - s[1] * s[1]; },
      [](std::span<const double>, std::span<const double> s, std::span<double> out) {
        out[0] = s[2];
        out[1] = -2.0 * s[1];
        out[2] = s[0];
      });
}

Integrand norm_sq_plus_norm(int m) {
  return Integrand(
      "norm2_plus_norm", m, 2.0, 2.0,
      [](std::span<const double>, std::span<const double> s) {
        const double r2 = norm2(s);
        return r2 + std::sqrt(r2);
      },
      [](std::span<const double>, std::span<const double> s, std::span<double> out) {
        const double r = std::sqrt(norm2(s));
        const double f = 2.0 + (r > 0.0 ? 1.0 / r : 0.0);
        for (std::size_t c = 0; c < s.size(); ++c) out[c] = f * s[c];
      },
      [](std::span<const double>, std::span<const double> s) { return norm2(s); });
}

namespace {

// Cofactor of a row-major n x n matrix, n in {2, 3}.
void cofactor(int n, std::span<const double> F, std::span<double> C) {
  if (n == 2) {
    C[0] = F[3];
    C[1] = -F[2];
    C[2] = -F[1];
    C[3] = F[0];
    return;
  }
  auto f = [&](int i, int j) { return F[static_cast<std::size_t>(3 * i + j)]; };
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3, j1 = (j + 1) % 3, j2 = (j + 2) % 3;
      C[static_cast<std::size_t>(3 * i + j)] = f(i1, j1) * f(i2, j2) - f(i1, j2) * f(i2, j1);
    }
}

}  // namespace

Integrand cofactor_normal(int n, std::vector<double> a0, std::vector<double> a1) {
  if (n != 2 && n != 3) throw InvalidArgument("cofactor_normal supports n = 2 or 3");
  const auto un = static_cast<std::size_t>(n);
  if (a0.empty()) a0.assign(un, 0.0);
  if (a1.empty()) a1.assign(un * un, 0.0);
  if (a0.size() != un || a1.size() != un * un) throw InvalidArgument("cofactor_normal: coefficient sizes");
  auto eval = [n, un, a0, a1](std::span<const double> x, std::span<const double> F) {
    std::vector<double> C(un * un);
    cofactor(n, F, C);
    double s = 0.0;
    for (std::size_t i = 0; i < un; ++i) {
      double ai = a0[i];
      for (std::size_t j = 0; j < un; ++j) ai += a1[i * un + j] * x[j];
      double cnu = 0.0;
      for (std::size_t j = 0; j < un; ++j) cnu += C[i * un + j] * x[j];
      s += ai * cnu;
    }
    return s;
  };
  double amax = 0.0;
  for (double v : a0) amax += std::abs(v);
  for (double v : a1) amax += std::abs(v);
  return Integrand("cofactor_normal", n * n, 2.0, std::max(1.0, 4.0 * amax), eval, {}, std::nullopt, true);
}

// Expression grammar ------------------------------------------------------------------

namespace {

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum Kind { Num, S, X, Neg, Add, Sub, Mul, Div, Abs, Pow, Det2 } kind;
  double value = 0.0;
  std::size_t index = 0;
  std::vector<NodePtr> args;

  double eval(std::span<const double> x, std::span<const double> s) const {
    switch (kind) {
      case Num: return value;
      case S: return s[index];
      case X: return index < x.size() ? x[index] : 0.0;
      case Neg: return -args[0]->eval(x, s);
      case Add: return args[0]->eval(x, s) + args[1]->eval(x, s);
      case Sub: return args[0]->eval(x, s) - args[1]->eval(x, s);
      case Mul: return args[0]->eval(x, s) * args[1]->eval(x, s);
      case Div: return args[0]->eval(x, s) / args[1]->eval(x, s);
      case Abs: return std::abs(args[0]->eval(x, s));
      case Pow: return std::pow(args[0]->eval(x, s), args[1]->eval(x, s));
      case Det2:
        return args[0]->eval(x, s) * args[3]->eval(x, s) - args[1]->eval(x, s) * args[2]->eval(x, s);
    }
    return 0.0;
  }
  bool uses_x() const {
    if (kind == X) return true;
    return std::any_of(args.begin(), args.end(), [](const NodePtr& a) { return a->uses_x(); });
  }
};

class Parser {
 public:
  Parser(const std::string& text, int m) : t_(text), m_(m) {}

  NodePtr parse() {
    auto e = expr();
    skip();
    if (pos_ != t_.size()) fail("unexpected character");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw InvalidArgument("expression: " + msg + " at offset " + std::to_string(pos_) + " in '" + t_ + "'");
  }
  void skip() {
    while (pos_ < t_.size() && std::isspace(static_cast<unsigned char>(t_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < t_.size() && t_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  static NodePtr make(Node::Kind k, std::vector<NodePtr> args = {}, double v = 0.0, std::size_t idx = 0) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->args = std::move(args);
    n->value = v;
    n->index = idx;
    return n;
  }
  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (eat('+')) lhs = make(Node::Add, {lhs, term()});
      else if (eat('-')) lhs = make(Node::Sub, {lhs, term()});
      else return lhs;
    }
  }
  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (eat('*')) lhs = make(Node::Mul, {lhs, unary()});
      else if (eat('/')) lhs = make(Node::Div, {lhs, unary()});
      else return lhs;
    }
  }
  NodePtr unary() {
    if (eat('-')) return make(Node::Neg, {unary()});
    if (eat('+')) return unary();
    return primary();
  }
  std::vector<NodePtr> call_args(std::size_t count) {
    if (!eat('(')) fail("expected '('");
    std::vector<NodePtr> a;
    for (std::size_t i = 0; i < count; ++i) {
      if (i > 0 && !eat(',')) fail("expected ','");
      a.push_back(expr());
    }
    if (!eat(')')) fail("expected ')'");
    return a;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= t_.size()) fail("unexpected end");
    if (eat('(')) {
      auto e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    const char c = t_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(t_.substr(pos_), &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return make(Node::Num, {}, v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < t_.size() && std::isalnum(static_cast<unsigned char>(t_[pos_]))) ++pos_;
      const std::string id = t_.substr(start, pos_ - start);
      if (id == "abs") return make(Node::Abs, call_args(1));
      if (id == "pow") return make(Node::Pow, call_args(2));
      if (id == "det2") return make(Node::Det2, call_args(4));
      if ((id[0] == 's' || id[0] == 'x') && id.size() > 1 &&
          std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
        const auto idx = static_cast<std::size_t>(std::stoul(id.substr(1)));
        if (id[0] == 's') {
          if (idx >= static_cast<std::size_t>(m_)) fail("component " + id + " out of range");
          return make(Node::S, {}, 0.0, idx);
        }
        if (idx >= 3) fail("coordinate " + id + " out of range");
        return make(Node::X, {}, 0.0, idx);
      }
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    fail("unexpected character");
  }

  std::string t_;
  int m_;
  std::size_t pos_ = 0;
};

}  // namespace

Integrand expression_integrand(const std::string& expr, int m, double p) {
  auto root = Parser(expr, m).parse();
  const bool xdep = root->uses_x();
  Integrand h("expr:" + expr, m, p, 1.0,
              [root](std::span<const double> x, std::span<const double> s) { return root->eval(x, s); }, {},
              std::nullopt, xdep);
  return Integrand("expr:" + expr, m, p, std::max(1.0, h.growth_ratio(3)), [root](std::span<const double> x,
                                                                                   std::span<const double> s) {
    return root->eval(x, s);
  }, {}, std::nullopt, xdep);
}

namespace {

std::vector<double> json_vec(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<double>>();
}

}  // namespace

Integrand integrand_by_name(const std::string& name, int m, const std::string& params_json) {
  nlohmann::json params;
  try {
    params = nlohmann::json::parse(params_json.empty() ? "{}" : params_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("integrand parameters: ") + e.what());
  }
  if (!params.is_object()) throw ConfigError("integrand parameters must be a JSON object");
  for (const auto& [key, _] : params.items())
    if (key != "p" && key != "a0" && key != "a1" && key != "n")
      throw ConfigError("integrand parameters: unknown key '" + key + "'");
  const double p = params.value("p", 2.0);
  if (name.rfind("expr:", 0) == 0) return expression_integrand(name.substr(5), m, p);
  if (name == "norm_p") return norm_power(m, p);
  if (name == "neg_norm_p") return neg_norm_power(m, p);
  if (name == "det2") return det2_full();
  if (name == "det2_sym") return det2_symmetric();
  if (name == "norm2_plus_norm") return norm_sq_plus_norm(m);
  if (name == "cofactor_normal") {
    const int n = params.value("n", 2);
    return cofactor_normal(n, json_vec(params, "a0"), json_vec(params, "a1"));
  }
  throw InvalidArgument("unknown integrand '" + name + "'");
}

HomogeneousIntegrand homogeneous_by_name(const std::string& name, int m, const std::string& params_json) {
  return HomogeneousIntegrand(integrand_by_name(name, m, params_json), 3);
}

// Operations -----------------------------------------------------------------------

RecessionEstimate recession_estimate(const Integrand& h, std::span<const double> x, std::span<const double> s,
                                     std::span<const double> t_schedule) {
  if (t_schedule.size() < 3) throw InvalidArgument("recession_estimate: need at least 3 scales");
  for (std::size_t i = 0; i < t_schedule.size(); ++i) {
    if (!(t_schedule[i] > 0.0)) throw InvalidArgument("recession_estimate: scales must be positive");
    if (i > 0 && !(t_schedule[i] > t_schedule[i - 1]))
      throw InvalidArgument("recession_estimate: scales must increase");
  }
  if (t_schedule.back() < 1e3) throw InvalidArgument("recession_estimate: largest scale must be >= 1e3");
  if (s.size() != static_cast<std::size_t>(h.m())) throw InvalidArgument("recession_estimate: s has wrong size");

  RecessionEstimate est;
  std::vector<double> ts(s.size());
  for (double t : t_schedule) {
    for (std::size_t c = 0; c < s.size(); ++c) ts[c] = t * s[c];
    const double tp = std::pow(t, h.p());
    const double v = h(x, ts);
    if (!std::isfinite(v) || !std::isfinite(tp)) throw ScaleLimitError("recession_estimate: overflow at t = " + std::to_string(t));
    est.values.push_back(v / tp);
  }
  for (std::size_t i = 1; i < est.values.size(); ++i) est.differences.push_back(std::abs(est.values[i] - est.values[i - 1]));
  est.value = est.values.back();
  est.converged = true;
  const double floor = 1e-13 * std::max(1.0, std::abs(est.value));
  for (std::size_t i = 1; i < est.differences.size(); ++i)
    if (est.differences[i] > floor && !(est.differences[i] < est.differences[i - 1])) est.converged = false;
  return est;
}

double functional_eval(const Integrand& h, const GridSpec& grid, int m, std::span<const double> values,
                       const Mask* region) {
  if (m != h.m()) throw InvalidArgument("functional_eval: integrand expects " + std::to_string(h.m()) + " components");
  if (values.size() != grid.size() * static_cast<std::size_t>(m)) throw InvalidArgument("functional_eval: value count");
  const auto mm = static_cast<std::size_t>(m);
  std::vector<double> x(static_cast<std::size_t>(grid.n()));
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (region != nullptr && !(*region)[i]) continue;
    grid.node(i, x);
    const double v = h(x, values.subspan(i * mm, mm));
    if (!std::isfinite(v)) throw InvalidArgument("functional_eval: non-finite integrand value");
    sum += v;
  }
  return sum * grid.cell_volume();
}

double functional_eval(const Integrand& h, const PeriodicField& u, const Mask* region) {
  if (region != nullptr && region->size() != u.grid().size()) throw InvalidArgument("functional_eval: region size");
  return functional_eval(h, u.grid(), u.m(), u.values(), region);
}

double functional_eval(const Integrand& h, const DomainField& u, const Mask* region) {
  if (region == nullptr) return functional_eval(h, u.grid(), u.m(), u.values(), &u.mask());
  if (region->size() != u.grid().size()) throw InvalidArgument("functional_eval: region size");
  for (std::size_t i = 0; i < region->size(); ++i)
    if ((*region)[i] && !u.mask()[i]) throw InvalidArgument("functional_eval: region is not contained in the mask");
  return functional_eval(h, u.grid(), u.m(), u.values(), region);
}

std::vector<NemytskiiRow> nemytskii_continuity_probe(const HomogeneousIntegrand& h,
                                                     std::span<const DomainField> u_seq,
                                                     std::span<const DomainField> v_seq, double bound) {
  if (u_seq.size() != v_seq.size()) throw InvalidArgument("nemytskii probe: sequences differ in length");
  std::vector<NemytskiiRow> rows;
  for (std::size_t k = 0; k < u_seq.size(); ++k) {
    const auto& u = u_seq[k];
    const auto& v = v_seq[k];
    if (!(u.grid() == v.grid()) || u.m() != v.m() || u.m() != h.m())
      throw InvalidArgument("nemytskii probe: shapes differ");
    const double nu = lp_norm(u, h.p()), nv = lp_norm(v, h.p());
    if (!(nu <= bound) || !(nv <= bound))
      throw PreconditionError("nemytskii probe: sequence member " + std::to_string(k) + " exceeds the L^p bound");
    const auto& grid = u.grid();
    const auto m = static_cast<std::size_t>(u.m());
    std::vector<double> x(static_cast<std::size_t>(grid.n())), diff(grid.size() * m);
    double l1 = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const bool in = u.mask()[i] || v.mask()[i];
      for (std::size_t c = 0; c < m; ++c) diff[i * m + c] = in ? u.at(i)[c] - v.at(i)[c] : 0.0;
      if (!in) continue;
      grid.node(i, x);
      l1 += std::abs(h(x, u.at(i)) - h(x, v.at(i)));
    }
    NemytskiiRow row;
    row.k = k;
    row.l1_gap = l1 * grid.cell_volume();
    row.lp_gap = lp_norm(grid, u.m(), diff, h.p());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace afreeqc
