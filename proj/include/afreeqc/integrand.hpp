#pragma once

#include "afreeqc/fields.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace afreeqc {

/// h(x, s) with growth |h(x,s)| <= C (1 + |s|^p).
class Integrand {
 public:
  using Eval = std::function<double(std::span<const double> x, std::span<const double> s)>;
  using Grad = std::function<void(std::span<const double> x, std::span<const double> s, std::span<double> out)>;

  Integrand(std::string name, int m, double p, double growth, Eval eval, Grad grad = {},
            std::optional<Eval> recession = std::nullopt, bool x_dependent = false);

  const std::string& name() const { return name_; }
  int m() const { return m_; }
  double p() const { return p_; }
  double growth() const { return growth_; }
  bool x_dependent() const { return x_dependent_; }
  bool has_analytic_gradient() const { return static_cast<bool>(grad_); }
  const std::optional<Eval>& recession() const { return recession_; }

  double operator()(std::span<const double> x, std::span<const double> s) const { return eval_(x, s); }
  /// Analytic gradient in s when supplied, else central differences with step
  /// 1e-6 * max(1, |s|).
  void gradient(std::span<const double> x, std::span<const double> s, std::span<double> out) const;

  /// Same integrand with x frozen at x0.
  Integrand frozen(std::vector<double> x0) const;

  /// Largest |h(x,s)| / (1 + |s|^p) over deterministic samples.
  double growth_ratio(int dim_x, std::size_t samples = 256) const;

 protected:
  std::string name_;
  int m_;
  double p_;
  double growth_;
  Eval eval_;
  Grad grad_;
  std::optional<Eval> recession_;
  bool x_dependent_;
};

/// Positively p-homogeneous in s. Construction spot-checks
/// v(x, t s) = t^p v(x, s) for t in {0.5, 2, 7} and v(x, 0) = 0.
class HomogeneousIntegrand : public Integrand {
 public:
  HomogeneousIntegrand(std::string name, int m, double p, Eval eval, Grad grad = {}, bool x_dependent = false,
                       int dim_x = 2);
  explicit HomogeneousIntegrand(const Integrand& h, int dim_x = 2);

  HomogeneousIntegrand frozen(std::vector<double> x0) const;
};

/// Largest relative homogeneity defect over deterministic samples.
double homogeneity_defect(const Integrand& v, int dim_x, std::size_t samples = 64);

// Catalog --------------------------------------------------------------------------

HomogeneousIntegrand norm_power(int m, double p);      ///< |s|^p
HomogeneousIntegrand neg_norm_power(int m, double p);  ///< -|s|^p
HomogeneousIntegrand det2_full();                      ///< F11 F22 - F12 F21 on m = 4
HomogeneousIntegrand det2_symmetric();                 ///< w11 w22 - w12^2 on m = 3
Integrand norm_sq_plus_norm(int m);                    ///< |s|^2 + |s|, recession |s|^2
/// a(x) . (Cof F) nu(x) with a(x) = a0 + a1 x (a1 row-major n x n) and
/// nu(x) = x; F is n x n row-major (m = n^2), n in {2, 3}.
Integrand cofactor_normal(int n, std::vector<double> a0, std::vector<double> a1);

/// Parses an arithmetic expression over s0..s{m-1} and x0..x{n-1}; grammar:
/// numbers, + - * /, unary -, parentheses, abs(e), pow(e, e), det2(a, b, c, d).
Integrand expression_integrand(const std::string& expr, int m, double p);

/// Catalog lookup. Names: norm_p, neg_norm_p, det2, det2_sym, norm2_plus_norm,
/// cofactor_normal, or "expr:<expression>". params is a JSON object (p, a0, a1).
Integrand integrand_by_name(const std::string& name, int m, const std::string& params_json = "{}");
HomogeneousIntegrand homogeneous_by_name(const std::string& name, int m, const std::string& params_json = "{}");

// Operations -----------------------------------------------------------------------

struct RecessionEstimate {
  double value = 0.0;
  std::vector<double> values;       ///< h(x, t s) / t^p along the schedule
  std::vector<double> differences;  ///< successive |values[i+1] - values[i]|
  bool converged = false;
};

RecessionEstimate recession_estimate(const Integrand& h, std::span<const double> x, std::span<const double> s,
                                     std::span<const double> t_schedule);

/// Quadrature of h(x, u(x)) over the grid (the mask, or `region` within it).
double functional_eval(const Integrand& h, const PeriodicField& u, const Mask* region = nullptr);
double functional_eval(const Integrand& h, const DomainField& u, const Mask* region = nullptr);
double functional_eval(const Integrand& h, const GridSpec& grid, int m, std::span<const double> values,
                       const Mask* region = nullptr);

struct NemytskiiRow {
  std::size_t k = 0;
  double lp_gap = 0.0;  ///< ||u_k - v_k||_{L^p}
  double l1_gap = 0.0;  ///< ||h(u_k) - h(v_k)||_{L^1}
};

/// Per-index L^1 gaps of h(., u_k) - h(., v_k) against the L^p gaps.
/// Throws PreconditionError when a member exceeds `bound` in L^p.
std::vector<NemytskiiRow> nemytskii_continuity_probe(const HomogeneousIntegrand& h,
                                                     std::span<const DomainField> u_seq,
                                                     std::span<const DomainField> v_seq, double bound = 1e6);

}  // namespace afreeqc
