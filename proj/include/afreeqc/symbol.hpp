#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace afreeqc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// First-order constant-coefficient operator  u -> sum_i A^(i) d_i u  with
/// A^(i) in R^{d x m}, i = 1..n.
class OperatorA {
 public:
  OperatorA(std::string name, std::vector<Matrix> coeffs);

  int n() const { return static_cast<int>(coeffs_.size()); }
  int m() const { return static_cast<int>(coeffs_.front().cols()); }
  int d() const { return static_cast<int>(coeffs_.front().rows()); }
  const std::string& name() const { return name_; }
  const std::vector<Matrix>& coeffs() const { return coeffs_; }
  const Matrix& coeff(int i) const { return coeffs_.at(static_cast<std::size_t>(i)); }

  /// Operator expressed in the coordinates y = R^T x, i.e. x = R y. The new
  /// coefficients are  sum_i R_ij A^(i).
  OperatorA rotated(const Matrix& R) const;

 private:
  std::string name_;
  std::vector<Matrix> coeffs_;
};

struct RankReport {
  int rank = 0;
  int min_rank = 0;
  int max_rank = 0;
  std::size_t num_samples = 0;
  double tolerance = 0.0;
  Vector witness_direction;

  bool constant_rank() const { return min_rank == max_rank; }
};

inline constexpr double kRankTolerance = 1e-10;
inline constexpr std::size_t kDefaultRankSamples = 4096;

/// Symbol  sum_i w_i A^(i)  at a unit direction. Rejects zero and
/// non-finite input; callers normalize.
Matrix symbol_at(const OperatorA& op, std::span<const double> w);
Matrix symbol_at(const OperatorA& op, const Vector& w);

/// Same linear combination without the unit-length requirement.
Matrix symbol_unnormalized(const OperatorA& op, const Vector& w);

/// Numerical rank of a matrix: singular values with sigma_j / sigma_1 > tol.
int numerical_rank(const Matrix& a, double tol = kRankTolerance);

/// Deterministic sphere sample: the 2n coordinate directions, a Fibonacci
/// (n = 2: equispaced circle, n = 3: spiral) lattice, and seeded Gaussian
/// points, num_samples in total.
std::vector<Vector> sphere_samples(int n, std::size_t num_samples, std::uint64_t seed = 0x5eedULL);

RankReport check_constant_rank(const OperatorA& op,
                               std::size_t num_samples = kDefaultRankSamples,
                               double tol = kRankTolerance);

/// Orthogonal projector onto ker A(w): I - A(w)^+ A(w), with the
/// pseudoinverse truncated at `rank`. Throws ConstantRankViolation when the
/// numerical rank at w differs from `rank`.
Matrix kernel_projector(const OperatorA& op, const Vector& w, int rank,
                        double tol = kRankTolerance);

/// Convenience overload; determines the rank with check_constant_rank.
Matrix kernel_projector(const OperatorA& op, const Vector& w);

// Built-in catalog ----------------------------------------------------------

OperatorA make_div(int n);
OperatorA make_curl2d();
OperatorA make_curl3d();
OperatorA make_cauchy_riemann();
OperatorA make_hessian_curl();
/// Row-wise 2d curl on 2x2 matrix fields (m = 4, row-major F11 F12 F21 F22);
/// its kernel on the torus consists of gradients of R^2-valued maps.
OperatorA make_curl2d_rows();

/// Names accepted by operator_by_name: div (n = 2), div2, div3, curl2d,
/// curl3d, cauchy_riemann, hessian_curl, curl2d_rows.
std::vector<std::string> catalog_names();
OperatorA operator_by_name(const std::string& name);

/// Parses {"name":..., "n":..., "m":..., "d":..., "coeffs":[[row-major d*m], ...]}.
OperatorA operator_from_json(const std::string& text);
std::string operator_to_json(const OperatorA& op);

}  // namespace afreeqc
