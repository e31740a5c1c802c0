#pragma once

#include "afreeqc/fft.hpp"
#include "afreeqc/grid.hpp"
#include "afreeqc/symbol.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace afreeqc {

using fft::Complex;

/// Fourier coefficients of a grid function with `components` components,
/// stored component-major. Coefficients refer to physical coordinates:
///   c(xi) = (1/#nodes) sum_x u(x) exp(-2 pi i xi . x / L).
class SpectralField {
 public:
  SpectralField(GridSpec grid, int components);

  const GridSpec& grid() const { return grid_; }
  int components() const { return components_; }
  std::span<Complex> component(int c);
  std::span<const Complex> component(int c) const;

  /// Physical wavevector 2 pi xi / L of DFT index idx.
  void wavevector(std::size_t idx, std::span<double> k) const;
  /// True when any axis index sits at the Nyquist frequency.
  bool nyquist(std::size_t idx) const;

 private:
  GridSpec grid_;
  int components_;
  std::vector<Complex> coeffs_;
};

/// Node-major values (component fastest) -> spectrum.
SpectralField forward_transform(const GridSpec& grid, int components, std::span<const double> values);
/// Spectrum -> node-major real values (imaginary parts dropped).
std::vector<double> inverse_transform(const SpectralField& s);

using PointFunction = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Q-periodic field sampled on a full grid.
class PeriodicField {
 public:
  PeriodicField(GridSpec grid, int m, std::vector<double> values);
  static PeriodicField from_function(GridSpec grid, int m, const PointFunction& f);

  const GridSpec& grid() const { return grid_; }
  int m() const { return m_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> at(std::size_t node) const {
    return std::span<const double>(values_).subspan(node * static_cast<std::size_t>(m_), static_cast<std::size_t>(m_));
  }
  /// Cell average over the periodic box.
  std::vector<double> mean() const;
  /// Forward transform, computed once and shared between copies.
  const SpectralField& spectrum() const;

 private:
  struct Cache {
    std::once_flag once;
    std::unique_ptr<SpectralField> spectrum;
  };
  GridSpec grid_;
  int m_;
  std::vector<double> values_;
  std::shared_ptr<Cache> cache_;
};

/// Field on a masked bounded domain inside a bounding box; zero off the mask.
class DomainField {
 public:
  DomainField(GridSpec grid, Mask mask, int m, std::vector<double> values,
              DomainSpec domain = ExplicitMaskDomain{});
  static DomainField from_function(GridSpec grid, const DomainSpec& domain, int m, const PointFunction& f);
  static DomainField zeros(GridSpec grid, Mask mask, int m, DomainSpec domain = ExplicitMaskDomain{});

  const GridSpec& grid() const { return grid_; }
  const Mask& mask() const { return mask_; }
  int m() const { return m_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> at(std::size_t node) const {
    return std::span<const double>(values_).subspan(node * static_cast<std::size_t>(m_), static_cast<std::size_t>(m_));
  }
  const DomainSpec& domain() const { return domain_; }
  /// Same values viewed with a different domain mask (values off the new mask
  /// are dropped).
  DomainField with_mask(Mask mask, DomainSpec domain = ExplicitMaskDomain{}) const;
  double measure() const;

 private:
  GridSpec grid_;
  Mask mask_;
  int m_;
  std::vector<double> values_;
  DomainSpec domain_;
};

/// Midpoint-rule L^p norm over the grid nodes (the mask for domain fields).
double lp_norm(const PeriodicField& u, double p);
double lp_norm(const DomainField& u, double p);
double lp_norm(const GridSpec& grid, int m, std::span<const double> values, double p,
               const Mask* region = nullptr);

/// Fourier coefficients 2 pi i A(xi) u^(xi); Nyquist modes are set to zero.
SpectralField apply_A_periodic(const OperatorA& op, const PeriodicField& u);
SpectralField apply_A_spectral(const OperatorA& op, const SpectralField& u);

/// Dual norm of the full H^1 norm on the periodic box:
///   ( |box| sum |g^(xi)|^2 / (1 + 4 pi^2 |xi/L|^2) )^{1/2}.
double hminus1_norm_periodic(const SpectralField& g);

struct SolverOptions {
  enum class Method { ConjugateGradient, Cholesky, Automatic };
  Method method = Method::ConjugateGradient;
  double tolerance = 1e-10;
  int max_iterations = 20000;
  /// Automatic picks Cholesky up to this many unknowns.
  std::size_t dense_limit = 4000;
};

/// Dirichlet problem for the spectral operator (1 - Laplacian) restricted to
/// the nodes of a mask: test functions vanish off the mask, so the resulting
/// dual norm is the supremum of the periodic one over that subspace.
class DomainNormSolver {
 public:
  DomainNormSolver(GridSpec grid, Mask mask, SolverOptions opts = {});

  const GridSpec& grid() const { return grid_; }
  const Mask& mask() const { return mask_; }
  std::size_t unknowns() const { return index_.size(); }
  bool dense() const { return dense_; }

  /// Squared dual norm of the functional w -> h^n sum_x g(x) w(x) over grid
  /// functions w supported on the mask. When psi is given it receives the
  /// Riesz representer scattered onto the full grid.
  double norm_sq(std::span<const double> g, std::vector<double>* psi = nullptr) const;

  int last_iterations() const { return last_iterations_; }
  double last_residual() const { return last_residual_; }

 private:
  void apply(std::span<const double> x, std::span<double> y, bool inverse) const;
  std::vector<double> solve(std::span<const double> rhs) const;

  GridSpec grid_;
  Mask mask_;
  SolverOptions opts_;
  std::vector<std::size_t> index_;
  std::vector<double> symbol_;
  bool dense_ = false;
  std::unique_ptr<Eigen::LLT<Matrix>> factor_;
  mutable std::atomic<int> last_iterations_{0};
  mutable std::atomic<double> last_residual_{0.0};
};

/// Process-wide cache of solvers keyed by grid and mask.
std::shared_ptr<const DomainNormSolver> shared_domain_solver(const GridSpec& grid, const Mask& mask,
                                                             SolverOptions opts = {});

/// ||A u||_{W^{-1,2}(Omega)} with Omega the mask of u; the functional is
///   w -> -sum_i int (A^(i) u) . d_i w
/// with spectral derivatives on the bounding box.
double hminus1_norm_domain(const OperatorA& op, const DomainField& u, SolverOptions opts = {});

/// Squared constraint norm sum_j ||(A phi)_j||^2_{W^{-1,2}(mask)} for node-major
/// grid values phi, and optionally its gradient with respect to the nodal values.
class ConstraintNorm {
 public:
  ConstraintNorm(OperatorA op, std::shared_ptr<const DomainNormSolver> solver);
  double value_sq(std::span<const double> phi, std::vector<double>* grad = nullptr) const;
  const OperatorA& op() const { return op_; }

 private:
  OperatorA op_;
  std::shared_ptr<const DomainNormSolver> solver_;
};

/// Quadrature pairing  int_Omega u . w.
double pair_weak(const DomainField& u, const DomainField& w);
double pair_weak(const DomainField& u, const PointFunction& w);

}  // namespace afreeqc
