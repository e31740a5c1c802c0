#pragma once

#include "afreeqc/fields.hpp"
#include "afreeqc/integrand.hpp"
#include "afreeqc/symbol.hpp"

#include "json.hpp"

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace afreeqc {

/// C-infinity radial cutoff: 1 for r <= r_in, 0 for r >= r_out.
double smooth_cutoff(double r, double r_in, double r_out);

/// eta(|x|) (Re f, Im f) with f(z) = 1 / (z - pole) on the mask nodes, zero elsewhere.
std::vector<double> truncated_singular_values(const GridSpec& grid, const Mask& mask, std::array<double, 2> pole,
                                              double r_in, double r_out);

/// Weighted point set for fields too singular for the grid. Each point stores
/// the scaled value U = r u with r = exp(log_r), so that
///   int h(u) dx     = sum h(x, U) w r^{n-p}   (h positively p-homogeneous)
///   int u . phi dx  = sum U . phi(x) w r^{n-1}.
/// Grid quadratures have log_r = 0 and w = h^n.
struct PointQuadrature {
  int n = 2;
  int m = 2;
  std::vector<double> x;  ///< n per point
  std::vector<double> U;  ///< m per point
  std::vector<double> log_r;
  std::vector<double> weight;

  std::size_t size() const { return weight.size(); }
  double integrate(const Integrand& h) const;
  double lp_norm_p(double p) const;  ///< int |u|^p
  double pair(const PointFunction& phi) const;

  static PointQuadrature from_grid(const DomainField& u);
};

struct DiskSpec {
  std::array<double, 2> center{0.0, 0.0};
  double radius = 1.0;
};

struct CrOptions {
  int grid = 512;
  double tol = 1e-6;
  /// Outward normal at the boundary point; the easternmost point by default.
  std::array<double, 2> direction{1.0, 0.0};
  enum class Mode { Graded, Grid } mode = Mode::Graded;
};

/// u_k(z) = 1 / (k (z - z_k)) as (Re, Im), z_k = x_b + d nu outside the disk
/// with d fixed by bisection so that the L^2 mass over the disk is 1.
struct CrField {
  int k = 1;
  DomainField field;  ///< grid samples on the box center +- 1.125 radius
  PointQuadrature quadrature;
  std::array<double, 2> boundary_point{};
  std::array<double, 2> normal{};
  double log_distance = 0.0;  ///< log dist(z_k, disk)
  std::array<double, 2> pole{};
  double mass = 0.0;  ///< int |u_k|^2 by the quadrature
  int bisection_steps = 0;
};

CrField cr_singular_sequence(const DiskSpec& disk, int k, const CrOptions& opts = {});

/// Exact  int_disk |1/(z - a)|^2 dx = pi log(rho^2 / (rho^2 - 1)),  rho = |a - c| / radius = 1 + t.
double cr_mass_exact(double log_t);

/// Quadrature of u_k for a given pole distance (log), as built by cr_singular_sequence.
PointQuadrature cr_quadrature(const DiskSpec& disk, int k, double log_distance, const CrOptions& opts = {});

/// Pole distance (log) for which the exact mass of u_k equals 1 on a disk of the given radius.
double cr_log_distance_exact(int k, double radius);

/// Ten fixed smooth test fields on R^n with m components.
std::vector<PointFunction> weak_battery(int n, int m);

/// Tensor-product polynomial bump prod (1 - n x_i^2)^3 times amp, supported in B(0, 1).
DomainField base_bump(const GridSpec& grid, std::span<const double> amp);

/// u_k(x) = k^{n/p} u(k (x - x0)) resampled on the target grid by cell averages
/// of o^n sub-samples (multilinear interpolation of the base).
DomainField dilation_sequence(const DomainField& base, std::span<const double> x0, int k, double p,
                              const GridSpec& target, const Mask& target_mask, const DomainSpec& domain,
                              int oversample = 4);

/// One member of a sequence: grid samples plus an optional exact-geometry quadrature.
struct SequenceMember {
  int k = 1;
  DomainField field;
  std::optional<PointQuadrature> quadrature;
  nlohmann::json info = nlohmann::json::object();  ///< generator parameters of this member
};

using SequenceGenerator = std::function<SequenceMember(int k)>;

SequenceGenerator cr_generator(const DiskSpec& disk, const CrOptions& opts);
SequenceGenerator dilation_generator(const DomainField& base, std::vector<double> x0, double p, GridSpec target,
                                     Mask mask, DomainSpec domain);
/// Same field for every k.
SequenceGenerator constant_generator(const DomainField& u);

/// Battery pairings of a member (quadrature when present).
std::vector<double> battery_pairings(const SequenceMember& u, const std::vector<PointFunction>& battery);

struct CutoffSpec {
  std::vector<double> center;
  double r_in = 0.5;
  double r_out = 1.0;
};

struct DecayRow {
  int k = 0;
  double neg_norm = 0.0;   ///< ||A(eta u_k)||_{W^-1,2(Omega)}
  double l2_norm = 0.0;    ///< ||u_k||_{L^2} on the grid
  double max_pairing = 0.0;
};

struct DecayTable {
  std::vector<DecayRow> rows;
  double rate = 0.0;         ///< least-squares slope of log neg_norm against log k
  bool decreasing = false;
  bool weakly_null = false;  ///< battery pairings at the last k below half those at the first
};

DecayTable truncation_decay(const OperatorA& op, const SequenceGenerator& gen, const CutoffSpec& eta,
                            std::span<const int> ks, SolverOptions opts = {});

struct BoundaryMassRow {
  int k = 0;
  double fraction = 0.0;  ///< band share of int |u_k|^p
  double total = 0.0;     ///< int |u_k|^p
  std::vector<double> histogram;  ///< cells x cells partition of the bounding box, row-major
};

/// band_width is in units of the grid spacing (>= 2).
std::vector<BoundaryMassRow> boundary_mass(const SequenceGenerator& gen, std::span<const int> ks, double band_width,
                                           double p = 2.0, int cells = 8);

// Hessian example ----------------------------------------------------------------------

/// u(x) = B(x) M(x) on (-1,1)^2 with B = ((1-x1^2)(1-x2^2))^q and M a
/// combination of the 25 products f_a(x1) f_b(x2), f in {1, cos pi t,
/// sin pi t, cos 2 pi t, sin 2 pi t}; coeffs row-major in (a, b).
struct HessianBump {
  int q = 8;
  bool radial = false;  ///< B = (1 - |x|^2)^q instead of the tensor product
  std::vector<double> coeffs = std::vector<double>(25, 0.0);

  static HessianBump radial_bump(int q = 8);
  /// Value, gradient and Hessian at x.
  void jet(std::span<const double> x, double& u, double g[2], double H[2][2]) const;
  double value(std::span<const double> x) const;
};

/// Gauss-Legendre reference for int_{(0,1)x(-1,1)} det D^2 u and ||D^2 u||_{L^2((-1,1)^2)}.
double hessian_half_integral_oracle(const HessianBump& u, int order = 96);
double hessian_l2_norm(const HessianBump& u, int order = 96);

struct HessianRow {
  int k = 0;
  double integral = 0.0;
};

struct HessianReport {
  std::vector<HessianRow> rows;
  double oracle = 0.0;
  double max_relative_spread = 0.0;  ///< max |I_k - I_1| / |I_1|
  int sign = 0;
};

/// u_k(x) = u(k x) / k on the box (-1,1)^2 with N points per axis; spectral
/// Hessian, exact half-box integration of the band-limited determinant.
HessianReport hessian_demo(const HessianBump& u, std::span<const int> ks, int N = 512);
double hessian_half_integral_spectral(const HessianBump& u, int k, int N);

struct HessianSearch {
  HessianBump bump;
  double integral = 0.0;  ///< after normalizing ||D^2 u||_{L^2} = 1
  int trials = 0;
  bool found = false;
};

/// Seeded random search over the Fourier modulation for a normalized bump
/// with half-box integral below threshold.
HessianSearch hessian_search(std::uint64_t seed, int max_trials = 400, double threshold = -0.01);

// Cofactor example ----------------------------------------------------------------------

struct CofactorSpec {
  std::vector<double> a0{1.0, 0.5};
  std::vector<double> a1{0.3, -0.2, 0.1, 0.4};
  enum class Kind { Constant, Perturbed, Oscillating } kind = Kind::Oscillating;
  std::array<double, 2> direction{0.6, 0.8};
  int grid = 256;
};

struct CofactorRow {
  int k = 0;
  double value = 0.0;
  double gap = 0.0;  ///< |I(u_k) - I(u_0)|
};

struct CofactorReport {
  double base = 0.0;
  std::vector<CofactorRow> rows;
  double rate = 0.0;  ///< least-squares slope of log gap against log k (0 when all gaps vanish)
};

CofactorReport cofactor_demo(const CofactorSpec& spec, std::span<const int> ks);

// Reports --------------------------------------------------------------------------------

struct SequenceRow {
  int k = 0;
  double lp_norm = 0.0;
  std::vector<double> functionals;  ///< one per integrand
  std::vector<double> pairings;
  std::optional<double> neg_norm;
  double boundary_fraction = 0.0;
};

struct SequenceReport {
  std::string name;
  double p = 2.0;
  std::vector<std::string> integrands;
  std::vector<SequenceRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  /// Columns k, norm_lp, I (first integrand), I_<name> (others), pair_0..,
  /// neg_norm (when present), boundary_fraction.
  std::string csv() const;
  nlohmann::json sidecar() const;
  /// Writes path and path + ".json".
  void write(const std::string& path) const;
};

struct SequenceOptions {
  double p = 2.0;
  double band_width = 2.0;
  std::optional<OperatorA> op;  ///< adds ||A(eta u_k)|| when set
  CutoffSpec cutoff;
};

/// Diagnostics for each k in order (members generated in parallel).
SequenceReport sequence_report(const std::string& name, const SequenceGenerator& gen, std::span<const int> ks,
                               const std::vector<const Integrand*>& integrands, const SequenceOptions& opts);

}  // namespace afreeqc
