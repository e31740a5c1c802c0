#include "afreeqc/sequences.hpp"

#include "afreeqc/errors.hpp"
#include "afreeqc/io.hpp"
#include "afreeqc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

namespace afreeqc {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct GaussRule {
  std::vector<double> x, w;
};

// Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.
GaussRule gauss_legendre(int n) {
  GaussRule g;
  g.x.resize(static_cast<std::size_t>(n));
  g.w.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    g.x[static_cast<std::size_t>(i)] = -z;
    g.w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return g;
}

const GaussRule& gauss_cached(int n) {
  static const GaussRule g8 = gauss_legendre(8);
  static const GaussRule g16 = gauss_legendre(16);
  if (n == 8) return g8;
  if (n == 16) return g16;
  throw InvalidArgument("gauss_cached: unsupported order");
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

double boundary_distance(const DomainSpec& dom, std::span<const double> x) {
  if (const auto* b = std::get_if<BallDomain>(&dom)) {
    double r2 = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) r2 += (x[a] - b->center[a]) * (x[a] - b->center[a]);
    return std::abs(b->radius - std::sqrt(r2));
  }
  if (const auto* h = std::get_if<HalfBallDomain>(&dom)) {
    double r2 = 0.0, dot = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) {
      const double y = x[a] - h->center[a];
      r2 += y * y;
      dot += y * h->normal[a];
    }
    return std::min(std::abs(h->radius - std::sqrt(r2)), std::abs(dot));
  }
  if (const auto* bx = std::get_if<BoxDomain>(&dom)) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < x.size(); ++a) d = std::min({d, std::abs(x[a] - bx->lo[a]), std::abs(bx->hi[a] - x[a])});
    return d;
  }
  return -1.0;
}

}  // namespace

// Cutoffs and truncated fields ---------------------------------------------------------

double smooth_cutoff(double r, double r_in, double r_out) {
  if (!(r_out > r_in)) throw InvalidArgument("smooth_cutoff: need r_in < r_out");
  if (r <= r_in) return 1.0;
  if (r >= r_out) return 0.0;
  const double t = (r - r_in) / (r_out - r_in);
  auto f = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
  const double a = f(1.0 - t), b = f(t);
  return a / (a + b);
}

std::vector<double> truncated_singular_values(const GridSpec& grid, const Mask& mask, std::array<double, 2> pole,
                                              double r_in, double r_out) {
  if (grid.n() != 2) throw InvalidArgument("truncated singular field needs n = 2");
  std::vector<double> out(grid.size() * 2, 0.0), x(2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!mask[i]) continue;
    grid.node(i, x);
    const double eta = smooth_cutoff(std::hypot(x[0], x[1]), r_in, r_out);
    if (eta == 0.0) continue;
    const std::complex<double> f = 1.0 / std::complex<double>(x[0] - pole[0], x[1] - pole[1]);
    out[2 * i] = eta * f.real();
    out[2 * i + 1] = eta * f.imag();
  }
  return out;
}

// PointQuadrature ------------------------------------------------------------------------

double PointQuadrature::integrate(const Integrand& h) const {
  const auto un = static_cast<std::size_t>(n), um = static_cast<std::size_t>(m);
  bool graded = false;
  for (double v : log_r) graded = graded || v != 0.0;
  const bool homogeneous = graded && homogeneity_defect(h, n) <= 1e-10;
  std::vector<double> s(um);
  double total = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    std::span<const double> xi(x.data() + i * un, un);
    std::span<const double> Ui(U.data() + i * um, um);
    double v = 0.0;
    if (log_r[i] == 0.0) {
      v = h(xi, Ui) * weight[i];
    } else if (homogeneous) {
      v = h(xi, Ui) * weight[i] * std::exp((n - h.p()) * log_r[i]);
    } else {
      const double inv = std::exp(-log_r[i]);
      for (std::size_t c = 0; c < um; ++c) s[c] = Ui[c] * inv;
      v = h(xi, s) * weight[i] * std::exp(n * log_r[i]);
    }
    if (!std::isfinite(v)) throw ScaleLimitError("quadrature: integrand not representable at a graded point");
    total += v;
  }
  return total;
}

double PointQuadrature::lp_norm_p(double p) const {
  const auto um = static_cast<std::size_t>(m);
  double total = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double s2 = 0.0;
    for (std::size_t c = 0; c < um; ++c) s2 += U[i * um + c] * U[i * um + c];
    const double e = (n - p) * log_r[i];
    total += std::pow(s2, 0.5 * p) * weight[i] * (e == 0.0 ? 1.0 : std::exp(e));
  }
  return total;
}

double PointQuadrature::pair(const PointFunction& phi) const {
  const auto un = static_cast<std::size_t>(n), um = static_cast<std::size_t>(m);
  std::vector<double> w(um);
  double total = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    const double e = (n - 1) * log_r[i];
    const double scale = weight[i] * (e == 0.0 ? 1.0 : std::exp(e));
    if (scale == 0.0) continue;
    phi(std::span<const double>(x.data() + i * un, un), w);
    double s = 0.0;
    for (std::size_t c = 0; c < um; ++c) s += U[i * um + c] * w[c];
    total += s * scale;
  }
  return total;
}

PointQuadrature PointQuadrature::from_grid(const DomainField& u) {
  PointQuadrature q;
  const auto& grid = u.grid();
  q.n = grid.n();
  q.m = u.m();
  const double cell = grid.cell_volume();
  std::vector<double> x(static_cast<std::size_t>(q.n));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!u.mask()[i]) continue;
    grid.node(i, x);
    q.x.insert(q.x.end(), x.begin(), x.end());
    const auto v = u.at(i);
    q.U.insert(q.U.end(), v.begin(), v.end());
    q.log_r.push_back(0.0);
    q.weight.push_back(cell);
  }
  return q;
}

// Cauchy-Riemann singular sequence -----------------------------------------------------------

double cr_mass_exact(double log_t) {
  const double t = std::exp(log_t);
  return kPi * (2.0 * std::log1p(t) - log_t - std::log(2.0 + t));
}

double cr_log_distance_exact(int k, double radius) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  const double a = static_cast<double>(k) * k / kPi;
  const double log_rho2m1 = -a - std::log(-std::expm1(-a));
  const double rho = std::sqrt(1.0 + std::exp(log_rho2m1));
  return std::log(radius) + log_rho2m1 - std::log(rho + 1.0);
}

namespace {

struct CrGeometry {
  std::array<double, 2> center;
  double radius;
  std::array<double, 2> nu;
  double alpha;
  std::array<double, 2> xb;
};

CrGeometry cr_geometry(const DiskSpec& disk, std::array<double, 2> dir) {
  if (!(disk.radius > 0.0)) throw InvalidArgument("disk radius must be positive");
  const double len = std::hypot(dir[0], dir[1]);
  if (!(len > 0.0) || !std::isfinite(len)) throw InvalidArgument("boundary direction must be nonzero");
  CrGeometry g{disk.center, disk.radius, {dir[0] / len, dir[1] / len}, 0.0, {}};
  g.alpha = std::atan2(g.nu[1], g.nu[0]);
  g.xb = {disk.center[0] + disk.radius * g.nu[0], disk.center[1] + disk.radius * g.nu[1]};
  return g;
}

// Polar quadrature centred at the boundary point; radial variable sigma = log(r/d)
// near the pole, a quadratic map towards the far side of the disk.
PointQuadrature cr_graded(const CrGeometry& g, int k, double ell) {
  PointQuadrature q;
  q.n = 2;
  q.m = 2;
  const double rho0 = g.radius;
  const double r1 = 0.25 * rho0;
  const std::complex<double> rot = std::polar(1.0, -g.alpha);
  const double kk = static_cast<double>(k);
  const auto& G8 = gauss_cached(8);
  const auto& G16 = gauss_cached(16);

  auto emit = [&](double log_r, double r_over_rho, double radial_w, double shift) {
    // shift = d / r, so U_local = 1 / (k (e^{i theta} - shift))
    const double A = std::acos(std::min(1.0, r_over_rho / 2.0));
    const double r = std::exp(log_r);
    for (int panel = 0; panel < 2; ++panel) {
      for (int j = 0; j < 16; ++j) {
        const double eta = -1.0 + panel + 0.5 * (G16.x[static_cast<std::size_t>(j)] + 1.0);
        const double w_eta = 0.5 * G16.w[static_cast<std::size_t>(j)];
        const double theta = kPi + A * eta;
        const std::complex<double> e = std::polar(1.0, theta);
        const std::complex<double> U = rot / (kk * (e - shift));
        q.x.push_back(g.xb[0] + r * std::cos(g.alpha + theta));
        q.x.push_back(g.xb[1] + r * std::sin(g.alpha + theta));
        q.U.push_back(U.real());
        q.U.push_back(U.imag());
        q.log_r.push_back(log_r);
        q.weight.push_back(radial_w * A * w_eta);
      }
    }
  };

  // inner region: r = d e^sigma, sigma in [-20, log(r1/d)], dx / r^2 = dsigma dtheta
  const double s_hi = std::log(r1) - ell;
  if (s_hi > -20.0) {
    double a = -20.0;
    while (a < s_hi) {
      const double b = std::min(a + 1.0, s_hi);
      for (int j = 0; j < 8; ++j) {
        const double sigma = a + 0.5 * (b - a) * (G8.x[static_cast<std::size_t>(j)] + 1.0);
        const double w = 0.5 * (b - a) * G8.w[static_cast<std::size_t>(j)];
        const double log_r = ell + sigma;
        emit(log_r, std::exp(log_r) / rho0, w, std::exp(-sigma));
      }
      a = b;
    }
  }
  // outer region: r = 2 rho0 - (2 rho0 - r1) t^2, dx / r^2 = dr dtheta / r
  const double r_lo = s_hi > -20.0 ? r1 : std::exp(ell - 20.0);
  const double span = 2.0 * rho0 - r_lo;
  for (int panel = 0; panel < 8; ++panel) {
    for (int j = 0; j < 16; ++j) {
      const double t = (panel + 0.5 * (G16.x[static_cast<std::size_t>(j)] + 1.0)) / 8.0;
      const double wt = 0.5 * G16.w[static_cast<std::size_t>(j)] / 8.0;
      const double r = 2.0 * rho0 - span * t * t;
      const double dr = 2.0 * span * t * wt;
      emit(std::log(r), r / rho0, dr / r, std::exp(ell - std::log(r)));
    }
  }
  return q;
}

// Midpoint rule on the disk nodes with 4 x 4 sub-cells within 4h of the boundary point.
PointQuadrature cr_grid_quadrature(const CrGeometry& g, int k, double ell, const GridSpec& grid, const Mask& mask) {
  PointQuadrature q;
  q.n = 2;
  q.m = 2;
  const double h = grid.h(0);
  const std::complex<double> pole(g.xb[0] + std::exp(ell) * g.nu[0], g.xb[1] + std::exp(ell) * g.nu[1]);
  const double kk = static_cast<double>(k);
  auto push = [&](double x0, double x1, double w) {
    const std::complex<double> U = 1.0 / (kk * (std::complex<double>(x0, x1) - pole));
    q.x.push_back(x0);
    q.x.push_back(x1);
    q.U.push_back(U.real());
    q.U.push_back(U.imag());
    q.log_r.push_back(0.0);
    q.weight.push_back(w);
  };
  std::vector<double> x(2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, x);
    if (std::hypot(x[0] - g.xb[0], x[1] - g.xb[1]) < 4.0 * h) {
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double y0 = x[0] + h * ((a + 0.5) / 4.0 - 0.5);
          const double y1 = x[1] + h * ((b + 0.5) / 4.0 - 0.5);
          if (std::hypot(y0 - g.center[0], y1 - g.center[1]) < g.radius) push(y0, y1, h * h / 16.0);
        }
    } else if (mask[i]) {
      push(x[0], x[1], h * h);
    }
  }
  return q;
}

GridSpec cr_grid(const DiskSpec& disk, int N) {
  const double half = 1.125 * disk.radius;
  return GridSpec({N, N}, {disk.center[0] - half, disk.center[1] - half}, {disk.center[0] + half, disk.center[1] + half});
}

}  // namespace

PointQuadrature cr_quadrature(const DiskSpec& disk, int k, double log_distance, const CrOptions& opts) {
  const auto g = cr_geometry(disk, opts.direction);
  if (opts.mode == CrOptions::Mode::Graded) return cr_graded(g, k, log_distance);
  const auto grid = cr_grid(disk, opts.grid);
  const auto mask = make_mask(grid, BallDomain{{disk.center[0], disk.center[1]}, disk.radius});
  return cr_grid_quadrature(g, k, log_distance, grid, mask);
}

CrField cr_singular_sequence(const DiskSpec& disk, int k, const CrOptions& opts) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (!(opts.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (opts.grid < 8) throw InvalidArgument("grid too small");
  const auto g = cr_geometry(disk, opts.direction);
  const auto grid = cr_grid(disk, opts.grid);
  const DomainSpec dom = BallDomain{{disk.center[0], disk.center[1]}, disk.radius};
  const auto mask = make_mask(grid, dom);
  const bool graded = opts.mode == CrOptions::Mode::Graded;

  auto build = [&](double ell) {
    return graded ? cr_graded(g, k, ell) : cr_grid_quadrature(g, k, ell, grid, mask);
  };
  auto mass = [&](double ell) { return build(ell).lp_norm_p(2.0); };

  double lo, hi;
  if (graded) {
    const double ell0 = cr_log_distance_exact(k, disk.radius);
    lo = ell0 - 2.0;
    hi = ell0 + 2.0;
  } else {
    lo = std::log(1e-6 * grid.h(0));
    hi = std::log(4.0 * disk.radius);
  }
  // monotonicity scan over the bracket
  constexpr int kScan = 9;
  double prev = std::numeric_limits<double>::infinity();
  std::vector<double> scan(kScan);
  for (int i = 0; i < kScan; ++i) {
    const double ell = lo + (hi - lo) * i / (kScan - 1);
    scan[static_cast<std::size_t>(i)] = mass(ell);
    if (!(scan[static_cast<std::size_t>(i)] < prev))
      throw ResolutionError("L^2 mass is not strictly decreasing in the pole distance; increase the grid");
    prev = scan[static_cast<std::size_t>(i)];
  }
  if (scan.front() < 1.0 - opts.tol || scan.back() > 1.0 + opts.tol)
    throw ResolutionError("unit L^2 mass is out of reach at this resolution (grid " + std::to_string(opts.grid) +
                          "); use a larger grid or the graded mode");

  double ell = 0.5 * (lo + hi), m = 0.0;
  int steps = 0;
  for (; steps < 200; ++steps) {
    ell = 0.5 * (lo + hi);
    m = mass(ell);
    if (std::abs(m - 1.0) <= opts.tol) break;
    if (m > 1.0) lo = ell;
    else hi = ell;
    if (hi - lo < 1e-15 * std::max(1.0, std::abs(ell))) break;
  }
  if (std::abs(m - 1.0) > opts.tol)
    throw ResolutionError("bisection stalled before reaching the tolerance; increase the grid");

  CrField out{k, DomainField::zeros(grid, mask, 2, dom), build(ell), g.xb, g.nu, ell, {}, m, steps + 1};
  const double d = std::exp(ell);
  out.pole = {g.xb[0] + d * g.nu[0], g.xb[1] + d * g.nu[1]};
  const std::complex<double> pole(out.pole[0], out.pole[1]);
  std::vector<double> vals(grid.size() * 2, 0.0), x(2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!mask[i]) continue;
    grid.node(i, x);
    const std::complex<double> u = 1.0 / (static_cast<double>(k) * (std::complex<double>(x[0], x[1]) - pole));
    vals[2 * i] = u.real();
    vals[2 * i + 1] = u.imag();
  }
  out.field = DomainField(grid, mask, 2, std::move(vals), dom);
  return out;
}

// Test battery -------------------------------------------------------------------------------

std::vector<PointFunction> weak_battery(int n, int m) {
  std::vector<PointFunction> out;
  for (int j = 0; j < 10; ++j) {
    std::vector<double> c(static_cast<std::size_t>(n)), amp(static_cast<std::size_t>(m));
    const double th = 0.7 + 2.1 * j;
    c[0] = 0.45 * std::cos(th);
    if (n > 1) c[1] = 0.45 * std::sin(th);
    for (int a = 2; a < n; ++a) c[static_cast<std::size_t>(a)] = 0.2 * std::sin(1.7 * j + a);
    for (int i = 0; i < m; ++i) amp[static_cast<std::size_t>(i)] = std::cos(1.3 * j + 0.9 * i + 0.4);
    const double s = 0.35 + 0.05 * (j % 4);
    out.emplace_back([c, amp, s](std::span<const double> x, std::span<double> o) {
      double r2 = 0.0;
      for (std::size_t a = 0; a < c.size(); ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
      const double g = std::exp(-r2 / (2.0 * s * s));
      for (std::size_t i = 0; i < amp.size(); ++i) o[i] = g * amp[i];
    });
  }
  return out;
}

std::vector<double> battery_pairings(const SequenceMember& u, const std::vector<PointFunction>& battery) {
  std::vector<double> out;
  out.reserve(battery.size());
  for (const auto& w : battery) out.push_back(u.quadrature ? u.quadrature->pair(w) : pair_weak(u.field, w));
  return out;
}

// Dilation ---------------------------------------------------------------------------------

DomainField base_bump(const GridSpec& grid, std::span<const double> amp) {
  const int n = grid.n();
  const double scale = static_cast<double>(n);
  std::vector<double> a(amp.begin(), amp.end());
  return DomainField::from_function(grid, BallDomain{std::vector<double>(static_cast<std::size_t>(n), 0.0), 1.0},
                                    static_cast<int>(a.size()),
                                    [a, scale](std::span<const double> x, std::span<double> o) {
                                      double b = 1.0;
                                      for (double xa : x) {
                                        const double t = 1.0 - scale * xa * xa;
                                        b *= t > 0.0 ? t * t * t : 0.0;
                                      }
                                      for (std::size_t i = 0; i < a.size(); ++i) o[i] = b * a[i];
                                    });
}

namespace {

// Multilinear interpolation of node values, zero outside the node hull.
void interpolate(const DomainField& u, std::span<const double> y, std::span<double> out) {
  const auto& grid = u.grid();
  const int n = grid.n();
  const auto m = static_cast<std::size_t>(u.m());
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<int> base(static_cast<std::size_t>(n)), j(static_cast<std::size_t>(n));
  std::vector<double> frac(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const double t = (y[static_cast<std::size_t>(a)] - grid.lo(a)) / grid.h(a) - 0.5;
    if (t < -1.0 || t > grid.points(a)) return;
    base[static_cast<std::size_t>(a)] = static_cast<int>(std::floor(t));
    frac[static_cast<std::size_t>(a)] = t - std::floor(t);
  }
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    bool inside = true;
    for (int a = 0; a < n; ++a) {
      const auto sa = static_cast<std::size_t>(a);
      const int bit = (corner >> a) & 1;
      j[sa] = base[sa] + bit;
      w *= bit ? frac[sa] : 1.0 - frac[sa];
      if (j[sa] < 0 || j[sa] >= grid.points(a)) inside = false;
    }
    if (!inside || w == 0.0) continue;
    const auto v = u.at(grid.ravel(j));
    for (std::size_t c = 0; c < m; ++c) out[c] += w * v[c];
  }
}

}  // namespace

DomainField dilation_sequence(const DomainField& base, std::span<const double> x0, int k, double p,
                              const GridSpec& target, const Mask& target_mask, const DomainSpec& domain,
                              int oversample) {
  const int n = target.n();
  const auto un = static_cast<std::size_t>(n);
  if (base.grid().n() != n || x0.size() != un) throw InvalidArgument("dilation: dimension mismatch");
  if (k < 1 || !(p > 0.0) || oversample < 1) throw InvalidArgument("dilation: k, p and oversampling must be positive");
  // the base must vanish outside the unit ball
  std::vector<double> y(un);
  const auto mb = static_cast<std::size_t>(base.m());
  for (std::size_t i = 0; i < base.grid().size(); ++i) {
    base.grid().node(i, y);
    double r2 = 0.0;
    for (double v : y) r2 += v * v;
    if (r2 >= 1.0)
      for (std::size_t c = 0; c < mb; ++c)
        if (base.at(i)[c] != 0.0) throw SupportError("dilation: base field is not supported in the unit ball");
  }
  const double rad = 1.0 / k;
  for (int a = 0; a < n; ++a)
    if (x0[static_cast<std::size_t>(a)] - rad < target.lo(a) || x0[static_cast<std::size_t>(a)] + rad > target.hi(a))
      throw SupportError("dilation: support of u_k leaves the bounding box");

  const double amp = std::pow(static_cast<double>(k), n / p);
  std::vector<double> vals(target.size() * mb, 0.0), x(un), z(un), v(mb);
  std::vector<int> sub(un);
  const int total = static_cast<int>(std::pow(oversample, n));
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!target_mask[i]) continue;
    target.node(i, x);
    // skip cells that cannot meet the support
    double d2 = 0.0, diag = 0.0;
    for (std::size_t a = 0; a < un; ++a) {
      d2 += (x[a] - x0[a]) * (x[a] - x0[a]);
      diag += target.h(static_cast<int>(a)) * target.h(static_cast<int>(a));
    }
    if (std::sqrt(d2) > rad + std::sqrt(diag)) continue;
    std::fill(sub.begin(), sub.end(), 0);
    for (int s = 0; s < total; ++s) {
      int rem = s;
      for (std::size_t a = 0; a < un; ++a) {
        sub[a] = rem % oversample;
        rem /= oversample;
        const double off = ((sub[a] + 0.5) / oversample - 0.5) * target.h(static_cast<int>(a));
        z[a] = k * (x[a] + off - x0[a]);
      }
      interpolate(base, z, v);
      for (std::size_t c = 0; c < mb; ++c) vals[i * mb + c] += amp * v[c] / total;
    }
  }
  return DomainField(target, target_mask, base.m(), std::move(vals), domain);
}

// Generators -----------------------------------------------------------------------------

SequenceGenerator cr_generator(const DiskSpec& disk, const CrOptions& opts) {
  return [disk, opts](int k) {
    auto f = cr_singular_sequence(disk, k, opts);
    json info = {{"k", k},
                 {"log_distance", f.log_distance},
                 {"pole", {f.pole[0], f.pole[1]}},
                 {"boundary_point", {f.boundary_point[0], f.boundary_point[1]}},
                 {"mass", f.mass},
                 {"bisection_steps", f.bisection_steps},
                 {"quadrature_points", f.quadrature.size()}};
    return SequenceMember{k, std::move(f.field), std::move(f.quadrature), std::move(info)};
  };
}

SequenceGenerator dilation_generator(const DomainField& base, std::vector<double> x0, double p, GridSpec target,
                                     Mask mask, DomainSpec domain) {
  return [base, x0, p, target, mask, domain](int k) {
    auto f = dilation_sequence(base, x0, k, p, target, mask, domain);
    return SequenceMember{k, std::move(f), std::nullopt, json{{"k", k}, {"x0", x0}}};
  };
}

SequenceGenerator constant_generator(const DomainField& u) {
  return [u](int k) { return SequenceMember{k, u, std::nullopt, json{{"k", k}}}; };
}

// Truncation decay ----------------------------------------------------------------------

namespace {

std::vector<double> cut_values(const DomainField& u, const CutoffSpec& eta) {
  const auto& grid = u.grid();
  const auto un = static_cast<std::size_t>(grid.n());
  if (eta.center.size() != un) throw InvalidArgument("cutoff center has wrong dimension");
  const auto m = static_cast<std::size_t>(u.m());
  std::vector<double> vals(u.values().begin(), u.values().end()), x(un);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, x);
    double r2 = 0.0;
    for (std::size_t a = 0; a < un; ++a) r2 += (x[a] - eta.center[a]) * (x[a] - eta.center[a]);
    const double e = smooth_cutoff(std::sqrt(r2), eta.r_in, eta.r_out);
    for (std::size_t c = 0; c < m; ++c) vals[i * m + c] *= e;
  }
  return vals;
}

double truncated_neg_norm(const OperatorA& op, const DomainField& u, const CutoffSpec& eta, const SolverOptions& opts) {
  if (op.m() != u.m() || op.n() != u.grid().n()) throw InvalidArgument("operator does not match the sequence");
  ConstraintNorm norm(op, shared_domain_solver(u.grid(), u.mask(), opts));
  return std::sqrt(norm.value_sq(cut_values(u, eta)));
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

DecayTable truncation_decay(const OperatorA& op, const SequenceGenerator& gen, const CutoffSpec& eta,
                            std::span<const int> ks, SolverOptions opts) {
  DecayTable t;
  t.rows.resize(ks.size());
  parallel_for(ks.size(), [&](std::size_t i) {
    const auto mem = gen(ks[i]);
    const auto battery = weak_battery(mem.field.grid().n(), mem.field.m());
    t.rows[i] = DecayRow{ks[i], truncated_neg_norm(op, mem.field, eta, opts), lp_norm(mem.field, 2.0),
                         max_abs(battery_pairings(mem, battery))};
  });
  std::vector<double> lx, ly;
  for (const auto& r : t.rows)
    if (r.neg_norm > 0.0) {
      lx.push_back(std::log(static_cast<double>(r.k)));
      ly.push_back(std::log(r.neg_norm));
    }
  t.rate = least_squares_slope(lx, ly);
  if (!t.rows.empty()) {
    t.decreasing = t.rows.back().neg_norm < t.rows.front().neg_norm && t.rate < 0.0;
    t.weakly_null = t.rows.back().max_pairing <= 0.5 * t.rows.front().max_pairing;
  }
  return t;
}

// Boundary mass ------------------------------------------------------------------------------

namespace {

BoundaryMassRow member_boundary_mass(const SequenceMember& mem, double band_width, double p, int cells) {
  const auto& grid = mem.field.grid();
  const int n = grid.n();
  const auto un = static_cast<std::size_t>(n);
  const double width = band_width * grid.h(0);
  BoundaryMassRow row;
  row.k = mem.k;
  std::size_t hsize = 1;
  for (int a = 0; a < n; ++a) hsize *= static_cast<std::size_t>(cells);
  row.histogram.assign(hsize, 0.0);
  auto cell_of = [&](std::span<const double> x) {
    std::size_t idx = 0;
    for (int a = 0; a < n; ++a) {
      int c = static_cast<int>(std::floor((x[static_cast<std::size_t>(a)] - grid.lo(a)) / grid.extent(a) * cells));
      c = std::clamp(c, 0, cells - 1);
      idx = idx * static_cast<std::size_t>(cells) + static_cast<std::size_t>(c);
    }
    return idx;
  };
  double band = 0.0;
  const auto m = static_cast<std::size_t>(mem.field.m());
  const bool geometric = boundary_distance(mem.field.domain(), std::vector<double>(un, 0.0)) >= 0.0;
  if (mem.quadrature && geometric) {
    const auto& q = *mem.quadrature;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double s2 = 0.0;
      for (std::size_t c = 0; c < m; ++c) s2 += q.U[i * m + c] * q.U[i * m + c];
      const double e = (n - p) * q.log_r[i];
      const double dens = std::pow(s2, 0.5 * p) * q.weight[i] * (e == 0.0 ? 1.0 : std::exp(e));
      std::span<const double> x(q.x.data() + i * un, un);
      row.total += dens;
      row.histogram[cell_of(x)] += dens;
      if (boundary_distance(mem.field.domain(), x) < width) band += dens;
    }
  } else {
    const Mask bandmask = boundary_band(grid, mem.field.mask(), width);
    std::vector<double> x(un);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!mem.field.mask()[i]) continue;
      double s2 = 0.0;
      for (double v : mem.field.at(i)) s2 += v * v;
      const double dens = std::pow(s2, 0.5 * p) * grid.cell_volume();
      grid.node(i, x);
      row.total += dens;
      row.histogram[cell_of(x)] += dens;
      if (bandmask[i]) band += dens;
    }
  }
  row.fraction = row.total > 0.0 ? std::clamp(band / row.total, 0.0, 1.0) : 0.0;
  return row;
}

}  // namespace

std::vector<BoundaryMassRow> boundary_mass(const SequenceGenerator& gen, std::span<const int> ks, double band_width,
                                           double p, int cells) {
  if (band_width < 2.0) throw PreconditionError("boundary band must be at least 2 grid spacings wide");
  if (cells < 1) throw InvalidArgument("histogram needs at least one cell per axis");
  std::vector<BoundaryMassRow> rows(ks.size());
  parallel_for(ks.size(), [&](std::size_t i) { rows[i] = member_boundary_mass(gen(ks[i]), band_width, p, cells); });
  return rows;
}

// Hessian example ----------------------------------------------------------------------------

HessianBump HessianBump::radial_bump(int q) {
  HessianBump b;
  b.q = q;
  b.radial = true;
  b.coeffs[0] = 1.0;
  return b;
}

namespace {

// f_a, f_a', f_a'' for the modulation basis.
void basis1d(int a, double t, double& f, double& d1, double& d2) {
  const int freq = (a + 1) / 2;
  const double w = kPi * freq;
  if (a == 0) {
    f = 1.0;
    d1 = d2 = 0.0;
  } else if (a % 2 == 1) {
    f = std::cos(w * t);
    d1 = -w * std::sin(w * t);
    d2 = -w * w * f;
  } else {
    f = std::sin(w * t);
    d1 = w * std::cos(w * t);
    d2 = -w * w * f;
  }
}

void bump1d(int q, double t, double& b, double& d1, double& d2) {
  const double s = 1.0 - t * t;
  if (s <= 0.0) {
    b = d1 = d2 = 0.0;
    return;
  }
  b = std::pow(s, q);
  d1 = -2.0 * q * t * std::pow(s, q - 1);
  d2 = -2.0 * q * std::pow(s, q - 1) + 4.0 * q * (q - 1) * t * t * std::pow(s, q - 2);
}

}  // namespace

void HessianBump::jet(std::span<const double> x, double& u, double g[2], double H[2][2]) const {
  double B, Bg[2], BH[2][2];
  if (radial) {
    const double s = x[0] * x[0] + x[1] * x[1];
    if (s >= 1.0) {
      u = 0.0;
      g[0] = g[1] = 0.0;
      H[0][0] = H[0][1] = H[1][0] = H[1][1] = 0.0;
      return;
    }
    const double G = std::pow(1.0 - s, q), G1 = -q * std::pow(1.0 - s, q - 1),
                 G2 = q * (q - 1) * std::pow(1.0 - s, q - 2);
    B = G;
    for (int a = 0; a < 2; ++a) {
      Bg[a] = 2.0 * G1 * x[static_cast<std::size_t>(a)];
      for (int b = 0; b < 2; ++b)
        BH[a][b] = 4.0 * G2 * x[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(b)] + (a == b ? 2.0 * G1 : 0.0);
    }
  } else {
    double b0, b0d, b0dd, b1, b1d, b1dd;
    bump1d(q, x[0], b0, b0d, b0dd);
    bump1d(q, x[1], b1, b1d, b1dd);
    B = b0 * b1;
    Bg[0] = b0d * b1;
    Bg[1] = b0 * b1d;
    BH[0][0] = b0dd * b1;
    BH[0][1] = BH[1][0] = b0d * b1d;
    BH[1][1] = b0 * b1dd;
  }
  double M = 0.0, Mg[2] = {0, 0}, MH[2][2] = {{0, 0}, {0, 0}};
  double f[5][3], h[5][3];
  for (int a = 0; a < 5; ++a) {
    basis1d(a, x[0], f[a][0], f[a][1], f[a][2]);
    basis1d(a, x[1], h[a][0], h[a][1], h[a][2]);
  }
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      const double c = coeffs[static_cast<std::size_t>(a * 5 + b)];
      if (c == 0.0) continue;
      M += c * f[a][0] * h[b][0];
      Mg[0] += c * f[a][1] * h[b][0];
      Mg[1] += c * f[a][0] * h[b][1];
      MH[0][0] += c * f[a][2] * h[b][0];
      MH[0][1] += c * f[a][1] * h[b][1];
      MH[1][1] += c * f[a][0] * h[b][2];
    }
  MH[1][0] = MH[0][1];
  u = B * M;
  for (int a = 0; a < 2; ++a) {
    g[a] = M * Bg[a] + B * Mg[a];
    for (int b = 0; b < 2; ++b) H[a][b] = M * BH[a][b] + Bg[a] * Mg[b] + Mg[a] * Bg[b] + B * MH[a][b];
  }
}

double HessianBump::value(std::span<const double> x) const {
  double u, g[2], H[2][2];
  jet(x, u, g, H);
  return u;
}

double hessian_half_integral_oracle(const HessianBump& u, int order) {
  const auto G = gauss_legendre(order);
  double total = 0.0;
  double x[2], v, g[2], H[2][2];
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) {
      x[0] = 0.5 * (G.x[static_cast<std::size_t>(i)] + 1.0);
      x[1] = G.x[static_cast<std::size_t>(j)];
      u.jet(x, v, g, H);
      total += 0.5 * G.w[static_cast<std::size_t>(i)] * G.w[static_cast<std::size_t>(j)] *
               (H[0][0] * H[1][1] - H[0][1] * H[1][0]);
    }
  return total;
}

double hessian_l2_norm(const HessianBump& u, int order) {
  const auto G = gauss_legendre(order);
  double total = 0.0;
  double x[2], v, g[2], H[2][2];
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j) {
      x[0] = G.x[static_cast<std::size_t>(i)];
      x[1] = G.x[static_cast<std::size_t>(j)];
      u.jet(x, v, g, H);
      total += G.w[static_cast<std::size_t>(i)] * G.w[static_cast<std::size_t>(j)] *
               (H[0][0] * H[0][0] + H[0][1] * H[0][1] + H[1][0] * H[1][0] + H[1][1] * H[1][1]);
    }
  return std::sqrt(total);
}

double hessian_half_integral_spectral(const HessianBump& u, int k, int N) {
  if (k < 1) throw InvalidArgument("k must be at least 1");
  const auto grid = GridSpec::cube(2, N, -1.0, 1.0);
  std::vector<double> vals(grid.size()), x(2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, x);
    const double y[2] = {k * x[0], k * x[1]};
    vals[i] = u.value(y) / k;
  }
  // the periodic extension must stay smooth
  for (int j = 0; j < N; ++j) {
    const std::size_t edge[4] = {static_cast<std::size_t>(j), static_cast<std::size_t>((N - 1) * N + j),
                                 static_cast<std::size_t>(j * N), static_cast<std::size_t>(j * N + N - 1)};
    for (auto e : edge)
      if (std::abs(vals[e]) > 1e-12) throw SupportError("hessian_demo: u does not vanish near the box boundary");
  }
  const auto c = forward_transform(grid, 1, vals);
  const auto big = GridSpec::cube(2, 2 * N, -1.0, 1.0);
  SpectralField H00(big, 1), H01(big, 1), H11(big, 1);
  std::vector<int> j(2), jb(2);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (c.nyquist(idx)) continue;
    grid.unravel(idx, j);
    const double xi0 = grid.frequency(0, j[0]), xi1 = grid.frequency(1, j[1]);
    jb[0] = xi0 >= 0 ? static_cast<int>(xi0) : static_cast<int>(xi0) + 2 * N;
    jb[1] = xi1 >= 0 ? static_cast<int>(xi1) : static_cast<int>(xi1) + 2 * N;
    const std::size_t bidx = big.ravel(jb);
    const double k0 = kPi * xi0, k1 = kPi * xi1;
    const Complex v = c.component(0)[idx];
    H00.component(0)[bidx] = -k0 * k0 * v;
    H01.component(0)[bidx] = -k0 * k1 * v;
    H11.component(0)[bidx] = -k1 * k1 * v;
  }
  const auto h00 = inverse_transform(H00), h01 = inverse_transform(H01), h11 = inverse_transform(H11);
  std::vector<double> det(big.size());
  for (std::size_t i = 0; i < big.size(); ++i) det[i] = h00[i] * h11[i] - h01[i] * h01[i];
  const auto d = forward_transform(big, 1, det);
  // int_0^1 int_-1^1 exp(i pi (xi0 x0 + xi1 x1)) = 2 delta(xi1) I1(xi0)
  Complex total = 0.0;
  for (int a = 0; a < 2 * N; ++a) {
    jb[0] = a;
    jb[1] = 0;
    const double xi0 = big.frequency(0, a);
    Complex I1 = 1.0;
    if (xi0 != 0.0) I1 = (std::polar(1.0, kPi * xi0) - 1.0) / Complex(0.0, kPi * xi0);
    total += d.component(0)[big.ravel(jb)] * 2.0 * I1;
  }
  return total.real();
}

HessianReport hessian_demo(const HessianBump& u, std::span<const int> ks, int N) {
  HessianReport r;
  r.rows.resize(ks.size());
  parallel_for(ks.size(), [&](std::size_t i) {
    r.rows[i] = HessianRow{ks[i], hessian_half_integral_spectral(u, ks[i], N)};
  });
  r.oracle = hessian_half_integral_oracle(u);
  if (!r.rows.empty()) {
    const double ref = r.rows.front().integral;
    for (const auto& row : r.rows)
      r.max_relative_spread = std::max(r.max_relative_spread, std::abs(row.integral - ref) / std::abs(ref));
  }
  const double scale = std::pow(hessian_l2_norm(u), 2);
  r.sign = std::abs(r.oracle) <= 1e-10 * scale ? 0 : (r.oracle > 0.0 ? 1 : -1);
  return r;
}

HessianSearch hessian_search(std::uint64_t seed, int max_trials, double threshold) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  HessianSearch best;
  best.integral = std::numeric_limits<double>::infinity();
  for (int t = 0; t < max_trials; ++t) {
    HessianBump b;
    for (auto& c : b.coeffs) c = g(rng);
    const double norm = hessian_l2_norm(b, 48);
    for (auto& c : b.coeffs) c /= norm;
    const double I = hessian_half_integral_oracle(b, 48);
    if (I < best.integral) {
      best.bump = b;
      best.integral = I;
    }
    best.trials = t + 1;
    if (I < threshold) break;
  }
  // refine on the finer rule
  const double norm = hessian_l2_norm(best.bump);
  for (auto& c : best.bump.coeffs) c /= norm;
  best.integral = hessian_half_integral_oracle(best.bump);
  best.found = best.integral < threshold;
  return best;
}

// Cofactor example ----------------------------------------------------------------------------

namespace {

// u0 = exp(x2 / 2) cos(x1)
void base_hessian(std::span<const double> x, double H[2][2]) {
  const double e = std::exp(0.5 * x[1]);
  H[0][0] = -std::cos(x[0]) * e;
  H[0][1] = H[1][0] = -0.5 * std::sin(x[0]) * e;
  H[1][1] = 0.25 * std::cos(x[0]) * e;
}

}  // namespace

CofactorReport cofactor_demo(const CofactorSpec& spec, std::span<const int> ks) {
  const auto h = cofactor_normal(2, spec.a0, spec.a1);
  const auto grid = GridSpec::cube(2, spec.grid, -1.0, 1.0);
  const DomainSpec dom = BallDomain{{0.0, 0.0}, 1.0};
  const auto mask = make_mask(grid, dom);
  const double el = std::hypot(spec.direction[0], spec.direction[1]);
  if (!(el > 0.0)) throw InvalidArgument("cofactor_demo: direction must be nonzero");
  const double e[2] = {spec.direction[0] / el, spec.direction[1] / el};
  const auto chi = HessianBump::radial_bump(3);

  auto functional = [&](int k) {
    std::vector<double> vals(grid.size() * 4, 0.0), x(2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (!mask[i]) continue;
      grid.node(i, x);
      double H[2][2];
      base_hessian(x, H);
      if (k > 0 && spec.kind != CofactorSpec::Kind::Constant) {
        double c, cg[2], cH[2][2];
        chi.jet(x, c, cg, cH);
        const double kk = static_cast<double>(k);
        if (spec.kind == CofactorSpec::Kind::Perturbed) {
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) H[a][b] += cH[a][b] / kk;
        } else {
          // k^-2 chi sin(k x.e) with chi = 1 + x1 / 2, nonzero on the boundary
          c = 1.0 + 0.5 * x[0];
          cg[0] = 0.5;
          cg[1] = 0.0;
          cH[0][0] = cH[0][1] = cH[1][0] = cH[1][1] = 0.0;
          const double ph = kk * (e[0] * x[0] + e[1] * x[1]);
          const double s = std::sin(ph), co = std::cos(ph);
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              H[a][b] += cH[a][b] * s / (kk * kk) + (cg[a] * e[b] + e[a] * cg[b]) * co / kk - c * e[a] * e[b] * s;
        }
      }
      vals[4 * i] = H[0][0];
      vals[4 * i + 1] = H[0][1];
      vals[4 * i + 2] = H[1][0];
      vals[4 * i + 3] = H[1][1];
    }
    return functional_eval(h, grid, 4, vals, &mask);
  };

  CofactorReport r;
  r.base = functional(0);
  r.rows.resize(ks.size());
  parallel_for(ks.size(), [&](std::size_t i) {
    const double v = functional(ks[i]);
    r.rows[i] = CofactorRow{ks[i], v, std::abs(v - r.base)};
  });
  std::vector<double> lx, ly;
  for (const auto& row : r.rows)
    if (row.gap > 0.0) {
      lx.push_back(std::log(static_cast<double>(row.k)));
      ly.push_back(std::log(row.gap));
    }
  r.rate = lx.size() == r.rows.size() ? least_squares_slope(lx, ly) : 0.0;
  return r;
}

// Reports -------------------------------------------------------------------------------------

std::string SequenceReport::csv() const {
  std::string out = "k,norm_lp";
  for (std::size_t i = 0; i < integrands.size(); ++i) out += i == 0 ? ",I" : ",I_" + integrands[i];
  const std::size_t npair = rows.empty() ? 0 : rows.front().pairings.size();
  for (std::size_t i = 0; i < npair; ++i) out += ",pair_" + std::to_string(i);
  const bool neg = !rows.empty() && rows.front().neg_norm.has_value();
  if (neg) out += ",neg_norm";
  out += ",boundary_fraction\n";
  for (const auto& r : rows) {
    out += std::to_string(r.k) + "," + format_double(r.lp_norm);
    for (double v : r.functionals) out += "," + format_double(v);
    for (double v : r.pairings) out += "," + format_double(v);
    if (neg) out += "," + format_double(r.neg_norm.value_or(0.0));
    out += "," + format_double(r.boundary_fraction) + "\n";
  }
  return out;
}

json SequenceReport::sidecar() const {
  json j = metadata;
  j["name"] = name;
  j["p"] = p;
  j["integrands"] = integrands;
  j["rows"] = rows.size();
  std::vector<int> ks;
  for (const auto& r : rows) ks.push_back(r.k);
  j["k"] = ks;
  return j;
}

void SequenceReport::write(const std::string& path) const {
  write_file_atomic(path, csv());
  write_file_atomic(path + ".json", sidecar().dump(2) + "\n");
}

SequenceReport sequence_report(const std::string& name, const SequenceGenerator& gen, std::span<const int> ks,
                               const std::vector<const Integrand*>& integrands, const SequenceOptions& opts) {
  SequenceReport rep;
  rep.name = name;
  rep.p = opts.p;
  for (const auto* h : integrands) rep.integrands.push_back(h->name());
  rep.rows.resize(ks.size());
  std::vector<json> infos(ks.size());
  parallel_for(ks.size(), [&](std::size_t i) {
    const auto mem = gen(ks[i]);
    SequenceRow row;
    row.k = ks[i];
    const auto& f = mem.field;
    row.lp_norm = mem.quadrature ? std::pow(mem.quadrature->lp_norm_p(opts.p), 1.0 / opts.p) : lp_norm(f, opts.p);
    for (const auto* h : integrands)
      row.functionals.push_back(mem.quadrature ? mem.quadrature->integrate(*h) : functional_eval(*h, f));
    row.pairings = battery_pairings(mem, weak_battery(f.grid().n(), f.m()));
    if (opts.op) {
      CutoffSpec eta = opts.cutoff;
      if (eta.center.empty()) eta.center.assign(static_cast<std::size_t>(f.grid().n()), 0.0);
      row.neg_norm = truncated_neg_norm(*opts.op, f, eta, SolverOptions{});
    }
    row.boundary_fraction = member_boundary_mass(mem, opts.band_width, opts.p, 8).fraction;
    for (double v : row.functionals)
      if (!std::isfinite(v)) throw Error("sequence report: non-finite functional value");
    rep.rows[i] = std::move(row);
    infos[i] = mem.info;
  });
  rep.metadata["members"] = infos;
  rep.metadata["band_width"] = opts.band_width;
  rep.metadata["battery"] = "ten Gaussian fields, centers 0.45 (cos, sin)(0.7 + 2.1 j), widths 0.35 + 0.05 (j mod 4)";
  if (opts.op) {
    rep.metadata["operator"] = opts.op->name();
    rep.metadata["cutoff"] = {{"center", opts.cutoff.center}, {"r_in", opts.cutoff.r_in}, {"r_out", opts.cutoff.r_out}};
  }
  return rep;
}

}  // namespace afreeqc
