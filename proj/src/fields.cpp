#include "afreeqc/fields.hpp"

#include "afreeqc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace afreeqc {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidArgument(std::string(what) + ": non-finite value");
}

// exp(-2 pi i xi . (lo + h/2) / L) for every DFT index.
std::vector<Complex> node_phase(const GridSpec& grid) {
  std::vector<Complex> phase(grid.size());
  std::vector<int> j(static_cast<std::size_t>(grid.n()));
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    grid.unravel(idx, j);
    double arg = 0.0;
    for (int a = 0; a < grid.n(); ++a) {
      const double xi = grid.frequency(a, j[static_cast<std::size_t>(a)]);
      arg -= kTwoPi * xi * (grid.lo(a) + 0.5 * grid.h(a)) / grid.extent(a);
    }
    phase[idx] = std::polar(1.0, arg);
  }
  return phase;
}

// 1 + |k|^2 for every DFT index.
std::vector<double> h1_symbol(const GridSpec& grid) {
  std::vector<double> s(grid.size());
  std::vector<int> j(static_cast<std::size_t>(grid.n()));
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    grid.unravel(idx, j);
    double k2 = 0.0;
    for (int a = 0; a < grid.n(); ++a) {
      const double k = kTwoPi * grid.frequency(a, j[static_cast<std::size_t>(a)]) / grid.extent(a);
      k2 += k * k;
    }
    s[idx] = 1.0 + k2;
  }
  return s;
}

}  // namespace

// SpectralField ---------------------------------------------------------------

SpectralField::SpectralField(GridSpec grid, int components)
    : grid_(std::move(grid)), components_(components),
      coeffs_(grid_.size() * static_cast<std::size_t>(components)) {
  if (components < 1) throw InvalidArgument("spectral field needs at least one component");
}

std::span<Complex> SpectralField::component(int c) {
  return std::span<Complex>(coeffs_).subspan(static_cast<std::size_t>(c) * grid_.size(), grid_.size());
}

std::span<const Complex> SpectralField::component(int c) const {
  return std::span<const Complex>(coeffs_).subspan(static_cast<std::size_t>(c) * grid_.size(), grid_.size());
}

void SpectralField::wavevector(std::size_t idx, std::span<double> k) const {
  std::vector<int> j(static_cast<std::size_t>(grid_.n()));
  grid_.unravel(idx, j);
  for (int a = 0; a < grid_.n(); ++a)
    k[static_cast<std::size_t>(a)] = kTwoPi * grid_.frequency(a, j[static_cast<std::size_t>(a)]) / grid_.extent(a);
}

bool SpectralField::nyquist(std::size_t idx) const {
  std::vector<int> j(static_cast<std::size_t>(grid_.n()));
  grid_.unravel(idx, j);
  for (int a = 0; a < grid_.n(); ++a)
    if (grid_.is_nyquist(a, j[static_cast<std::size_t>(a)])) return true;
  return false;
}

SpectralField forward_transform(const GridSpec& grid, int components, std::span<const double> values) {
  const std::size_t nodes = grid.size();
  if (values.size() != nodes * static_cast<std::size_t>(components))
    throw InvalidArgument("forward_transform: value count does not match grid");
  SpectralField out(grid, components);
  const auto phase = node_phase(grid);
  const double scale = 1.0 / static_cast<double>(nodes);
  for (int c = 0; c < components; ++c) {
    auto buf = out.component(c);
    for (std::size_t i = 0; i < nodes; ++i) buf[i] = values[i * static_cast<std::size_t>(components) + static_cast<std::size_t>(c)];
    fft::transform(grid.points(), buf, true);
    for (std::size_t i = 0; i < nodes; ++i) buf[i] *= phase[i] * scale;
  }
  return out;
}

std::vector<double> inverse_transform(const SpectralField& s) {
  const auto& grid = s.grid();
  const std::size_t nodes = grid.size();
  const auto m = static_cast<std::size_t>(s.components());
  const auto phase = node_phase(grid);
  std::vector<double> out(nodes * m);
  std::vector<Complex> buf(nodes);
  for (std::size_t c = 0; c < m; ++c) {
    auto src = s.component(static_cast<int>(c));
    for (std::size_t i = 0; i < nodes; ++i) buf[i] = src[i] * std::conj(phase[i]);
    fft::transform(grid.points(), buf, false);
    for (std::size_t i = 0; i < nodes; ++i) out[i * m + c] = buf[i].real();
  }
  return out;
}

// PeriodicField ---------------------------------------------------------------

PeriodicField::PeriodicField(GridSpec grid, int m, std::vector<double> values)
    : grid_(std::move(grid)), m_(m), values_(std::move(values)), cache_(std::make_shared<Cache>()) {
  if (m < 1) throw InvalidArgument("field needs at least one component");
  if (values_.size() != grid_.size() * static_cast<std::size_t>(m))
    throw InvalidArgument("periodic field: value count does not match grid");
  check_finite(values_, "periodic field");
}

PeriodicField PeriodicField::from_function(GridSpec grid, int m, const PointFunction& f) {
  std::vector<double> v(grid.size() * static_cast<std::size_t>(m));
  std::vector<double> x(static_cast<std::size_t>(grid.n()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, x);
    f(x, std::span<double>(v).subspan(i * static_cast<std::size_t>(m), static_cast<std::size_t>(m)));
  }
  return PeriodicField(std::move(grid), m, std::move(v));
}

std::vector<double> PeriodicField::mean() const {
  std::vector<double> a(static_cast<std::size_t>(m_), 0.0);
  for (std::size_t i = 0; i < grid_.size(); ++i)
    for (int c = 0; c < m_; ++c) a[static_cast<std::size_t>(c)] += values_[i * static_cast<std::size_t>(m_) + static_cast<std::size_t>(c)];
  for (auto& v : a) v /= static_cast<double>(grid_.size());
  return a;
}

const SpectralField& PeriodicField::spectrum() const {
  std::call_once(cache_->once, [&] {
    cache_->spectrum = std::make_unique<SpectralField>(forward_transform(grid_, m_, values_));
  });
  return *cache_->spectrum;
}

// DomainField -----------------------------------------------------------------

DomainField::DomainField(GridSpec grid, Mask mask, int m, std::vector<double> values, DomainSpec domain)
    : grid_(std::move(grid)), mask_(std::move(mask)), m_(m), values_(std::move(values)), domain_(std::move(domain)) {
  if (m < 1) throw InvalidArgument("field needs at least one component");
  if (mask_.size() != grid_.size()) throw InvalidArgument("domain field: mask does not match grid");
  if (values_.size() != grid_.size() * static_cast<std::size_t>(m))
    throw InvalidArgument("domain field: value count does not match grid");
  if (mask_count(mask_) == 0) throw InvalidArgument("domain field: empty mask");
  check_finite(values_, "domain field");
  for (std::size_t i = 0; i < grid_.size(); ++i)
    if (!mask_[i])
      for (int c = 0; c < m_; ++c) values_[i * static_cast<std::size_t>(m_) + static_cast<std::size_t>(c)] = 0.0;
}

DomainField DomainField::from_function(GridSpec grid, const DomainSpec& domain, int m, const PointFunction& f) {
  Mask mask = make_mask(grid, domain);
  std::vector<double> v(grid.size() * static_cast<std::size_t>(m), 0.0);
  std::vector<double> x(static_cast<std::size_t>(grid.n()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!mask[i]) continue;
    grid.node(i, x);
    f(x, std::span<double>(v).subspan(i * static_cast<std::size_t>(m), static_cast<std::size_t>(m)));
  }
  return DomainField(std::move(grid), std::move(mask), m, std::move(v), domain);
}

DomainField DomainField::zeros(GridSpec grid, Mask mask, int m, DomainSpec domain) {
  std::vector<double> v(grid.size() * static_cast<std::size_t>(m), 0.0);
  return DomainField(std::move(grid), std::move(mask), m, std::move(v), std::move(domain));
}

DomainField DomainField::with_mask(Mask mask, DomainSpec domain) const {
  return DomainField(grid_, std::move(mask), m_, values_, std::move(domain));
}

double DomainField::measure() const { return static_cast<double>(mask_count(mask_)) * grid_.cell_volume(); }

// Norms -----------------------------------------------------------------------

double lp_norm(const GridSpec& grid, int m, std::span<const double> values, double p, const Mask* region) {
  if (!(p > 0.0) || !std::isfinite(p)) throw InvalidArgument("lp_norm: exponent must be finite and positive");
  double sum = 0.0;
  const auto mm = static_cast<std::size_t>(m);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (region != nullptr && !(*region)[i]) continue;
    double s2 = 0.0;
    for (std::size_t c = 0; c < mm; ++c) {
      const double v = values[i * mm + c];
      if (!std::isfinite(v)) throw InvalidArgument("lp_norm: non-finite value");
      s2 += v * v;
    }
    sum += std::pow(s2, 0.5 * p);
  }
  return std::pow(sum * grid.cell_volume(), 1.0 / p);
}

double lp_norm(const PeriodicField& u, double p) { return lp_norm(u.grid(), u.m(), u.values(), p); }

double lp_norm(const DomainField& u, double p) { return lp_norm(u.grid(), u.m(), u.values(), p, &u.mask()); }

// Operator application ----------------------------------------------------------

SpectralField apply_A_spectral(const OperatorA& op, const SpectralField& u) {
  const auto& grid = u.grid();
  if (op.n() != grid.n()) throw InvalidArgument("operator dimension n does not match grid");
  if (op.m() != u.components()) throw InvalidArgument("operator m does not match field components");
  SpectralField out(grid, op.d());
  std::vector<double> k(static_cast<std::size_t>(grid.n()));
  std::vector<int> j(static_cast<std::size_t>(grid.n()));
  const Complex I(0.0, 1.0);
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    grid.unravel(idx, j);
    bool nyq = false;
    for (int a = 0; a < grid.n(); ++a) {
      nyq = nyq || grid.is_nyquist(a, j[static_cast<std::size_t>(a)]);
      k[static_cast<std::size_t>(a)] = kTwoPi * grid.frequency(a, j[static_cast<std::size_t>(a)]) / grid.extent(a);
    }
    if (nyq) continue;
    for (int r = 0; r < op.d(); ++r) {
      Complex acc = 0.0;
      for (int i = 0; i < op.n(); ++i) {
        const double ki = k[static_cast<std::size_t>(i)];
        if (ki == 0.0) continue;
        const auto& a = op.coeff(i);
        for (int c = 0; c < op.m(); ++c)
          if (a(r, c) != 0.0) acc += ki * a(r, c) * u.component(c)[idx];
      }
      out.component(r)[idx] = I * acc;
    }
  }
  return out;
}

SpectralField apply_A_periodic(const OperatorA& op, const PeriodicField& u) {
  return apply_A_spectral(op, u.spectrum());
}

double hminus1_norm_periodic(const SpectralField& g) {
  const auto& grid = g.grid();
  const auto sym = h1_symbol(grid);
  double sum = 0.0;
  for (int c = 0; c < g.components(); ++c) {
    auto comp = g.component(c);
    for (std::size_t i = 0; i < grid.size(); ++i) sum += std::norm(comp[i]) / sym[i];
  }
  return std::sqrt(grid.volume() * sum);
}

// DomainNormSolver -----------------------------------------------------------------

DomainNormSolver::DomainNormSolver(GridSpec grid, Mask mask, SolverOptions opts)
    : grid_(std::move(grid)), mask_(std::move(mask)), opts_(opts), symbol_(h1_symbol(grid_)) {
  if (mask_.size() != grid_.size()) throw InvalidArgument("solver mask does not match grid");
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i]) index_.push_back(i);
  if (index_.empty()) throw InvalidArgument("solver mask is empty");

  using M = SolverOptions::Method;
  dense_ = opts_.method == M::Cholesky || (opts_.method == M::Automatic && index_.size() <= opts_.dense_limit);
  if (!dense_) return;

  // Kernel of (1 - Laplacian) as a periodic convolution on the grid.
  const std::size_t nodes = grid_.size();
  std::vector<Complex> kern(nodes);
  for (std::size_t i = 0; i < nodes; ++i) kern[i] = symbol_[i] / static_cast<double>(nodes);
  fft::transform(grid_.points(), kern, false);

  const auto nu = static_cast<Eigen::Index>(index_.size());
  Matrix a(nu, nu);
  const int n = grid_.n();
  std::vector<std::vector<int>> multi(index_.size(), std::vector<int>(static_cast<std::size_t>(n)));
  for (std::size_t r = 0; r < index_.size(); ++r) grid_.unravel(index_[r], multi[r]);
  std::vector<int> diff(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < nu; ++r) {
    for (Eigen::Index c = 0; c <= r; ++c) {
      for (int ax = 0; ax < n; ++ax) {
        const int N = grid_.points(ax);
        const auto sa = static_cast<std::size_t>(ax);
        diff[sa] = ((multi[static_cast<std::size_t>(r)][sa] - multi[static_cast<std::size_t>(c)][sa]) % N + N) % N;
      }
      const double v = kern[grid_.ravel(diff)].real();
      a(r, c) = v;
      a(c, r) = v;
    }
  }
  factor_ = std::make_unique<Eigen::LLT<Matrix>>(a);
  if (factor_->info() != Eigen::Success) throw SolverError("Cholesky factorization failed", 0.0);
}

void DomainNormSolver::apply(std::span<const double> x, std::span<double> y, bool inverse) const {
  const std::size_t nodes = grid_.size();
  std::vector<Complex> buf(nodes, Complex(0.0, 0.0));
  for (std::size_t r = 0; r < index_.size(); ++r) buf[index_[r]] = x[r];
  fft::transform(grid_.points(), buf, true);
  const double scale = 1.0 / static_cast<double>(nodes);
  for (std::size_t i = 0; i < nodes; ++i) buf[i] *= (inverse ? 1.0 / symbol_[i] : symbol_[i]) * scale;
  fft::transform(grid_.points(), buf, false);
  for (std::size_t r = 0; r < index_.size(); ++r) y[r] = buf[index_[r]].real();
}

std::vector<double> DomainNormSolver::solve(std::span<const double> rhs) const {
  const std::size_t nu = index_.size();
  if (dense_) {
    Vector b(static_cast<Eigen::Index>(nu));
    for (std::size_t r = 0; r < nu; ++r) b[static_cast<Eigen::Index>(r)] = rhs[r];
    const Vector x = factor_->solve(b);
    last_iterations_ = 0;
    last_residual_ = 0.0;
    return std::vector<double>(x.data(), x.data() + nu);
  }

  // Preconditioned CG; the preconditioner is the restricted inverse symbol.
  std::vector<double> x(nu, 0.0), r(rhs.begin(), rhs.end()), z(nu), p(nu), q(nu);
  double bnorm = 0.0;
  for (double v : r) bnorm += v * v;
  bnorm = std::sqrt(bnorm);
  last_iterations_ = 0;
  last_residual_ = 0.0;
  if (bnorm == 0.0) return x;
  double resid = 0.0;
  apply(r, z, true);
  p = z;
  double rz = 0.0;
  for (std::size_t i = 0; i < nu; ++i) rz += r[i] * z[i];
  for (int it = 1; it <= opts_.max_iterations; ++it) {
    apply(p, q, false);
    double pq = 0.0;
    for (std::size_t i = 0; i < nu; ++i) pq += p[i] * q[i];
    const double alpha = rz / pq;
    double rr = 0.0;
    for (std::size_t i = 0; i < nu; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
      rr += r[i] * r[i];
    }
    resid = std::sqrt(rr) / bnorm;
    last_iterations_ = it;
    last_residual_ = resid;
    if (resid <= opts_.tolerance) return x;
    apply(r, z, true);
    double rz_new = 0.0;
    for (std::size_t i = 0; i < nu; ++i) rz_new += r[i] * z[i];
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < nu; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("conjugate gradients did not converge", resid);
}

double DomainNormSolver::norm_sq(std::span<const double> g, std::vector<double>* psi) const {
  if (g.size() != grid_.size()) throw InvalidArgument("norm_sq: functional does not match grid");
  std::vector<double> b(index_.size());
  for (std::size_t r = 0; r < index_.size(); ++r) b[r] = g[index_[r]];
  const auto x = solve(b);
  double s = 0.0;
  for (std::size_t r = 0; r < index_.size(); ++r) s += b[r] * x[r];
  if (psi != nullptr) {
    psi->assign(grid_.size(), 0.0);
    for (std::size_t r = 0; r < index_.size(); ++r) (*psi)[index_[r]] = x[r];
  }
  return std::max(0.0, s * grid_.cell_volume());
}

std::shared_ptr<const DomainNormSolver> shared_domain_solver(const GridSpec& grid, const Mask& mask,
                                                             SolverOptions opts) {
  struct Key {
    std::vector<int> points;
    std::vector<double> lo, hi;
    Mask mask;
    int method;
    double tol;
    bool operator<(const Key& o) const {
      return std::tie(points, lo, hi, mask, method, tol) < std::tie(o.points, o.lo, o.hi, o.mask, o.method, o.tol);
    }
  };
  static std::mutex mutex;
  static std::map<Key, std::shared_ptr<const DomainNormSolver>> cache;
  Key key;
  key.points.assign(grid.points().begin(), grid.points().end());
  for (int a = 0; a < grid.n(); ++a) {
    key.lo.push_back(grid.lo(a));
    key.hi.push_back(grid.hi(a));
  }
  key.mask = mask;
  key.method = static_cast<int>(opts.method);
  key.tol = opts.tolerance;
  std::lock_guard lock(mutex);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() > 32) cache.clear();
  auto solver = std::make_shared<const DomainNormSolver>(grid, mask, opts);
  cache.emplace(std::move(key), solver);
  return solver;
}

double hminus1_norm_domain(const OperatorA& op, const DomainField& u, SolverOptions opts) {
  const auto& grid = u.grid();
  const auto g = inverse_transform(apply_A_spectral(op, forward_transform(grid, u.m(), u.values())));
  DomainNormSolver solver(grid, u.mask(), opts);
  const auto d = static_cast<std::size_t>(op.d());
  std::vector<double> gj(grid.size());
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < grid.size(); ++i) gj[i] = g[i * d + j];
    total += solver.norm_sq(gj);
  }
  return std::sqrt(total);
}

// ConstraintNorm --------------------------------------------------------------------

ConstraintNorm::ConstraintNorm(OperatorA op, std::shared_ptr<const DomainNormSolver> solver)
    : op_(std::move(op)), solver_(std::move(solver)) {
  if (op_.n() != solver_->grid().n()) throw InvalidArgument("constraint: operator and grid dimensions differ");
}

double ConstraintNorm::value_sq(std::span<const double> phi, std::vector<double>* grad) const {
  const auto& grid = solver_->grid();
  const std::size_t nodes = grid.size();
  const auto d = static_cast<std::size_t>(op_.d());
  const auto g = inverse_transform(apply_A_spectral(op_, forward_transform(grid, op_.m(), phi)));
  std::vector<double> gj(nodes), psi;
  std::vector<double> rep(grad != nullptr ? nodes * d : 0);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < nodes; ++i) gj[i] = g[i * d + j];
    total += solver_->norm_sq(gj, grad != nullptr ? &psi : nullptr);
    if (grad != nullptr)
      for (std::size_t i = 0; i < nodes; ++i) rep[i * d + j] = psi[i];
  }
  if (grad != nullptr) {
    // gradient = 2 h^n G^T psi,  G^T = -sum_i A^(i)^T d_i
    const auto spec = forward_transform(grid, op_.d(), rep);
    SpectralField adj(grid, op_.m());
    std::vector<double> k(static_cast<std::size_t>(grid.n()));
    const Complex I(0.0, 1.0);
    for (std::size_t idx = 0; idx < nodes; ++idx) {
      if (spec.nyquist(idx)) continue;
      spec.wavevector(idx, k);
      for (int c = 0; c < op_.m(); ++c) {
        Complex acc = 0.0;
        for (int i = 0; i < op_.n(); ++i) {
          const double ki = k[static_cast<std::size_t>(i)];
          if (ki == 0.0) continue;
          for (int r = 0; r < op_.d(); ++r) acc += ki * op_.coeff(i)(r, c) * spec.component(r)[idx];
        }
        adj.component(c)[idx] = -I * acc;
      }
    }
    *grad = inverse_transform(adj);
    const double scale = 2.0 * grid.cell_volume();
    for (auto& v : *grad) v *= scale;
  }
  return total;
}

// Pairings ------------------------------------------------------------------------

double pair_weak(const DomainField& u, const DomainField& w) {
  if (!(u.grid() == w.grid()) || u.m() != w.m()) throw InvalidArgument("pair_weak: shapes differ");
  double s = 0.0;
  const auto vu = u.values();
  const auto vw = w.values();
  const auto m = static_cast<std::size_t>(u.m());
  for (std::size_t i = 0; i < u.grid().size(); ++i) {
    if (!u.mask()[i]) continue;
    for (std::size_t c = 0; c < m; ++c) s += vu[i * m + c] * vw[i * m + c];
  }
  return s * u.grid().cell_volume();
}

double pair_weak(const DomainField& u, const PointFunction& w) {
  const auto& grid = u.grid();
  const auto m = static_cast<std::size_t>(u.m());
  std::vector<double> x(static_cast<std::size_t>(grid.n())), wv(m);
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!u.mask()[i]) continue;
    grid.node(i, x);
    w(x, wv);
    const auto ui = u.at(i);
    for (std::size_t c = 0; c < m; ++c) s += ui[c] * wv[c];
  }
  return s * grid.cell_volume();
}

}  // namespace afreeqc
