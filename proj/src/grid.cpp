#include "afreeqc/grid.hpp"

#include "afreeqc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace afreeqc {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

double dot_offset(std::span<const double> x, const std::vector<double>& c,
                  const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - c[i]) * v[i];
  return s;
}

double dist2(std::span<const double> x, const std::vector<double>& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - c[i]) * (x[i] - c[i]);
  return s;
}

}  // namespace

GridSpec::GridSpec(std::vector<int> points, std::vector<double> lo, std::vector<double> hi)
    : points_(std::move(points)), lo_(std::move(lo)), hi_(std::move(hi)), size_(1) {
  if (points_.empty()) throw InvalidArgument("grid needs at least one axis");
  if (lo_.size() != points_.size() || hi_.size() != points_.size())
    throw InvalidArgument("grid box has wrong dimension");
  for (std::size_t a = 0; a < points_.size(); ++a) {
    if (points_[a] < 8 || !is_power_of_two(points_[a]))
      throw InvalidArgument("grid points per axis must be a power of two >= 8, got " +
                            std::to_string(points_[a]));
    if (!(hi_[a] > lo_[a]) || !std::isfinite(lo_[a]) || !std::isfinite(hi_[a]))
      throw InvalidArgument("grid box must have positive finite extent");
    size_ *= static_cast<std::size_t>(points_[a]);
  }
}

GridSpec GridSpec::unit_cube(int n, int N) { return cube(n, N, -0.5, 0.5); }

GridSpec GridSpec::cube(int n, int N, double lo, double hi) {
  if (n < 1) throw InvalidArgument("grid dimension must be positive");
  return GridSpec(std::vector<int>(static_cast<std::size_t>(n), N),
                  std::vector<double>(static_cast<std::size_t>(n), lo),
                  std::vector<double>(static_cast<std::size_t>(n), hi));
}

double GridSpec::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < n(); ++a) v *= h(a);
  return v;
}

double GridSpec::volume() const {
  double v = 1.0;
  for (int a = 0; a < n(); ++a) v *= extent(a);
  return v;
}

void GridSpec::unravel(std::size_t idx, std::span<int> j) const {
  for (int a = n() - 1; a >= 0; --a) {
    const auto p = static_cast<std::size_t>(points(a));
    j[static_cast<std::size_t>(a)] = static_cast<int>(idx % p);
    idx /= p;
  }
}

std::size_t GridSpec::ravel(std::span<const int> j) const {
  std::size_t idx = 0;
  for (int a = 0; a < n(); ++a) idx = idx * static_cast<std::size_t>(points(a)) + static_cast<std::size_t>(j[a]);
  return idx;
}

void GridSpec::node(std::size_t idx, std::span<double> x) const {
  for (int a = n() - 1; a >= 0; --a) {
    const auto p = static_cast<std::size_t>(points(a));
    const auto j = static_cast<double>(idx % p);
    idx /= p;
    x[static_cast<std::size_t>(a)] = lo(a) + (j + 0.5) * h(a);
  }
}

std::vector<double> GridSpec::node(std::size_t idx) const {
  std::vector<double> x(static_cast<std::size_t>(n()));
  node(idx, x);
  return x;
}

int GridSpec::frequency(int axis, int j) const {
  const int N = points(axis);
  return 2 * j < N ? j : j - N;
}

bool domain_contains(const DomainSpec& dom, std::span<const double> x) {
  return std::visit(
      [&](const auto& d) -> bool {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, BallDomain>) {
          return dist2(x, d.center) < d.radius * d.radius;
        } else if constexpr (std::is_same_v<T, HalfBallDomain>) {
          return dist2(x, d.center) < d.radius * d.radius && dot_offset(x, d.center, d.normal) < 0.0;
        } else if constexpr (std::is_same_v<T, BoxDomain>) {
          for (std::size_t i = 0; i < x.size(); ++i)
            if (!(x[i] > d.lo[i] && x[i] < d.hi[i])) return false;
          return true;
        } else {
          throw InvalidArgument("explicit masks carry no geometry");
        }
      },
      dom);
}

Mask make_mask(const GridSpec& grid, const DomainSpec& dom) {
  Mask mask(grid.size());
  std::vector<double> x(static_cast<std::size_t>(grid.n()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.node(i, x);
    mask[i] = domain_contains(dom, x) ? 1 : 0;
  }
  return mask;
}

Mask mask_and(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw InvalidArgument("mask sizes differ");
  Mask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && b[i]) ? 1 : 0;
  return out;
}

std::size_t mask_count(const Mask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
}

Mask boundary_band(const GridSpec& grid, const Mask& mask, double width) {
  const int n = grid.n();
  double hmin = grid.h(0);
  for (int a = 1; a < n; ++a) hmin = std::min(hmin, grid.h(a));
  std::vector<int> reach(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) reach[static_cast<std::size_t>(a)] = static_cast<int>(std::ceil(width / grid.h(a)));

  Mask band(grid.size(), 0);
  std::vector<int> j(static_cast<std::size_t>(n)), k(static_cast<std::size_t>(n)), off(static_cast<std::size_t>(n));
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (!mask[idx]) continue;
    grid.unravel(idx, j);
    bool near = false;
    // scan the offset box  |off_a| <= reach_a
    for (int a = 0; a < n; ++a) off[static_cast<std::size_t>(a)] = -reach[static_cast<std::size_t>(a)];
    while (!near) {
      double d2 = 0.0;
      bool outside_box = false;
      for (int a = 0; a < n; ++a) {
        const auto sa = static_cast<std::size_t>(a);
        k[sa] = j[sa] + off[sa];
        d2 += (off[sa] * grid.h(a)) * (off[sa] * grid.h(a));
        if (k[sa] < 0 || k[sa] >= grid.points(a)) outside_box = true;
      }
      if (d2 <= width * width + 1e-12 * hmin * hmin) {
        if (outside_box || !mask[grid.ravel(k)]) near = true;
      }
      int a = n - 1;
      while (a >= 0) {
        const auto sa = static_cast<std::size_t>(a);
        if (++off[sa] <= reach[sa]) break;
        off[sa] = -reach[sa];
        --a;
      }
      if (a < 0) break;
    }
    band[idx] = near ? 1 : 0;
  }
  return band;
}

}  // namespace afreeqc
