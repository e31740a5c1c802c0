#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace afreeqc {

/// Uniform cell-centred grid over an axis-aligned box; node j on axis a sits at
/// lo[a] + (j + 1/2) h[a]. Linear node index is row-major, axis 0 slowest.
class GridSpec {
 public:
  GridSpec(std::vector<int> points, std::vector<double> lo, std::vector<double> hi);

  /// The unit cube Q = (-1/2, 1/2)^n with N points per axis.
  static GridSpec unit_cube(int n, int N);
  /// The box (lo, hi)^n with N points per axis.
  static GridSpec cube(int n, int N, double lo, double hi);

  int n() const { return static_cast<int>(points_.size()); }
  int points(int axis) const { return points_[static_cast<std::size_t>(axis)]; }
  std::span<const int> points() const { return points_; }
  double lo(int axis) const { return lo_[static_cast<std::size_t>(axis)]; }
  double hi(int axis) const { return hi_[static_cast<std::size_t>(axis)]; }
  double extent(int axis) const { return hi(axis) - lo(axis); }
  double h(int axis) const { return extent(axis) / points(axis); }
  std::size_t size() const { return size_; }
  double cell_volume() const;
  double volume() const;

  /// Coordinates of node idx written to x (length n).
  void node(std::size_t idx, std::span<double> x) const;
  std::vector<double> node(std::size_t idx) const;
  /// Per-axis integer index of node idx.
  void unravel(std::size_t idx, std::span<int> j) const;
  std::size_t ravel(std::span<const int> j) const;

  /// Signed integer frequency of DFT index j on an axis (Nyquist maps to -N/2).
  int frequency(int axis, int j) const;
  bool is_nyquist(int axis, int j) const { return 2 * j == points(axis); }

  bool operator==(const GridSpec& o) const {
    return points_ == o.points_ && lo_ == o.lo_ && hi_ == o.hi_;
  }

 private:
  std::vector<int> points_;
  std::vector<double> lo_, hi_;
  std::size_t size_;
};

/// Open ball |x - c| < r.
struct BallDomain {
  std::vector<double> center;
  double radius = 1.0;
};

/// Half ball {|x - c| < r, (x - c) . normal < 0}.
struct HalfBallDomain {
  std::vector<double> center;
  double radius = 1.0;
  std::vector<double> normal;
};

struct BoxDomain {
  std::vector<double> lo, hi;
};

/// Mask given node by node; carries no geometry.
struct ExplicitMaskDomain {};

using DomainSpec = std::variant<BallDomain, HalfBallDomain, BoxDomain, ExplicitMaskDomain>;

bool domain_contains(const DomainSpec& dom, std::span<const double> x);

using Mask = std::vector<std::uint8_t>;

Mask make_mask(const GridSpec& grid, const DomainSpec& dom);
Mask mask_and(const Mask& a, const Mask& b);
std::size_t mask_count(const Mask& mask);

/// Nodes of the mask lying within `width` (Euclidean) of a node outside the
/// mask or of the box boundary.
Mask boundary_band(const GridSpec& grid, const Mask& mask, double width);

}  // namespace afreeqc
