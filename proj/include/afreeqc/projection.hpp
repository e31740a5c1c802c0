#pragma once

#include "afreeqc/fields.hpp"
#include "afreeqc/symbol.hpp"

#include <optional>
#include <vector>

namespace afreeqc {

/// Fourier multiplier T onto A-free periodic fields: u^(xi) -> P(xi/|xi|) u^(xi)
/// for xi != 0, zero at xi = 0 and at Nyquist frequencies. P(w) is the
/// orthogonal projector onto ker A(w), so T is an L^2-orthogonal projection.
class AfreeProjector {
 public:
  /// Verifies constant rank (ConstantRankViolation otherwise) and tabulates
  /// the per-frequency projectors for the grid.
  AfreeProjector(OperatorA op, GridSpec grid);

  const OperatorA& op() const { return op_; }
  const GridSpec& grid() const { return grid_; }
  int rank() const { return rank_; }

  SpectralField apply(const SpectralField& u) const;
  PeriodicField apply(const PeriodicField& u) const;
  /// Node-major values in, node-major values out.
  std::vector<double> apply_values(std::span<const double> values) const;

 private:
  OperatorA op_;
  GridSpec grid_;
  int rank_ = 0;
  std::vector<double> proj_;  // m*m row-major per DFT index; empty block = zero
};

PeriodicField project_afree(const OperatorA& op, const PeriodicField& u);

struct ProjectionReport {
  double residual_afree = 0.0;
  double idempotence_gap = 0.0;
  std::vector<double> mean_of_tu;
  /// ||u - a_u - Tu||_2 / ||A u||_{H^-1_#}; empty when the denominator < 1e-14.
  std::optional<double> poincare_ratio;
  double complement_norm = 0.0;
  double constraint_norm = 0.0;
};

ProjectionReport projection_report(const OperatorA& op, const PeriodicField& u);
ProjectionReport projection_report(const AfreeProjector& proj, const PeriodicField& u);

}  // namespace afreeqc
