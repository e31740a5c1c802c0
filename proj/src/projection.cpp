#include "afreeqc/projection.hpp"

#include "afreeqc/errors.hpp"

#include <cmath>

namespace afreeqc {

AfreeProjector::AfreeProjector(OperatorA op, GridSpec grid) : op_(std::move(op)), grid_(std::move(grid)) {
  if (op_.n() != grid_.n()) throw InvalidArgument("projector: operator and grid dimensions differ");
  const RankReport rep = check_constant_rank(op_);
  if (!rep.constant_rank())
    throw ConstantRankViolation("operator " + op_.name() + " violates the constant-rank property (ranks " +
                                std::to_string(rep.min_rank) + ".." + std::to_string(rep.max_rank) + ")");
  rank_ = rep.rank;

  const auto m = static_cast<std::size_t>(op_.m());
  proj_.assign(grid_.size() * m * m, 0.0);
  const int n = grid_.n();
  std::vector<int> j(static_cast<std::size_t>(n));
  for (std::size_t idx = 0; idx < grid_.size(); ++idx) {
    grid_.unravel(idx, j);
    Vector xi(n);
    bool nyq = false;
    for (int a = 0; a < n; ++a) {
      nyq = nyq || grid_.is_nyquist(a, j[static_cast<std::size_t>(a)]);
      xi[a] = grid_.frequency(a, j[static_cast<std::size_t>(a)]) / grid_.extent(a);
    }
    if (nyq || xi.squaredNorm() == 0.0) continue;
    // P(-w) = P(w); evaluate at a canonical sign so conjugate pairs match bitwise.
    for (int a = 0; a < n; ++a) {
      if (xi[a] != 0.0) {
        if (xi[a] < 0.0) xi = -xi;
        break;
      }
    }
    const Matrix p = kernel_projector(op_, xi / xi.norm(), rank_);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < m; ++c)
        proj_[idx * m * m + r * m + c] = p(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
}

SpectralField AfreeProjector::apply(const SpectralField& u) const {
  if (!(u.grid() == grid_) || u.components() != op_.m()) throw InvalidArgument("projector: field shape mismatch");
  const auto m = static_cast<std::size_t>(op_.m());
  SpectralField out(grid_, op_.m());
  for (std::size_t idx = 0; idx < grid_.size(); ++idx) {
    const double* p = &proj_[idx * m * m];
    for (std::size_t r = 0; r < m; ++r) {
      Complex acc = 0.0;
      for (std::size_t c = 0; c < m; ++c) acc += p[r * m + c] * u.component(static_cast<int>(c))[idx];
      out.component(static_cast<int>(r))[idx] = acc;
    }
  }
  return out;
}

std::vector<double> AfreeProjector::apply_values(std::span<const double> values) const {
  return inverse_transform(apply(forward_transform(grid_, op_.m(), values)));
}

PeriodicField AfreeProjector::apply(const PeriodicField& u) const {
  return PeriodicField(grid_, op_.m(), inverse_transform(apply(u.spectrum())));
}

PeriodicField project_afree(const OperatorA& op, const PeriodicField& u) {
  return AfreeProjector(op, u.grid()).apply(u);
}

ProjectionReport projection_report(const AfreeProjector& proj, const PeriodicField& u) {
  ProjectionReport rep;
  const PeriodicField tu = proj.apply(u);
  const PeriodicField ttu = proj.apply(tu);
  rep.residual_afree = hminus1_norm_periodic(apply_A_periodic(proj.op(), tu));

  const auto m = static_cast<std::size_t>(u.m());
  std::vector<double> diff(u.values().size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ttu.values()[i] - tu.values()[i];
  rep.idempotence_gap = lp_norm(u.grid(), u.m(), diff, 2.0);
  rep.mean_of_tu = tu.mean();

  const auto avg = u.mean();
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = u.values()[i] - avg[i % m] - tu.values()[i];
  rep.complement_norm = lp_norm(u.grid(), u.m(), diff, 2.0);
  rep.constraint_norm = hminus1_norm_periodic(apply_A_periodic(proj.op(), u));
  if (rep.constraint_norm >= 1e-14) rep.poincare_ratio = rep.complement_norm / rep.constraint_norm;
  return rep;
}

ProjectionReport projection_report(const OperatorA& op, const PeriodicField& u) {
  return projection_report(AfreeProjector(op, u.grid()), u);
}

}  // namespace afreeqc
