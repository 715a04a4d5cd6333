#pragma once

// Control laws acting on the filter estimate: the impulsive law that keeps
// C xhat at zero, plus zero and proportional baselines.

#include <variant>

#include "beamtrack/errors.hpp"
#include "beamtrack/model.hpp"

namespace beamtrack {

namespace detail {

inline Eigen::PartialPivLU<Matrix2> cb_factor(const SystemMatrices& m) {
  const Matrix2 cb = m.C * m.B;
  if (!(std::abs(cb.determinant()) > 1e-12 * std::max(1.0, cb.squaredNorm()))) {
    throw ValidationError("optimal control: C B is singular");
  }
  return Eigen::PartialPivLU<Matrix2>(cb);
}

}  // namespace detail

/// Continuous part of the control, held over a sampling step.
///   optimal:      u = -(C B)^{-1} (C A + Cdot) xhat
///   zero:         u = 0
///   proportional: u = -K C xhat
[[nodiscard]] inline Vector2 continuous_control(const ControlLaw& law, const Vector& xhat,
                                                const SystemMatrices& m) {
  if (std::holds_alternative<OptimalLaw>(law)) {
    const Vector2 drift = (m.C * m.A + m.Cdot) * xhat;
    return -detail::cb_factor(m).solve(drift);
  }
  if (const auto* p = std::get_if<ProportionalLaw>(&law)) {
    return -p->gain * (m.C * xhat);
  }
  return Vector2::Zero();
}

/// State increment applied at a detection: -B (C B)^{-1} C M r for the
/// optimal law, zero otherwise. It is added to both the estimate and the plant.
[[nodiscard]] inline Vector event_impulse(const ControlLaw& law, const Vector2& r,
                                          const Matrix& gain_m, const SystemMatrices& m) {
  if (!std::holds_alternative<OptimalLaw>(law)) return Vector::Zero(m.n());
  const Vector2 cmr = m.C * (gain_m * r);
  return -m.B * detail::cb_factor(m).solve(cmr);
}

}  // namespace beamtrack
