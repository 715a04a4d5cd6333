#pragma once

// Conditional mean / covariance jump filter for space-time Poisson
// observations: Lyapunov drift between detections, Kalman-like jump at each.

#include "beamtrack/errors.hpp"
#include "beamtrack/model.hpp"
#include "beamtrack/symmat.hpp"

namespace beamtrack {

struct FilterState {
  Vector xhat;
  SymMat sigma;

  friend bool operator==(const FilterState& x, const FilterState& y) {
    return x.xhat.size() == y.xhat.size() && x.xhat == y.xhat && x.sigma == y.sigma;
  }
};

/// M = Sigma C^T (C Sigma C^T + R)^{-1}, n x 2.
[[nodiscard]] inline Matrix gain(const SymMat& sigma, const Matrix& c, const SymMat& r) {
  const Matrix cs = c * sigma.matrix();
  const Matrix2 k = cs * c.transpose() + r.matrix();
  if (!detail::is_pd_2x2(k)) throw NumericError("gain: C Sigma C^T + R is not positive definite");
  return k.llt().solve(cs).transpose();
}

/// Euler step of the between-event drift.
[[nodiscard]] inline FilterState predict(const FilterState& fs, const Vector2& u,
                                         const SystemMatrices& m, double dt) {
  const Matrix& s = fs.sigma.matrix();
  const Matrix as = m.A * s;
  return {fs.xhat + (m.A * fs.xhat + m.B * u) * dt,
          SymMat::symmetric_part(s + (as + as.transpose() + m.D * m.D.transpose()) * dt)};
}

/// Jump at a detection located at r.
[[nodiscard]] inline FilterState update_on_event(const FilterState& fs, const Vector2& r,
                                                 const Matrix& c, const SymMat& r_shape) {
  const Matrix mg = gain(fs.sigma, c, r_shape);
  const Vector2 innovation = r - c * fs.xhat;
  FilterState out{fs.xhat + mg * innovation,
                  SymMat::symmetric_part(fs.sigma.matrix() - mg * (c * fs.sigma.matrix()))};
  if (!is_positive_definite(out.sigma)) {
    throw NumericError("update_on_event: posterior covariance lost positive definiteness");
  }
  return out;
}

}  // namespace beamtrack
