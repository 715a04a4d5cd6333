#pragma once

// Truth-side simulation: Euler-Maruyama station states, received-power
// processes, cross-coupled Poisson rates and space-time photodetection events.

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>
#include <variant>
#include <vector>

#include "beamtrack/model.hpp"
#include "beamtrack/rng.hpp"
#include "beamtrack/symmat.hpp"

namespace beamtrack {

struct TruthState {
  Vector x_a;
  Vector x_b;
  double nu_a = 0.0;
  double nu_b = 0.0;

  [[nodiscard]] const Vector& x(Station s) const { return s == Station::a ? x_a : x_b; }
  [[nodiscard]] Vector& x(Station s) { return s == Station::a ? x_a : x_b; }
  [[nodiscard]] double nu(Station s) const { return s == Station::a ? nu_a : nu_b; }
};

/// One photodetection: time, detector-plane location, receiving station.
struct Event {
  double t = 0.0;
  Vector2 r = Vector2::Zero();
  Station station = Station::a;

  friend bool operator==(const Event& x, const Event& y) {
    return x.t == y.t && x.r == y.r && x.station == y.station;
  }
};

inline bool event_order(const Event& x, const Event& y) {
  return std::tie(x.t, x.station) < std::tie(y.t, y.station);
}

inline Vector standard_normal(Eigen::Index size, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector z(size);
  for (Eigen::Index i = 0; i < size; ++i) z(i) = normal(rng);
  return z;
}

/// x' = x + (A x + B u) dt + D sqrt(dt) z.
[[nodiscard]] inline Vector step_truth(const Vector& x, const Vector2& u, const SystemMatrices& m,
                                       double dt, Rng& rng) {
  const Vector z = standard_normal(m.D.cols(), rng);
  return x + (m.A * x + m.B * u) * dt + m.D * (std::sqrt(dt) * z);
}

/// Samples nu = eta * P on a dt grid, holding each value over its step.
class PowerSampler {
 public:
  PowerSampler(PowerModel model, double eta) : model_(std::move(model)), eta_(eta) {}

  double sample(double t, double dt, Rng& rng) {
    return std::visit([&](const auto& p) { return eta_ * draw(p, t, dt, rng); }, model_);
  }

 private:
  double draw(const ConstantPower& p, double, double, Rng&) { return p.P; }

  double draw(const OokPower& p, double t, double, Rng& rng) {
    const auto bit = static_cast<long long>(std::floor(t / p.bit_duration + 1e-9));
    if (bit != bit_index_) {
      bit_index_ = bit;
      bit_on_ = std::bernoulli_distribution(p.duty)(rng);
    }
    return bit_on_ ? p.P : 0.0;
  }

  // log F is a stationary Ornstein-Uhlenbeck path with mean -s^2/2, so E[F] = 1.
  double draw(const LognormalFade& p, double, double dt, Rng& rng) {
    const double s = p.sigma_log;
    const double mean = -0.5 * s * s;
    std::normal_distribution<double> normal;
    if (!fade_started_) {
      log_fade_ = mean + s * normal(rng);
      fade_started_ = true;
    } else {
      const double decay = std::exp(-dt / p.tau_corr);
      log_fade_ = mean + (log_fade_ - mean) * decay + s * std::sqrt(1.0 - decay * decay) * normal(rng);
    }
    return p.P_mean * std::exp(log_fade_);
  }

  PowerModel model_;
  double eta_;
  long long bit_index_ = -1;
  bool bit_on_ = false;
  bool fade_started_ = false;
  double log_fade_ = 0.0;
};

inline double sample_power(PowerSampler& sampler, double t, double dt, Rng& rng) {
  return sampler.sample(t, dt, rng);
}

/// Detection rate of station i: nu_i exp(-rho |C x_j|^2), x_j the opposite station.
[[nodiscard]] inline double mu(double nu_i, const Vector& x_j, const Matrix& c, double rho) {
  return nu_i * std::exp(-rho * (c * x_j).squaredNorm());
}

/// Space-time events of station i over [t0, t0 + dt) with rates frozen at t0.
/// Candidates arrive at the dominating rate nu_i and are kept with
/// probability mu / nu_i; locations are N(C x_i, R).
[[nodiscard]] inline std::vector<Event> generate_events(Station station, double t0, double dt,
                                                        double nu_i, const Vector& x_j,
                                                        const Vector& x_i, const Matrix& c,
                                                        double rho, const SymMat& r_shape,
                                                        Rng& rng) {
  std::vector<Event> out;
  if (!(nu_i > 0.0)) return out;
  const double accept = mu(nu_i, x_j, c, rho) / nu_i;
  const int candidates = std::poisson_distribution<int>(nu_i * dt)(rng);
  if (candidates == 0) return out;
  const Matrix2 chol = Matrix2(r_shape.matrix()).llt().matrixL();
  const Vector2 centre = c * x_i;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  for (int k = 0; k < candidates; ++k) {
    double t = t0 + dt * unit(rng);
    if (t >= t0 + dt) t = std::nextafter(t0 + dt, t0);
    if (unit(rng) >= accept) continue;
    const Vector2 z(normal(rng), normal(rng));
    out.push_back({t, centre + chol * z, station});
  }
  std::sort(out.begin(), out.end(), event_order);
  return out;
}

}  // namespace beamtrack
