#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "beamtrack/dynamics.hpp"
#include "beamtrack/model.hpp"
#include "beamtrack/symmat.hpp"
#include "beamtrack/tracker.hpp"

namespace oracle {

using beamtrack::Matrix;
using beamtrack::Vector;

// n = 2 toy station with diagonal drift and diffusion, C = I, B = I.
struct ToyStation {
  double a1 = 1.0, a2 = 0.5;  // A = -diag(a1, a2)
  double d1 = 1.0, d2 = 0.7;  // D = diag(d1, d2)
  Eigen::Matrix2d R{{0.05, 0.02}, {0.02, 0.08}};
  Eigen::Vector2d x0{0.6, -0.4};
  Eigen::Matrix2d sigma0{{0.2, 0.05}, {0.05, 0.1}};

  [[nodiscard]] beamtrack::SystemMatrices matrices() const {
    const Matrix i2 = Matrix::Identity(2, 2);
    Matrix a = Matrix::Zero(2, 2), d = Matrix::Zero(2, 2);
    a(0, 0) = -a1;
    a(1, 1) = -a2;
    d(0, 0) = d1;
    d(1, 1) = d2;
    return {a, i2, i2, d, Matrix::Zero(2, 2)};
  }
};

struct Moments {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
};

// Discretized Bayes: density on a uniform square grid, propagated with the
// exact Ornstein-Uhlenbeck transition kernel between detections and
// multiplied by the Gaussian mark likelihood at each detection. Detection
// times carry no information about the own station because the rate
// depends on the opposite station only.
class GridBayes {
 public:
  GridBayes(const ToyStation& st, int n, double half_width) : st_(st), n_(n), x_(n) {
    h_ = 2.0 * half_width / (n - 1);
    for (int i = 0; i < n; ++i) x_(i) = -half_width + i * h_;
    p_ = Matrix(n, n);
    const Eigen::Matrix2d inv = st.sigma0.inverse();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Eigen::Vector2d z(x_(i) - st.x0(0), x_(j) - st.x0(1));
        p_(i, j) = std::exp(-0.5 * z.dot(inv * z));
      }
    }
    normalize();
  }

  void predict(double dt) {
    if (dt <= 0.0) return;
    const Matrix k1 = kernel(st_.a1, st_.d1, dt);
    const Matrix k2 = kernel(st_.a2, st_.d2, dt);
    p_ = k1 * p_ * k2.transpose();
    normalize();
  }

  void update(const Eigen::Vector2d& r) {
    const Eigen::Matrix2d inv = st_.R.inverse();
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const Eigen::Vector2d z(r(0) - x_(i), r(1) - x_(j));
        p_(i, j) *= std::exp(-0.5 * z.dot(inv * z));
      }
    }
    normalize();
  }

  [[nodiscard]] Moments moments() const {
    Moments m{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()};
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) m.mean += p_(i, j) * Eigen::Vector2d(x_(i), x_(j));
    }
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const Eigen::Vector2d z(x_(i) - m.mean(0), x_(j) - m.mean(1));
        m.cov += p_(i, j) * z * z.transpose();
      }
    }
    return m;
  }

 private:
  // Row i' holds the transition density to x_i' from every x_i, times h.
  [[nodiscard]] Matrix kernel(double a, double d, double dt) const {
    const double decay = std::exp(-a * dt);
    const double var = d * d * (1.0 - decay * decay) / (2.0 * a);
    Matrix k(n_, n_);
    for (int to = 0; to < n_; ++to) {
      for (int from = 0; from < n_; ++from) {
        const double z = x_(to) - decay * x_(from);
        k(to, from) = std::exp(-0.5 * z * z / var);
      }
    }
    // Column-normalize so that no mass is created or lost on the grid.
    for (int from = 0; from < n_; ++from) k.col(from) /= k.col(from).sum();
    return k;
  }

  void normalize() { p_ /= p_.sum(); }

  ToyStation st_;
  int n_;
  double h_ = 0.0;
  Vector x_;
  Matrix p_;
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Single-station scenario for the toy filter comparisons, zero control law.
inline beamtrack::ScenarioConfig toy_config(const ToyStation& st, double horizon, double dt) {
  using namespace beamtrack;
  ScenarioConfig cfg;
  cfg.horizon = horizon;
  cfg.dt = dt;
  cfg.optics.eta = 50.0;
  cfg.optics.R = SymMat(Matrix(st.R));
  for (const Station s : {Station::a, Station::b}) {
    auto& sc = cfg.station(s);
    sc.schedule = LtiSchedule::constant(st.matrices(), horizon);
    sc.x0_mean = st.x0;
    sc.sigma0 = SymMat(Matrix(st.sigma0));
  }
  cfg.controllers = {ZeroLaw{}};
  validate(cfg);
  return cfg;
}

// Ten detections spread over [0, 1).
inline std::vector<beamtrack::Event> toy_events() {
  const double times[] = {0.07, 0.15, 0.26, 0.31, 0.45, 0.52, 0.66, 0.74, 0.83, 0.95};
  std::vector<beamtrack::Event> ev;
  for (int k = 0; k < 10; ++k) {
    const Eigen::Vector2d r(0.45 - 0.03 * k + 0.1 * std::sin(3.0 * k), -0.3 + 0.02 * k + 0.1 * std::cos(2.0 * k));
    ev.push_back({times[k], r, beamtrack::Station::a});
  }
  return ev;
}

struct Comparison {
  double mean_rel = 0.0;  // |m_filter - m_oracle| / |m_oracle|
  double cov_rel = 0.0;   // Frobenius, relative to the oracle
  Moments filter;
  Moments bayes;
};

inline Comparison compare_with_bayes(const ToyStation& st, const std::vector<beamtrack::Event>& events,
                                     double horizon, double dt, int grid_n = 301, double half_width = 3.0) {
  using namespace beamtrack;
  const ScenarioConfig cfg = toy_config(st, horizon, dt);
  const FilterTrace tr = run_filter(cfg, Station::a, events, ZeroLaw{});
  GridBayes bayes(st, grid_n, half_width);
  double now = 0.0;
  for (const auto& e : events) {
    bayes.predict(e.t - now);
    bayes.update(e.r);
    now = e.t;
  }
  bayes.predict(horizon - now);
  Comparison c;
  c.filter = {tr.states.back().xhat, tr.states.back().sigma.matrix()};
  c.bayes = bayes.moments();
  c.mean_rel = (c.filter.mean - c.bayes.mean).norm() / c.bayes.mean.norm();
  c.cov_rel = (c.filter.cov - c.bayes.cov).norm() / c.bayes.cov.norm();
  return c;
}

}  // namespace oracle
