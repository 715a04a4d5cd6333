#pragma once

// Upper bound J* = g_0(Sigma_0^a, Sigma_0^b) on the received-energy objective.
//
// Two independent routes:
//  * solve_g_isotropic: backward recursion for the value function g_t on a
//    (sigma_a, sigma_b) grid, valid when every covariance stays a multiple of
//    the 2x2 identity (A = -a I, D D^T = d^2 I, C = I, R = varrho I);
//  * simulate_pdmp: Monte Carlo over the covariance pair, which flows by the
//    Lyapunov drift and jumps Sigma^i -> S(Sigma^i) at rate nu^i h(Sigma^j),
//    accumulating alpha^a nu^a h(Sigma^b) + alpha^b nu^b h(Sigma^a). Any n.
//
// estimate_gap integrates the suboptimality integrand Gamma along a
// closed-loop run so that E[J] = g_0 - E[int Gamma].

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "beamtrack/errors.hpp"
#include "beamtrack/model.hpp"
#include "beamtrack/objective.hpp"
#include "beamtrack/parallel.hpp"
#include "beamtrack/rng.hpp"
#include "beamtrack/stats.hpp"
#include "beamtrack/symmat.hpp"
#include "beamtrack/tracker.hpp"

namespace beamtrack {

using ValueFn = std::function<double(const SymMat&, const SymMat&)>;

/// L^a g = g(S(Sigma^a), Sigma^b) - g(Sigma^a, Sigma^b), and symmetrically for b.
[[nodiscard]] inline double apply_L(const ValueFn& g, Station which, const SymMat& sigma_a,
                                    const SymMat& sigma_b, const Matrix& c, const SymMat& r) {
  if (which == Station::a) return g(s_map(sigma_a, c, r), sigma_b) - g(sigma_a, sigma_b);
  return g(sigma_a, s_map(sigma_b, c, r)) - g(sigma_a, sigma_b);
}

/// X(Sigma) = Sigma + eps (A Sigma + Sigma A^T + D D^T).
[[nodiscard]] inline SymMat flow_X(const SymMat& sigma, const Matrix& a, const Matrix& d, double eps) {
  if (!(eps >= 0.0)) throw DomainError("flow_X: eps must be nonnegative");
  const Matrix as = a * sigma.matrix();
  return SymMat::symmetric_part(sigma.matrix() + eps * (as + as.transpose() + d * d.transpose()));
}

/// Received-power path nu_t held constant over [k dt, (k+1) dt).
struct NuPath {
  double dt = 1.0;
  std::vector<double> values;

  static NuPath constant(double nu, double horizon) { return NuPath{horizon, {nu}}; }

  [[nodiscard]] double at(double t) const {
    if (values.empty()) return 0.0;
    const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / dt + 1e-9)));
    return values[std::min(k, values.size() - 1)];
  }
  [[nodiscard]] double max() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  }
};

// ---------------------------------------------------------------------------
// Isotropic subclass and the grid solver

struct IsotropicParams {
  double a = 1.0;        // A = -a I
  double d = 1.0;        // D D^T = d^2 I
  double varrho = 1.0;   // R = varrho I
  double rho = 1.0;
  double alpha_a = 1.0;
  double alpha_b = 1.0;
  double horizon = 1.0;
  NuPath nu_a;
  NuPath nu_b;
  double sigma0_a = 1.0;  // Sigma_0 = sigma0 I
  double sigma0_b = 1.0;

  [[nodiscard]] double h(double sigma) const { return 1.0 / (1.0 + 2.0 * rho * sigma); }
  [[nodiscard]] double s_map(double sigma) const { return sigma * varrho / (sigma + varrho); }
  [[nodiscard]] double flow(double sigma, double eps) const {
    return sigma + eps * (-2.0 * a * sigma + d * d);
  }
};

struct IsotropicCheck {
  std::optional<IsotropicParams> params;
  std::string reason;  // why the scenario is not in the subclass
};

namespace detail {

inline bool is_scalar_identity(const Matrix& m, double& s, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  s = m(0, 0);
  const double scale = std::max(1.0, std::abs(s));
  return (m - s * Matrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff() <= tol * scale;
}

}  // namespace detail

/// Extracts the isotropic parameters, or explains why the scenario is outside
/// the subclass the grid solver handles.
[[nodiscard]] inline IsotropicCheck isotropic_params(const ScenarioConfig& cfg) {
  IsotropicCheck out;
  auto decline = [&](std::string why) {
    out.reason = std::move(why);
    return out;
  };
  if (!(cfg.a.schedule == cfg.b.schedule)) return decline("stations have different schedules");
  if (cfg.a.schedule.intervals().size() != 1) return decline("schedule is not time-invariant");
  const SystemMatrices& m = cfg.a.schedule.intervals().front();
  if (m.n() != 2) return decline("state dimension is " + std::to_string(m.n()) + ", not 2");
  double neg_a = 0.0, d2 = 0.0, c = 0.0, varrho = 0.0, s0a = 0.0, s0b = 0.0;
  if (!detail::is_scalar_identity(m.A, neg_a)) return decline("A is not a multiple of the identity");
  if (!detail::is_scalar_identity(Matrix(m.D * m.D.transpose()), d2)) {
    return decline("D D^T is not a multiple of the identity");
  }
  if (!detail::is_scalar_identity(m.C, c) || std::abs(c - 1.0) > 1e-12) return decline("C is not the identity");
  if (!m.Cdot.isZero(0.0)) return decline("Cdot is nonzero");
  if (!detail::is_scalar_identity(cfg.optics.R.matrix(), varrho)) {
    return decline("R is not a multiple of the identity");
  }
  if (!detail::is_scalar_identity(cfg.a.sigma0.matrix(), s0a) ||
      !detail::is_scalar_identity(cfg.b.sigma0.matrix(), s0b)) {
    return decline("initial covariances are not multiples of the identity");
  }
  const auto* pa = std::get_if<ConstantPower>(&cfg.a.power);
  const auto* pb = std::get_if<ConstantPower>(&cfg.b.power);
  if (pa == nullptr || pb == nullptr) {
    return decline("grid solver needs deterministic power paths; a power model is random");
  }
  IsotropicParams p;
  p.a = -neg_a;
  p.d = std::sqrt(std::max(0.0, d2));
  p.varrho = varrho;
  p.rho = cfg.optics.rho;
  p.alpha_a = cfg.alpha_a;
  p.alpha_b = cfg.alpha_b;
  p.horizon = cfg.horizon;
  p.nu_a = NuPath::constant(cfg.optics.eta * pa->P, cfg.horizon);
  p.nu_b = NuPath::constant(cfg.optics.eta * pb->P, cfg.horizon);
  p.sigma0_a = s0a;
  p.sigma0_b = s0b;
  out.params = p;
  return out;
}

struct GridSpec {
  int n_sigma = 256;      // log-spaced nodes per axis (a node at 0 is added)
  int n_time = 2048;      // backward steps over [0, T]
  double sigma_lo = 0.0;  // 0: 1e-3 * sigma_ss
  double sigma_hi = 0.0;  // 0: 1e3 * sigma_ss
  int max_slices = 257;   // stored time slices (always includes t = 0 and t = T)
};

/// Backward solution g_t(sigma_a, sigma_b) on a grid. The sigma axis is
/// {0} followed by a log-spaced range; 0 is the common fixed point of S and
/// closes the grid under the jump map.
class GTable {
 public:
  GTable(std::vector<double> sigma_grid, double lo, double ratio)
      : sigma_(std::move(sigma_grid)), lo_(lo), log_ratio_(std::log(ratio)) {}

  [[nodiscard]] const std::vector<double>& sigma_grid() const { return sigma_; }
  [[nodiscard]] const std::vector<double>& time_grid() const { return times_; }  // descending
  [[nodiscard]] std::size_t axis() const { return sigma_.size(); }
  [[nodiscard]] std::size_t slices() const { return times_.size(); }
  [[nodiscard]] double at_node(std::size_t slice, std::size_t ia, std::size_t ib) const {
    return values_[slice][ia * axis() + ib];
  }
  [[nodiscard]] const std::vector<double>& slice(std::size_t s) const { return values_[s]; }

  // Cell index i and weight w so that sigma = (1-w) grid[i] + w grid[i+1].
  struct Cell {
    std::size_t i;
    double w;
  };

  [[nodiscard]] Cell locate(double sigma) const {
    const std::size_t last = sigma_.size() - 1;
    if (!(sigma >= 0.0) || sigma > sigma_.back() * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "bound grid: sigma=" << sigma << " outside [0, " << sigma_.back()
         << "]; widen the grid or check the flow";
      throw GridRangeError(os.str(), sigma);
    }
    if (sigma >= sigma_.back()) return {last - 1, 1.0};
    std::size_t i = 0;
    if (sigma >= lo_) {
      const double pos = std::log(sigma / lo_) / log_ratio_;
      i = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, pos)) + 1, last - 1);
      while (i > 1 && sigma < sigma_[i]) --i;
      while (i + 1 < last && sigma >= sigma_[i + 1]) ++i;
    }
    return {i, (sigma - sigma_[i]) / (sigma_[i + 1] - sigma_[i])};
  }

  [[nodiscard]] double bilinear(const std::vector<double>& v, double sa, double sb) const {
    const Cell ca = locate(sa);
    const Cell cb = locate(sb);
    const std::size_t n = axis();
    const double g00 = v[ca.i * n + cb.i];
    const double g01 = v[ca.i * n + cb.i + 1];
    const double g10 = v[(ca.i + 1) * n + cb.i];
    const double g11 = v[(ca.i + 1) * n + cb.i + 1];
    return (1.0 - ca.w) * ((1.0 - cb.w) * g00 + cb.w * g01) + ca.w * ((1.0 - cb.w) * g10 + cb.w * g11);
  }

  /// g_t(sigma_a, sigma_b): bilinear in sigma, linear in t between stored slices.
  [[nodiscard]] double value(double t, double sa, double sb) const {
    if (!(t >= times_.back() - 1e-12 && t <= times_.front() + 1e-12)) {
      throw RangeError("GTable::value: t outside the table horizon");
    }
    // times_ descend from T to 0.
    std::size_t s = 0;
    while (s + 1 < times_.size() && times_[s + 1] > t) ++s;
    if (s + 1 >= times_.size()) return bilinear(values_.back(), sa, sb);
    const double t_hi = times_[s];
    const double t_lo = times_[s + 1];
    const double w = (t_hi - t) / (t_hi - t_lo);
    return (1.0 - w) * bilinear(values_[s], sa, sb) + w * bilinear(values_[s + 1], sa, sb);
  }

  [[nodiscard]] double g0(double sa, double sb) const { return bilinear(values_.back(), sa, sb); }

  void push_slice(double t, std::vector<double> v) {
    times_.push_back(t);
    values_.push_back(std::move(v));
  }

 private:
  std::vector<double> sigma_;
  double lo_;
  double log_ratio_;
  std::vector<double> times_;
  std::vector<std::vector<double>> values_;
};

/// {0} followed by spec.n_sigma log-spaced nodes over [sigma_lo, sigma_hi].
[[nodiscard]] inline GTable make_sigma_grid(const IsotropicParams& p, const GridSpec& spec) {
  if (spec.n_sigma < 4 || spec.n_time < 1) throw ValidationError("solve_g_isotropic: grid too small");
  if (!(p.varrho > 0.0) || !(p.rho >= 0.0) || !(p.horizon > 0.0)) {
    throw ValidationError("solve_g_isotropic: need varrho > 0, rho >= 0, T > 0");
  }
  double lo = spec.sigma_lo;
  double hi = spec.sigma_hi;
  if (lo <= 0.0 || hi <= 0.0) {
    if (!(p.a > 0.0) || !(p.d > 0.0)) {
      throw ValidationError("solve_g_isotropic: default sigma range needs a > 0 and d > 0; pass sigma_lo/sigma_hi");
    }
    const double sigma_ss = p.d * p.d / (2.0 * p.a);
    if (lo <= 0.0) lo = 1e-3 * sigma_ss;
    if (hi <= 0.0) hi = 1e3 * sigma_ss;
  }
  if (!(hi > lo)) throw ValidationError("solve_g_isotropic: sigma_hi must exceed sigma_lo");
  const auto n_log = static_cast<std::size_t>(spec.n_sigma);
  const double ratio = std::pow(hi / lo, 1.0 / static_cast<double>(n_log - 1));
  std::vector<double> grid;
  grid.reserve(n_log + 1);
  grid.push_back(0.0);
  for (std::size_t i = 0; i < n_log; ++i) grid.push_back(lo * std::pow(ratio, static_cast<double>(i)));
  grid.back() = hi;
  return GTable(std::move(grid), lo, ratio);
}

/// One step of the backward recursion on the nodes of `table`:
///   next = eps (alpha_a nu_a h_b + alpha_b nu_b h_a)
///        + eps (nu_a h_b cur(S(sa), sb) + nu_b h_a cur(sa, S(sb)))
///        + (1 - eps nu_a h_b - eps nu_b h_a) cur(X(sa), X(sb))
/// with h, S, X in their scalar isotropic forms.
inline void backward_step(const IsotropicParams& p, const GTable& table, double eps, double nu_a,
                          double nu_b, const std::vector<double>& cur, std::vector<double>& next) {
  const auto& grid = table.sigma_grid();
  const std::size_t n = grid.size();
  std::vector<GTable::Cell> s_cell(n), x_cell(n);
  std::vector<double> hv(n);
  for (std::size_t i = 0; i < n; ++i) {
    s_cell[i] = table.locate(p.s_map(grid[i]));
    x_cell[i] = table.locate(p.flow(grid[i], eps));
    hv[i] = p.h(grid[i]);
  }
  next.resize(n * n);
  for (std::size_t ia = 0; ia < n; ++ia) {
    const GTable::Cell sa = s_cell[ia];
    const GTable::Cell xa = x_cell[ia];
    for (std::size_t ib = 0; ib < n; ++ib) {
      const double rate_a = nu_a * hv[ib];  // a-detections, attenuated by b's pointing
      const double rate_b = nu_b * hv[ia];
      const double survive = 1.0 - eps * (rate_a + rate_b);
      if (survive < 0.0) throw StepSizeError("solve_g_isotropic: negative survival factor; shrink eps");

      const double g_sa = (1.0 - sa.w) * cur[sa.i * n + ib] + sa.w * cur[(sa.i + 1) * n + ib];
      const GTable::Cell sb = s_cell[ib];
      const double g_sb = (1.0 - sb.w) * cur[ia * n + sb.i] + sb.w * cur[ia * n + sb.i + 1];
      const GTable::Cell xb = x_cell[ib];
      const double g_x =
          (1.0 - xa.w) * ((1.0 - xb.w) * cur[xa.i * n + xb.i] + xb.w * cur[xa.i * n + xb.i + 1]) +
          xa.w * ((1.0 - xb.w) * cur[(xa.i + 1) * n + xb.i] + xb.w * cur[(xa.i + 1) * n + xb.i + 1]);

      next[ia * n + ib] = eps * (p.alpha_a * rate_a + p.alpha_b * rate_b) +
                          eps * (rate_a * g_sa + rate_b * g_sb) + survive * g_x;
    }
  }
}

/// Backward recursion from g_T = 0 down to t = 0 in spec.n_time steps.
[[nodiscard]] inline GTable solve_g_isotropic(const IsotropicParams& p, const GridSpec& spec = {}) {
  GTable table = make_sigma_grid(p, spec);
  const std::size_t n = table.axis();
  const double eps = p.horizon / spec.n_time;
  const double nu_sum = p.nu_a.max() + p.nu_b.max();
  if (!(eps * nu_sum < 0.5)) {
    std::ostringstream os;
    os << "solve_g_isotropic: eps*(nu_a+nu_b) = " << eps * nu_sum
       << " must be < 0.5; increase the number of time steps";
    throw StepSizeError(os.str());
  }

  const int stride = std::max(1, (spec.n_time + spec.max_slices - 2) / std::max(1, spec.max_slices - 1));
  std::vector<double> cur(n * n, 0.0);
  std::vector<double> next(n * n, 0.0);
  table.push_slice(p.horizon, cur);
  for (int k = 0; k < spec.n_time; ++k) {
    const double t_mid = p.horizon - (k + 0.5) * eps;
    backward_step(p, table, eps, p.nu_a.at(t_mid), p.nu_b.at(t_mid), cur, next);
    std::swap(cur, next);
    const int done = k + 1;
    if (done == spec.n_time) {
      table.push_slice(0.0, cur);
    } else if (done % stride == 0) {
      table.push_slice(p.horizon - done * eps, cur);
    }
  }
  return table;
}

struct GridG0 {
  double extrapolated = 0.0;  // Richardson limit over (N/2, N, 2N)
  double raw = 0.0;           // g0 at the requested resolution
  double coarse = 0.0;        // N/2
  double fine = 0.0;          // 2N
};

/// g0 at three nested resolutions (sigma nodes and time steps both halved and
/// doubled) and its Richardson limit under an error model c1 h + c2 h^2.
/// The recursion is first order in both eps and the sigma spacing.
[[nodiscard]] inline GridG0 g0_extrapolated(const IsotropicParams& p, const GridSpec& spec) {
  auto level = [&](int factor_num, int factor_den) {
    GridSpec s = spec;
    s.n_sigma = std::max(4, spec.n_sigma * factor_num / factor_den);
    s.n_time = std::max(1, spec.n_time * factor_num / factor_den);
    s.max_slices = 2;
    return solve_g_isotropic(p, s).g0(p.sigma0_a, p.sigma0_b);
  };
  GridG0 out;
  out.coarse = level(1, 2);
  out.raw = level(1, 1);
  out.fine = level(2, 1);
  const double r_coarse = 2.0 * out.raw - out.coarse;
  const double r_fine = 2.0 * out.fine - out.raw;
  out.extrapolated = (4.0 * r_fine - r_coarse) / 3.0;
  return out;
}

// ---------------------------------------------------------------------------
// PDMP Monte Carlo

struct PdmpProblem {
  SymMat sigma0_a;
  SymMat sigma0_b;
  const LtiSchedule* schedule_a = nullptr;
  const LtiSchedule* schedule_b = nullptr;
  SymMat r_shape = SymMat::identity(2);
  double rho = 0.0;
  double alpha_a = 1.0;
  double alpha_b = 1.0;
  double horizon = 1.0;
  double dt = 1e-3;  // flow step
};

[[nodiscard]] inline PdmpProblem pdmp_problem(const ScenarioConfig& cfg) {
  PdmpProblem p;
  p.sigma0_a = cfg.a.sigma0;
  p.sigma0_b = cfg.b.sigma0;
  p.schedule_a = &cfg.a.schedule;
  p.schedule_b = &cfg.b.schedule;
  p.r_shape = cfg.optics.R;
  p.rho = cfg.optics.rho;
  p.alpha_a = cfg.alpha_a;
  p.alpha_b = cfg.alpha_b;
  p.horizon = cfg.horizon;
  p.dt = cfg.bound.pdmp_dt > 0.0 ? cfg.bound.pdmp_dt : cfg.dt;
  return p;
}

struct PdmpPath {
  double reward = 0.0;
  int jumps_a = 0;
  int jumps_b = 0;
  SymMat final_a;
  SymMat final_b;
};

namespace detail {

// Flow/jump kernel on fixed-size matrices when N is known at compile time.
template <int N>
struct PdmpKernel {
  using Mat = Eigen::Matrix<double, N, N>;
  using CMat = Eigen::Matrix<double, 2, N>;

  struct Interval {
    Mat A;
    Mat DDt;
    CMat C;
  };

  static std::vector<Interval> intervals(const LtiSchedule& s) {
    std::vector<Interval> out;
    for (const auto& m : s.intervals()) out.push_back({Mat(m.A), Mat(m.D * m.D.transpose()), CMat(m.C)});
    return out;
  }

  static double h(const Mat& sigma, const CMat& c, double rho) {
    const Matrix2 k = Matrix2::Identity() + 2.0 * rho * (c * sigma * c.transpose());
    return 1.0 / std::sqrt(k.determinant());
  }

  static void flow(Mat& sigma, const Interval& iv, double len) {
    const Mat as = iv.A * sigma;
    sigma += len * (as + as.transpose() + iv.DDt);
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
  }

  static void jump(Mat& sigma, const CMat& c, const Matrix2& r) {
    const Eigen::Matrix<double, 2, N> cs = c * sigma;
    const Matrix2 k = cs * c.transpose() + r;
    const Eigen::Matrix<double, 2, N> kinv_cs = k.llt().solve(cs);
    sigma -= cs.transpose() * kinv_cs;
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
  }

  static bool positive_definite(const Mat& sigma) {
    return is_positive_definite(SymMat::symmetric_part(Matrix(sigma)));
  }

  static PdmpPath run(const PdmpProblem& p, const NuPath& nu_a, const NuPath& nu_b, Rng& rng) {
    const auto ivs_a = intervals(*p.schedule_a);
    const auto ivs_b = intervals(*p.schedule_b);
    const auto& bps_a = p.schedule_a->breakpoints();
    const auto& bps_b = p.schedule_b->breakpoints();
    auto interval_at = [](const std::vector<double>& bps, double t) {
      const auto it = std::upper_bound(bps.begin(), bps.end(), t);
      const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, std::distance(bps.begin(), it) - 1));
      return std::min(k, bps.size() - 2);
    };
    const Matrix2 r = p.r_shape.matrix();
    Mat sa = p.sigma0_a.matrix();
    Mat sb = p.sigma0_b.matrix();
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double clock_a = expo(rng);  // remaining dominating-rate mass to the next candidate
    double clock_b = expo(rng);
    PdmpPath out;

    const int steps = static_cast<int>(std::llround(p.horizon / p.dt));
    for (int k = 0; k < steps; ++k) {
      const double t0 = k * p.dt;
      const double t1 = (k + 1 == steps) ? p.horizon : (k + 1) * p.dt;
      const Interval& ia = ivs_a[interval_at(bps_a, t0)];
      const Interval& ib = ivs_b[interval_at(bps_b, t0)];
      const double na = nu_a.at(t0);
      const double nb = nu_b.at(t0);
      double tau = t0;
      double ha = h(sa, ia.C, p.rho);
      double hb = h(sb, ib.C, p.rho);
      while (true) {
        const double wait_a = na > 0.0 ? clock_a / na : std::numeric_limits<double>::infinity();
        const double wait_b = nb > 0.0 ? clock_b / nb : std::numeric_limits<double>::infinity();
        const double wait = std::min(wait_a, wait_b);
        const bool fires = tau + wait < t1;
        const double stop = fires ? tau + wait : t1;
        const double len = stop - tau;
        const double rate_before = p.alpha_a * na * hb + p.alpha_b * nb * ha;
        flow(sa, ia, len);
        flow(sb, ib, len);
        ha = h(sa, ia.C, p.rho);
        hb = h(sb, ib.C, p.rho);
        out.reward += 0.5 * len * (rate_before + p.alpha_a * na * hb + p.alpha_b * nb * ha);
        clock_a -= na * len;
        clock_b -= nb * len;
        tau = stop;
        if (!fires) break;
        // A candidate fires at tau; a-detections are thinned by h(Sigma^b).
        if (wait_a <= wait_b) {
          clock_a = expo(rng);
          if (unit(rng) < hb) {
            jump(sa, ia.C, r);
            ha = h(sa, ia.C, p.rho);
            ++out.jumps_a;
          }
        } else {
          clock_b = expo(rng);
          if (unit(rng) < ha) {
            jump(sb, ib.C, r);
            hb = h(sb, ib.C, p.rho);
            ++out.jumps_b;
          }
        }
      }
    }
    if (!positive_definite(sa) || !positive_definite(sb)) {
      throw NumericError("simulate_pdmp: covariance lost positive definiteness");
    }
    out.final_a = SymMat::symmetric_part(Matrix(sa));
    out.final_b = SymMat::symmetric_part(Matrix(sb));
    return out;
  }
};

}  // namespace detail

/// One PDMP path; returns the accumulated reward and the terminal covariances.
[[nodiscard]] inline PdmpPath simulate_pdmp(const PdmpProblem& p, const NuPath& nu_a,
                                            const NuPath& nu_b, Rng& rng) {
  if (p.schedule_a == nullptr || p.schedule_b == nullptr) {
    throw ValidationError("simulate_pdmp: schedules are required");
  }
  if (!is_positive_definite(p.sigma0_a) || !is_positive_definite(p.sigma0_b)) {
    throw ValidationError("simulate_pdmp: initial covariances must be positive definite");
  }
  const auto n = p.schedule_a->n();
  if (n == 2) return detail::PdmpKernel<2>::run(p, nu_a, nu_b, rng);
  if (n == 4) return detail::PdmpKernel<4>::run(p, nu_a, nu_b, rng);
  return detail::PdmpKernel<Eigen::Dynamic>::run(p, nu_a, nu_b, rng);
}

struct PdmpEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int paths = 0;
};

/// Mean accumulated reward over independent PDMP paths. Random power models
/// are resampled per path on the flow grid; constant ones give fixed paths.
[[nodiscard]] inline PdmpEstimate estimate_pdmp(const ScenarioConfig& cfg, int paths,
                                                unsigned workers = 0) {
  if (paths < 2) throw ValidationError("estimate_pdmp: at least two paths are required");
  const PdmpProblem prob = pdmp_problem(cfg);
  const int steps = static_cast<int>(std::llround(prob.horizon / prob.dt));
  auto nu_path = [&](Station s, std::uint64_t path) {
    const auto& st = cfg.station(s);
    if (const auto* c = std::get_if<ConstantPower>(&st.power)) {
      return NuPath::constant(cfg.optics.eta * c->P, cfg.horizon);
    }
    Rng rng = make_rng(cfg.seed, index(s), path, Stream::power);
    PowerSampler sampler(st.power, cfg.optics.eta);
    NuPath out{prob.dt, {}};
    out.values.reserve(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) out.values.push_back(sampler.sample(k * prob.dt, prob.dt, rng));
    return out;
  };
  std::vector<double> rewards(static_cast<std::size_t>(paths));
  parallel_for(
      rewards.size(),
      [&](std::size_t i) {
        Rng rng = make_rng(cfg.seed, 0, i, Stream::pdmp);
        rewards[i] = simulate_pdmp(prob, nu_path(Station::a, i), nu_path(Station::b, i), rng).reward;
      },
      workers);
  const SampleStats s = sample_stats(rewards);
  return {s.mean, s.std_error, paths};
}

// ---------------------------------------------------------------------------
// Suboptimality gap along a closed-loop run

namespace detail {

inline double isotropic_sigma(const SymMat& s) { return s.trace() / static_cast<double>(s.dim()); }

}  // namespace detail

/// Gamma = nu_a q_b (alpha_a + L^a g)(1 - exp(-rho |Q_b C xhat_b|^2))
///       + nu_b q_a (alpha_b + L^b g)(1 - exp(-rho |Q_a C xhat_a|^2)),
/// evaluated on the run's grid and integrated by the trapezoid rule with the
/// power held over each step. Requires the isotropic subclass.
[[nodiscard]] inline double gamma_integrand(const GTable& table, const IsotropicParams& p, double t,
                                            double nu_a, double nu_b, const FilterState& fa,
                                            const FilterState& fb, const Matrix& c) {
  const double sa = detail::isotropic_sigma(fa.sigma);
  const double sb = detail::isotropic_sigma(fb.sigma);
  const double g = table.value(t, sa, sb);
  const double la = table.value(t, p.s_map(sa), sb) - g;
  const double lb = table.value(t, sa, p.s_map(sb)) - g;
  const Attenuation att_a = q_and_Q(fa.sigma, c, p.rho);
  const Attenuation att_b = q_and_Q(fb.sigma, c, p.rho);
  const double miss_b = 1.0 - std::exp(-p.rho * (att_b.Q * (c * fb.xhat)).squaredNorm());
  const double miss_a = 1.0 - std::exp(-p.rho * (att_a.Q * (c * fa.xhat)).squaredNorm());
  return nu_a * att_b.q * (p.alpha_a + la) * miss_b + nu_b * att_a.q * (p.alpha_b + lb) * miss_a;
}

[[nodiscard]] inline double estimate_gap(const RunTraces& traces, const GTable& table,
                                         const ScenarioConfig& cfg) {
  const IsotropicCheck iso = isotropic_params(cfg);
  if (!iso.params) throw ValidationError("estimate_gap: " + iso.reason);
  const IsotropicParams& p = *iso.params;
  const Matrix& c = cfg.a.schedule.at(0.0).C;
  double gap = 0.0;
  for (std::size_t k = 0; k + 1 < traces.a.times.size(); ++k) {
    const double t0 = traces.a.times[k];
    const double t1 = traces.a.times[k + 1];
    const double nu_a = traces.nu_a[k];
    const double nu_b = traces.nu_b[k];
    const double g0 = gamma_integrand(table, p, t0, nu_a, nu_b, traces.a.states[k], traces.b.states[k], c);
    const double g1 =
        gamma_integrand(table, p, t1, nu_a, nu_b, traces.a.states[k + 1], traces.b.states[k + 1], c);
    gap += 0.5 * (t1 - t0) * (g0 + g1);
  }
  return gap;
}

/// Closed-loop J estimate with a per-run gap sample attached to each record.
[[nodiscard]] inline JEstimate estimate_J_with_gap(const ScenarioConfig& cfg, const ControlLaw& law,
                                                   int runs, const GTable& table, unsigned workers = 0) {
  if (runs < 2) throw ValidationError("estimate_J_with_gap: at least two runs are required");
  JEstimate est;
  est.records.resize(static_cast<std::size_t>(runs));
  parallel_for(
      est.records.size(),
      [&](std::size_t i) {
        RunTraces traces;
        est.records[i] = simulate_run(cfg, law, i, &traces);
        est.records[i].gap = estimate_gap(traces, table, cfg);
      },
      workers);
  std::vector<double> samples;
  for (const auto& r : est.records) samples.push_back(r.j_sample);
  const SampleStats s = sample_stats(samples);
  est.mean = s.mean;
  est.std_error = s.std_error;
  return est;
}

}  // namespace beamtrack
