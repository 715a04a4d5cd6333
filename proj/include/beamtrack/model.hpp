#pragma once

// Scenario definition: time-varying linear system schedules, optics, power
// processes, controller selection, and the JSON scenario format.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamtrack/errors.hpp"
#include "beamtrack/symmat.hpp"

namespace beamtrack {

// Distinct scenario validation failures.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class SingularCBError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class RankDeficientCError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class InitialConditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class Station { a = 0, b = 1 };

inline constexpr Station other(Station s) { return s == Station::a ? Station::b : Station::a; }
inline constexpr int index(Station s) { return static_cast<int>(s); }
inline constexpr char tag(Station s) { return s == Station::a ? 'a' : 'b'; }

struct SystemMatrices {
  Matrix A;     // n x n
  Matrix B;     // n x 2
  Matrix C;     // 2 x n
  Matrix D;     // n x m
  Matrix Cdot;  // 2 x n

  [[nodiscard]] Eigen::Index n() const { return A.rows(); }
  [[nodiscard]] Eigen::Index m() const { return D.cols(); }
  friend bool operator==(const SystemMatrices&, const SystemMatrices&) = default;
};

/// Piecewise-constant system matrices over ascending breakpoints. Interval k
/// covers [breakpoints[k], breakpoints[k+1]); the final breakpoint is closed.
class LtiSchedule {
 public:
  LtiSchedule() = default;
  LtiSchedule(std::vector<double> breakpoints, std::vector<SystemMatrices> intervals)
      : breakpoints_(std::move(breakpoints)), intervals_(std::move(intervals)) {
    if (intervals_.empty()) throw SchemaError("schedule: at least one interval is required");
    if (breakpoints_.size() != intervals_.size() + 1) {
      throw SchemaError("schedule: need exactly one more breakpoint than intervals");
    }
    if (breakpoints_.front() != 0.0) throw SchemaError("schedule: first breakpoint must be 0");
    for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
      if (!(breakpoints_[k] > breakpoints_[k - 1])) {
        throw SchemaError("schedule: breakpoints must be strictly ascending");
      }
    }
    const auto n = intervals_.front().A.rows();
    for (auto& iv : intervals_) {
      if (iv.Cdot.size() == 0) iv.Cdot = Matrix::Zero(2, iv.C.cols());
      check_shapes(iv, n);
    }
  }

  static LtiSchedule constant(SystemMatrices m, double horizon) {
    return LtiSchedule({0.0, horizon}, {std::move(m)});
  }

  [[nodiscard]] const SystemMatrices& at(double t) const {
    if (!(t >= 0.0 && t <= breakpoints_.back())) {
      std::ostringstream os;
      os << "eval_matrices: t=" << t << " outside [0, " << breakpoints_.back() << "]";
      throw RangeError(os.str());
    }
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
    auto k = static_cast<std::size_t>(std::distance(breakpoints_.begin(), it));
    k = std::min(k == 0 ? 0 : k - 1, intervals_.size() - 1);
    return intervals_[k];
  }

  [[nodiscard]] const std::vector<double>& breakpoints() const { return breakpoints_; }
  [[nodiscard]] const std::vector<SystemMatrices>& intervals() const { return intervals_; }
  [[nodiscard]] double end() const { return breakpoints_.back(); }
  [[nodiscard]] Eigen::Index n() const { return intervals_.front().A.rows(); }

  friend bool operator==(const LtiSchedule&, const LtiSchedule&) = default;

 private:
  static void check_shapes(const SystemMatrices& m, Eigen::Index n) {
    if (n < 2) throw SchemaError("schedule: state dimension n must be at least 2");
    if (m.A.rows() != n || m.A.cols() != n) throw SchemaError("schedule: A must be n x n");
    if (m.B.rows() != n || m.B.cols() != 2) throw SchemaError("schedule: B must be n x 2");
    if (m.C.rows() != 2 || m.C.cols() != n) throw SchemaError("schedule: C must be 2 x n");
    if (m.D.rows() != n || m.D.cols() < 1) throw SchemaError("schedule: D must be n x m");
    if (m.Cdot.rows() != 2 || m.Cdot.cols() != n) throw SchemaError("schedule: Cdot must be 2 x n");
  }

  std::vector<double> breakpoints_;
  std::vector<SystemMatrices> intervals_;
};

inline const SystemMatrices& eval_matrices(const LtiSchedule& s, double t) { return s.at(t); }

/// rho = 2 / (psi_bar f_c)^2.
[[nodiscard]] inline double rho_from_optics(double psi_bar, double f_c) {
  if (!(psi_bar > 0.0) || !(f_c > 0.0)) {
    throw DomainError("rho_from_optics: psi_bar and f_c must be positive");
  }
  const double w = psi_bar * f_c;
  return 2.0 / (w * w);
}

struct OpticsParams {
  double psi_bar = 1.0;  // rad; +inf models an unattenuated link
  double f_c = 1.0;      // m
  double rho = 2.0;      // m^-2, derived
  double eta = 1.0;      // events / (s W)
  SymMat R = SymMat::identity(2);

  friend bool operator==(const OpticsParams&, const OpticsParams&) = default;
};

struct ConstantPower {
  double P = 1.0;
  friend bool operator==(const ConstantPower&, const ConstantPower&) = default;
};
struct OokPower {
  double P = 1.0;
  double bit_duration = 1e-3;
  double duty = 0.5;
  friend bool operator==(const OokPower&, const OokPower&) = default;
};
struct LognormalFade {
  double P_mean = 1.0;
  double sigma_log = 0.1;
  double tau_corr = 1e-2;
  friend bool operator==(const LognormalFade&, const LognormalFade&) = default;
};
using PowerModel = std::variant<ConstantPower, OokPower, LognormalFade>;

/// Expected received power of a model.
[[nodiscard]] inline double mean_power(const PowerModel& pm) {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ConstantPower>) return p.P;
        if constexpr (std::is_same_v<T, OokPower>) return p.P * p.duty;
        if constexpr (std::is_same_v<T, LognormalFade>) return p.P_mean;
      },
      pm);
}

struct OptimalLaw {
  friend bool operator==(const OptimalLaw&, const OptimalLaw&) = default;
};
struct ZeroLaw {
  friend bool operator==(const ZeroLaw&, const ZeroLaw&) = default;
};
struct ProportionalLaw {
  Matrix2 gain = Matrix2::Identity();
  friend bool operator==(const ProportionalLaw&, const ProportionalLaw&) = default;
};
using ControlLaw = std::variant<OptimalLaw, ZeroLaw, ProportionalLaw>;

[[nodiscard]] inline std::string law_name(const ControlLaw& law) {
  if (std::holds_alternative<OptimalLaw>(law)) return "optimal";
  if (std::holds_alternative<ZeroLaw>(law)) return "zero";
  return "proportional";
}

struct StationConfig {
  LtiSchedule schedule;
  PowerModel power = ConstantPower{};
  Vector x0_mean;
  SymMat sigma0;

  friend bool operator==(const StationConfig&, const StationConfig&) = default;
};

// Optional grid and PDMP settings for the bound computation.
struct BoundSettings {
  int grid_sigma = 256;
  int grid_time = 2048;
  int pdmp_paths = 10000;
  double pdmp_dt = 0.0;  // 0 means: use the scenario dt

  friend bool operator==(const BoundSettings&, const BoundSettings&) = default;
};

struct ScenarioConfig {
  double horizon = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  int runs = 100;
  double alpha_a = 1.0;
  double alpha_b = 1.0;
  OpticsParams optics;
  StationConfig a;
  StationConfig b;
  std::vector<ControlLaw> controllers{OptimalLaw{}};
  BoundSettings bound;

  [[nodiscard]] const StationConfig& station(Station s) const { return s == Station::a ? a : b; }
  [[nodiscard]] StationConfig& station(Station s) { return s == Station::a ? a : b; }
  [[nodiscard]] double alpha(Station s) const { return s == Station::a ? alpha_a : alpha_b; }
  [[nodiscard]] int steps() const { return static_cast<int>(std::llround(horizon / dt)); }
  // Grid time k * dt, pinned to the horizon at the last index.
  [[nodiscard]] double time_at(int k) const { return k >= steps() ? horizon : k * dt; }

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw SchemaError("scenario " + path + ": missing key '" + key + "'");
  }
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError("scenario " + path + ": expected a number");
  return j.get<double>();
}

inline Matrix matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) {
    throw SchemaError("scenario " + path + ": expected a row-major nested array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw SchemaError("scenario " + path + ": ragged matrix rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = number(row.at(static_cast<std::size_t>(k)),
                       path + "/" + std::to_string(i) + "/" + std::to_string(k));
    }
  }
  return m;
}

inline Vector vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw SchemaError("scenario " + path + ": expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = number(j.at(i), path + "/" + std::to_string(i));
  }
  return v;
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline SymMat symmat_from_json(const json& j, const std::string& path) {
  try {
    return SymMat(matrix_from_json(j, path));
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw SchemaError("scenario " + path + ": " + e.what());
  }
}

inline SystemMatrices interval_from_json(const json& j, const std::string& path) {
  SystemMatrices m;
  m.A = matrix_from_json(require(j, "A", path), path + "/A");
  m.B = matrix_from_json(require(j, "B", path), path + "/B");
  m.C = matrix_from_json(require(j, "C", path), path + "/C");
  m.D = matrix_from_json(require(j, "D", path), path + "/D");
  if (j.contains("Cdot")) m.Cdot = matrix_from_json(j.at("Cdot"), path + "/Cdot");
  return m;
}

inline LtiSchedule schedule_from_json(const json& j, double horizon, const std::string& path) {
  std::vector<SystemMatrices> intervals;
  std::vector<double> breakpoints;
  if (j.contains("intervals")) {
    const auto& arr = j.at("intervals");
    if (!arr.is_array()) throw SchemaError("scenario " + path + "/intervals: expected an array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      intervals.push_back(interval_from_json(arr.at(k), path + "/intervals/" + std::to_string(k)));
    }
    if (j.contains("breakpoints")) {
      const Vector bp = vector_from_json(j.at("breakpoints"), path + "/breakpoints");
      breakpoints.assign(bp.data(), bp.data() + bp.size());
    } else if (intervals.size() == 1) {
      breakpoints = {0.0, horizon};
    } else {
      throw SchemaError("scenario " + path + ": multi-interval schedule needs 'breakpoints'");
    }
  } else {
    intervals.push_back(interval_from_json(j, path));
    breakpoints = {0.0, horizon};
  }
  try {
    return LtiSchedule(std::move(breakpoints), std::move(intervals));
  } catch (const SchemaError& e) {
    throw SchemaError("scenario " + path + ": " + e.what());
  }
}

inline PowerModel power_from_json(const json& j, const std::string& path) {
  const auto& type = require(j, "type", path);
  if (!type.is_string()) throw SchemaError("scenario " + path + "/type: expected a string");
  const auto t = type.get<std::string>();
  auto nonneg = [&](const char* key) {
    const double v = number(require(j, key, path), path + "/" + key);
    if (!(v >= 0.0)) throw SchemaError("scenario " + path + "/" + key + ": must be >= 0");
    return v;
  };
  auto positive = [&](const char* key) {
    const double v = number(require(j, key, path), path + "/" + key);
    if (!(v > 0.0)) throw SchemaError("scenario " + path + "/" + key + ": must be > 0");
    return v;
  };
  if (t == "constant") return ConstantPower{nonneg("P")};
  if (t == "ook") {
    OokPower p{nonneg("P"), positive("bit_duration"), nonneg("duty")};
    if (p.duty > 1.0) throw SchemaError("scenario " + path + "/duty: must lie in [0, 1]");
    return p;
  }
  if (t == "lognormal_fade") return LognormalFade{nonneg("P_mean"), nonneg("sigma_log"), positive("tau_corr")};
  throw SchemaError("scenario " + path + "/type: unknown power model '" + t + "'");
}

inline json to_json(const PowerModel& pm) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ConstantPower>) return {{"type", "constant"}, {"P", p.P}};
        if constexpr (std::is_same_v<T, OokPower>) {
          return {{"type", "ook"}, {"P", p.P}, {"bit_duration", p.bit_duration}, {"duty", p.duty}};
        }
        if constexpr (std::is_same_v<T, LognormalFade>) {
          return {{"type", "lognormal_fade"},
                  {"P_mean", p.P_mean},
                  {"sigma_log", p.sigma_log},
                  {"tau_corr", p.tau_corr}};
        }
      },
      pm);
}

inline ControlLaw law_from_json(const json& j, const std::string& path) {
  std::string type;
  if (j.is_string()) {
    type = j.get<std::string>();
  } else if (j.is_object() && j.contains("type") && j.at("type").is_string()) {
    type = j.at("type").get<std::string>();
  } else {
    throw SchemaError("scenario " + path + ": controller must be a name or {type: ...}");
  }
  if (type == "optimal") return OptimalLaw{};
  if (type == "zero") return ZeroLaw{};
  if (type == "proportional") {
    ProportionalLaw law;
    if (j.is_object() && j.contains("gain")) {
      const Matrix g = matrix_from_json(j.at("gain"), path + "/gain");
      if (g.rows() != 2 || g.cols() != 2 || !g.allFinite()) {
        throw SchemaError("scenario " + path + "/gain: expected a finite 2x2 matrix");
      }
      law.gain = g;
    }
    return law;
  }
  throw SchemaError("scenario " + path + ": unknown controller '" + type + "'");
}

inline json to_json(const ControlLaw& law) {
  if (const auto* p = std::get_if<ProportionalLaw>(&law)) {
    return {{"type", "proportional"}, {"gain", to_json(Matrix(p->gain))}};
  }
  return law_name(law);
}

inline double psi_bar_from_json(const json& j, const std::string& path) {
  if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
  const double v = number(j, path);
  if (!(v > 0.0)) throw SchemaError("scenario " + path + ": must be > 0");
  return v;
}

inline void validate_station(const StationConfig& st, const std::vector<ControlLaw>& laws,
                             const std::string& path) {
  const auto n = st.schedule.n();
  if (st.x0_mean.size() != n) throw SchemaError("scenario " + path + "/x0_mean: length must be n");
  if (st.sigma0.dim() != n) throw SchemaError("scenario " + path + "/sigma0: must be n x n");
  if (!is_positive_definite(st.sigma0)) {
    throw SchemaError("scenario " + path + "/sigma0: must be positive definite");
  }
  const auto& bps = st.schedule.breakpoints();
  for (std::size_t k = 0; k < st.schedule.intervals().size(); ++k) {
    const auto& m = st.schedule.intervals()[k];
    const std::string where = path + "/schedule interval " + std::to_string(k) + " [" +
                              std::to_string(bps[k]) + ", " + std::to_string(bps[k + 1]) + ")";
    Eigen::JacobiSVD<Matrix> svd(m.C);
    const auto sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-12 * std::max(1.0, sv(0)))) {
      throw RankDeficientCError("scenario " + where + ": C not full rank");
    }
    const Matrix2 cb = m.C * m.B;
    if (!(std::abs(cb.determinant()) > 1e-12 * std::max(1.0, cb.squaredNorm()))) {
      throw SingularCBError("scenario " + where + ": C B is singular");
    }
  }
  const bool uses_optimal = std::any_of(laws.begin(), laws.end(), [](const ControlLaw& l) {
    return std::holds_alternative<OptimalLaw>(l);
  });
  if (uses_optimal) {
    const Vector2 c0x0 = st.schedule.at(0.0).C * st.x0_mean;
    if (c0x0.norm() > 1e-12 * std::max(1.0, st.x0_mean.norm())) {
      throw InitialConditionError("scenario " + path +
                                  ": initial condition violates C0 x0_mean = 0 required by the "
                                  "optimal controller");
    }
  }
}

}  // namespace detail

/// Checks every cross-field invariant of a scenario. Throws on the first violation.
inline void validate(const ScenarioConfig& cfg) {
  if (!(cfg.horizon > 0.0)) throw SchemaError("scenario /horizon: must be > 0");
  if (!(cfg.dt > 0.0)) throw SchemaError("scenario /dt: must be > 0");
  if (cfg.dt > cfg.horizon / 100.0 * (1.0 + 1e-12)) {
    throw SchemaError("scenario /dt: must not exceed horizon/100");
  }
  const double steps = cfg.horizon / cfg.dt;
  if (std::abs(steps - std::round(steps)) > 1e-6 * steps) {
    throw SchemaError("scenario /dt: horizon must be an integer multiple of dt");
  }
  if (cfg.runs < 1) throw SchemaError("scenario /runs: must be >= 1");
  if (!(cfg.alpha_a >= 0.0) || !(cfg.alpha_b >= 0.0)) {
    throw SchemaError("scenario /alpha: weights must be >= 0");
  }
  if (!(cfg.optics.eta > 0.0)) throw SchemaError("scenario /optics/eta: must be > 0");
  if (!is_positive_definite(cfg.optics.R) || cfg.optics.R.dim() != 2) {
    throw SchemaError("scenario /optics/R: must be a 2x2 positive definite matrix");
  }
  if (cfg.controllers.empty()) throw SchemaError("scenario /controller: no controller selected");
  for (const Station s : {Station::a, Station::b}) {
    const auto& st = cfg.station(s);
    const std::string path = std::string("/stations/") + tag(s);
    if (st.schedule.end() < cfg.horizon * (1.0 - 1e-12)) {
      throw SchemaError("scenario " + path + "/schedule: breakpoints must cover [0, horizon]");
    }
    detail::validate_station(st, cfg.controllers, path);
  }
}

/// Parses and validates a scenario document.
[[nodiscard]] inline ScenarioConfig load_scenario(const nlohmann::json& doc) {
  using detail::number;
  using detail::require;
  ScenarioConfig cfg;
  if (!doc.is_object()) throw SchemaError("scenario: top level must be an object");
  cfg.horizon = number(require(doc, "horizon", ""), "/horizon");
  cfg.dt = number(require(doc, "dt", ""), "/dt");
  if (doc.contains("seed")) {
    const auto& s = doc.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      throw SchemaError("scenario /seed: expected an unsigned integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("runs")) {
    if (!doc.at("runs").is_number_integer()) throw SchemaError("scenario /runs: expected an integer");
    cfg.runs = doc.at("runs").get<int>();
  }
  if (doc.contains("alpha")) {
    const Vector alpha = detail::vector_from_json(doc.at("alpha"), "/alpha");
    if (alpha.size() != 2) throw SchemaError("scenario /alpha: expected [alpha_a, alpha_b]");
    cfg.alpha_a = alpha(0);
    cfg.alpha_b = alpha(1);
  }

  const auto& optics = require(doc, "optics", "");
  cfg.optics.psi_bar = detail::psi_bar_from_json(require(optics, "psi_bar", "/optics"), "/optics/psi_bar");
  cfg.optics.f_c = number(require(optics, "f_c", "/optics"), "/optics/f_c");
  cfg.optics.eta = number(require(optics, "eta", "/optics"), "/optics/eta");
  if (!(cfg.optics.f_c > 0.0)) throw SchemaError("scenario /optics/f_c: must be > 0");
  cfg.optics.rho = rho_from_optics(cfg.optics.psi_bar, cfg.optics.f_c);
  cfg.optics.R = detail::symmat_from_json(require(optics, "R", "/optics"), "/optics/R");

  const auto& stations = require(doc, "stations", "");
  for (const Station s : {Station::a, Station::b}) {
    const std::string key(1, tag(s));
    const std::string path = "/stations/" + key;
    const auto& js = require(stations, key.c_str(), "/stations");
    auto& st = cfg.station(s);
    st.schedule = detail::schedule_from_json(require(js, "schedule", path), cfg.horizon, path + "/schedule");
    st.power = detail::power_from_json(require(js, "power", path), path + "/power");
    st.x0_mean = detail::vector_from_json(require(js, "x0_mean", path), path + "/x0_mean");
    st.sigma0 = detail::symmat_from_json(require(js, "sigma0", path), path + "/sigma0");
  }

  if (doc.contains("controller")) {
    const auto& jc = doc.at("controller");
    cfg.controllers.clear();
    if (jc.is_array()) {
      for (std::size_t k = 0; k < jc.size(); ++k) {
        cfg.controllers.push_back(detail::law_from_json(jc.at(k), "/controller/" + std::to_string(k)));
      }
    } else {
      cfg.controllers.push_back(detail::law_from_json(jc, "/controller"));
    }
  }

  if (doc.contains("bound")) {
    const auto& jb = doc.at("bound");
    auto get_int = [&](const char* key, int& out) {
      if (!jb.contains(key)) return;
      if (!jb.at(key).is_number_integer() || jb.at(key).get<int>() < 1) {
        throw SchemaError(std::string("scenario /bound/") + key + ": expected a positive integer");
      }
      out = jb.at(key).get<int>();
    };
    get_int("grid_sigma", cfg.bound.grid_sigma);
    get_int("grid_time", cfg.bound.grid_time);
    get_int("pdmp_paths", cfg.bound.pdmp_paths);
    if (jb.contains("pdmp_dt")) cfg.bound.pdmp_dt = number(jb.at("pdmp_dt"), "/bound/pdmp_dt");
  }

  validate(cfg);
  return cfg;
}

/// Parses scenario text; JSON syntax errors carry the parser's line/column.
[[nodiscard]] inline ScenarioConfig load_scenario(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("scenario: ") + e.what());
  }
  return load_scenario(doc);
}

/// Serializes a config back to the scenario format.
[[nodiscard]] inline nlohmann::json render(const ScenarioConfig& cfg) {
  using detail::to_json;
  nlohmann::json doc;
  doc["horizon"] = cfg.horizon;
  doc["dt"] = cfg.dt;
  doc["seed"] = cfg.seed;
  doc["runs"] = cfg.runs;
  doc["alpha"] = {cfg.alpha_a, cfg.alpha_b};
  nlohmann::json optics;
  if (std::isinf(cfg.optics.psi_bar)) {
    optics["psi_bar"] = "inf";
  } else {
    optics["psi_bar"] = cfg.optics.psi_bar;
  }
  optics["f_c"] = cfg.optics.f_c;
  optics["eta"] = cfg.optics.eta;
  optics["R"] = to_json(cfg.optics.R.matrix());
  doc["optics"] = optics;
  for (const Station s : {Station::a, Station::b}) {
    const auto& st = cfg.station(s);
    nlohmann::json intervals = nlohmann::json::array();
    for (const auto& m : st.schedule.intervals()) {
      intervals.push_back({{"A", to_json(m.A)},
                           {"B", to_json(m.B)},
                           {"C", to_json(m.C)},
                           {"D", to_json(m.D)},
                           {"Cdot", to_json(m.Cdot)}});
    }
    doc["stations"][std::string(1, tag(s))] = {
        {"schedule", {{"breakpoints", st.schedule.breakpoints()}, {"intervals", intervals}}},
        {"power", to_json(st.power)},
        {"x0_mean", to_json(st.x0_mean)},
        {"sigma0", to_json(st.sigma0.matrix())}};
  }
  nlohmann::json laws = nlohmann::json::array();
  for (const auto& law : cfg.controllers) laws.push_back(to_json(law));
  doc["controller"] = laws;
  doc["bound"] = {{"grid_sigma", cfg.bound.grid_sigma},
                  {"grid_time", cfg.bound.grid_time},
                  {"pdmp_paths", cfg.bound.pdmp_paths},
                  {"pdmp_dt", cfg.bound.pdmp_dt}};
  return doc;
}

/// FNV-1a digest of the canonical rendering, as 16 hex digits.
[[nodiscard]] inline std::string scenario_digest(const ScenarioConfig& cfg) {
  const std::string text = render(cfg).dump();
  std::uint64_t hash = 1469598103934665603ULL;
  for (const unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << hash;
  return os.str();
}

}  // namespace beamtrack
