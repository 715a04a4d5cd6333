#pragma once

// Orchestration behind the command-line tool: scenario runs with controller
// comparison against the bound, bound-only runs, and the property suites.
// Every artifact lands in one output directory; report.json depends only on
// (scenario, overrides), never on wall-clock or worker count.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "beamtrack/bound.hpp"
#include "beamtrack/errors.hpp"
#include "beamtrack/io.hpp"
#include "beamtrack/model.hpp"
#include "beamtrack/objective.hpp"
#include "beamtrack/parallel.hpp"
#include "beamtrack/properties.hpp"

namespace beamtrack {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<double> dt;
  std::optional<std::vector<ControlLaw>> controllers;
  std::optional<int> grid_sigma;
  std::optional<int> grid_time;
  std::optional<int> pdmp_paths;
  unsigned workers = 0;
};

/// Reads and validates a scenario file; errors carry the file name.
[[nodiscard]] inline ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return load_scenario(buf.str());
  } catch (const ValidationError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

[[nodiscard]] inline ScenarioConfig apply_overrides(ScenarioConfig cfg, const Overrides& ov) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.runs) cfg.runs = *ov.runs;
  if (ov.dt) cfg.dt = *ov.dt;
  if (ov.controllers) cfg.controllers = *ov.controllers;
  if (ov.grid_sigma) cfg.bound.grid_sigma = *ov.grid_sigma;
  if (ov.grid_time) cfg.bound.grid_time = *ov.grid_time;
  if (ov.pdmp_paths) cfg.bound.pdmp_paths = *ov.pdmp_paths;
  validate(cfg);
  return cfg;
}

/// "optimal,zero,proportional" -> laws. Proportional uses the unit gain.
[[nodiscard]] inline std::vector<ControlLaw> parse_controller_list(const std::string& list) {
  std::vector<ControlLaw> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(detail::law_from_json(nlohmann::json(item), "--controllers"));
  }
  if (out.empty()) throw ValidationError("--controllers: empty list");
  return out;
}

// ---------------------------------------------------------------------------
// Bound

struct BoundReport {
  std::optional<GridG0> grid;
  std::string grid_declined;
  std::optional<GTable> table;
  std::optional<IsotropicParams> iso;
  PdmpEstimate pdmp;

  // Reference value and its standard error for comparisons.
  [[nodiscard]] double g0() const { return grid ? grid->extrapolated : pdmp.mean; }
  [[nodiscard]] double g0_std_error() const { return grid ? 0.0 : pdmp.std_error; }
};

[[nodiscard]] inline GridSpec grid_spec(const ScenarioConfig& cfg) {
  GridSpec spec;
  spec.n_sigma = cfg.bound.grid_sigma;
  spec.n_time = cfg.bound.grid_time;
  return spec;
}

[[nodiscard]] inline BoundReport compute_bound(const ScenarioConfig& cfg, bool keep_table, unsigned workers) {
  BoundReport rep;
  const IsotropicCheck iso = isotropic_params(cfg);
  if (iso.params) {
    rep.iso = iso.params;
    rep.grid = g0_extrapolated(*iso.params, grid_spec(cfg));
    if (keep_table) rep.table = solve_g_isotropic(*iso.params, grid_spec(cfg));
  } else {
    rep.grid_declined = iso.reason;
  }
  rep.pdmp = estimate_pdmp(cfg, std::max(2, cfg.bound.pdmp_paths), workers);
  return rep;
}

[[nodiscard]] inline nlohmann::json to_json(const BoundReport& b, const ScenarioConfig& cfg) {
  nlohmann::json j;
  if (b.grid) {
    j["g0_grid"] = b.grid->extrapolated;
    j["g0_grid_raw"] = b.grid->raw;
    j["g0_grid_levels"] = {b.grid->coarse, b.grid->raw, b.grid->fine};
    j["discrepancy"] = b.grid->extrapolated - b.pdmp.mean;
    j["discrepancy_in_std_errors"] =
        b.pdmp.std_error > 0.0 ? (b.grid->extrapolated - b.pdmp.mean) / b.pdmp.std_error : 0.0;
  } else {
    j["g0_grid"] = nullptr;
    j["grid_declined"] = b.grid_declined;
  }
  j["g0_pdmp"] = b.pdmp.mean;
  j["std_error"] = b.pdmp.std_error;
  j["pdmp_paths"] = b.pdmp.paths;
  j["params"] = {{"grid_sigma", cfg.bound.grid_sigma},
                 {"grid_time", cfg.bound.grid_time},
                 {"pdmp_dt", cfg.bound.pdmp_dt > 0.0 ? cfg.bound.pdmp_dt : cfg.dt},
                 {"horizon", cfg.horizon},
                 {"rho", cfg.optics.rho},
                 {"alpha", {cfg.alpha_a, cfg.alpha_b}}};
  return j;
}

// ---------------------------------------------------------------------------
// Runs

struct ControllerSummary {
  ControlLaw law;
  JEstimate estimate;
  std::vector<std::pair<std::uint64_t, std::string>> aborted;  // numeric fatals
  int pd_violations = 0;
  double max_hold = 0.0;
  std::optional<double> mean_gap;
  std::optional<double> identity_se;  // SE of J + gap
  bool bound_violation = false;
};

// Closed-loop runs; a numeric failure aborts only its own run.
[[nodiscard]] inline ControllerSummary run_controller(const ScenarioConfig& cfg, const ControlLaw& law,
                                                      const GTable* table, unsigned workers) {
  ControllerSummary out;
  out.law = law;
  const auto runs = static_cast<std::size_t>(cfg.runs);
  std::vector<std::optional<RunRecord>> recs(runs);
  std::vector<std::string> errors(runs);
  parallel_for(
      runs,
      [&](std::size_t i) {
        try {
          if (table != nullptr) {
            RunTraces traces;
            RunRecord r = simulate_run(cfg, law, i, &traces);
            r.gap = estimate_gap(traces, *table, cfg);
            recs[i] = r;
          } else {
            recs[i] = simulate_run(cfg, law, i);
          }
        } catch (const NumericError& e) {
          errors[i] = e.what();
        }
      },
      workers);
  std::vector<double> j, jg;
  for (std::size_t i = 0; i < runs; ++i) {
    if (!recs[i]) {
      out.aborted.emplace_back(i, errors[i]);
      continue;
    }
    const RunRecord& r = *recs[i];
    out.estimate.records.push_back(r);
    j.push_back(r.j_sample);
    if (r.gap) jg.push_back(r.j_sample + *r.gap);
    out.pd_violations += r.pd_violations;
    out.max_hold = std::max({out.max_hold, r.max_hold_a, r.max_hold_b});
  }
  const SampleStats s = sample_stats(j);
  out.estimate.mean = s.mean;
  out.estimate.std_error = s.std_error;
  if (!jg.empty()) {
    const SampleStats sg = sample_stats(jg);
    out.mean_gap = sg.mean - s.mean;
    out.identity_se = sg.std_error;
  }
  return out;
}

struct RunResult {
  nlohmann::json report;
  ExitCode code = ExitCode::success;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = io::open_out(path);
  os << j.dump(2) << '\n';
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Simulates every configured controller, computes the bound and writes
/// report.json, traces/ and (isotropic scenarios) gtable.csv under out_dir.
inline RunResult cmd_run(const ScenarioConfig& cfg, const std::filesystem::path& out_dir, unsigned workers = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res;
  std::filesystem::create_directories(out_dir / "traces");
  if (cfg.runs < 2) throw ValidationError("run: at least two runs are required for a standard error");

  const BoundReport bound = compute_bound(cfg, true, workers);
  const GTable* table = bound.table ? &*bound.table : nullptr;
  if (table != nullptr) {
    auto os = io::open_out(out_dir / "gtable.csv");
    io::write_gtable(os, *table);
  }

  nlohmann::json controllers = nlohmann::json::array();
  int total_pd = 0;
  int bound_violations = 0;
  double worst_hold = 0.0;
  nlohmann::json aborted = nlohmann::json::array();
  for (const ControlLaw& law : cfg.controllers) {
    ControllerSummary sum = run_controller(cfg, law, table, workers);
    const std::string name = law_name(law);
    const double combined = std::hypot(sum.estimate.std_error, bound.g0_std_error());
    sum.bound_violation = sum.estimate.mean > bound.g0() + 3.0 * combined;
    total_pd += sum.pd_violations;
    bound_violations += sum.bound_violation ? 1 : 0;
    if (std::holds_alternative<OptimalLaw>(law)) worst_hold = std::max(worst_hold, sum.max_hold);

    nlohmann::json c = {{"controller", detail::to_json(law)},
                        {"mean", sum.estimate.mean},
                        {"std_error", sum.estimate.std_error},
                        {"runs", sum.estimate.records.size()},
                        {"seed", cfg.seed},
                        {"pd_violations", sum.pd_violations},
                        {"max_abs_C_xhat", sum.max_hold},
                        {"gap_to_bound", bound.g0() - sum.estimate.mean},
                        {"gap_in_std_errors", combined > 0.0 ? (bound.g0() - sum.estimate.mean) / combined : 0.0},
                        {"bound_violation", sum.bound_violation}};
    if (sum.mean_gap) {
      c["mean_gamma_integral"] = *sum.mean_gap;
      c["j_plus_gamma"] = sum.estimate.mean + *sum.mean_gap;
      c["j_plus_gamma_std_error"] = *sum.identity_se;
    }
    for (const auto& [run, what] : sum.aborted) {
      aborted.push_back({{"controller", name}, {"run", run}, {"error", what}});
    }
    controllers.push_back(c);

    const auto dir = out_dir / "traces" / name;
    {
      auto os = io::open_out(dir / "runs.csv");
      io::write_run_records(os, sum.estimate.records);
    }
    // Full traces of run 0 for inspection.
    RunTraces tr;
    (void)simulate_run(cfg, law, 0, &tr);
    {
      auto os = io::open_out(dir / "events.csv");
      io::write_events(os, tr.events);
    }
    for (const Station s : {Station::a, Station::b}) {
      const FilterTrace& ft = s == Station::a ? tr.a : tr.b;
      const std::string sfx(1, tag(s));
      auto fo = io::open_out(dir / ("filter_" + sfx + ".csv"));
      io::write_filter_trace(fo, ft);
      auto co = io::open_out(dir / ("control_" + sfx + ".csv"));
      io::write_control_trace(co, ft);
    }
  }

  res.report = {{"scenario_digest", scenario_digest(cfg)},
                {"seed", cfg.seed},
                {"runs", cfg.runs},
                {"dt", cfg.dt},
                {"horizon", cfg.horizon},
                {"controllers", controllers},
                {"bound", to_json(bound, cfg)},
                {"invariants",
                 {{"pd_violations", total_pd},
                  {"max_abs_C_xhat_optimal", worst_hold},
                  {"bound_violations", bound_violations}}},
                {"aborted_runs", aborted},
                {"scenario", render(cfg)}};
  write_json(out_dir / "report.json", res.report);
  write_json(out_dir / "timing.json", {{"wall_clock_seconds", elapsed_seconds(t0)}});
  if (!aborted.empty()) res.code = ExitCode::numeric;
  return res;
}

inline RunResult cmd_bound(const ScenarioConfig& cfg, const std::filesystem::path& out_dir, unsigned workers = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out_dir);
  const BoundReport bound = compute_bound(cfg, true, workers);
  if (bound.table) {
    auto os = io::open_out(out_dir / "gtable.csv");
    io::write_gtable(os, *bound.table);
  }
  RunResult res;
  res.report = to_json(bound, cfg);
  res.report["scenario_digest"] = scenario_digest(cfg);
  write_json(out_dir / "report.json", res.report);
  write_json(out_dir / "timing.json", {{"wall_clock_seconds", elapsed_seconds(t0)}});
  return res;
}

// ---------------------------------------------------------------------------
// Verify

struct VerifyOptions {
  std::string suite = "all";  // all | matrix | identity | gtable | hold | ordering
  std::uint64_t seed = 1;
  int instances = 1000;
  double hold_dt = 1e-3;
  bool mutate_s_map = false;
  unsigned workers = 0;
};

/// Reference isotropic scenario with a configurable horizon and run count.
[[nodiscard]] inline ScenarioConfig reference_scenario(double horizon = 2.0, int runs = 1000) {
  ScenarioConfig cfg;
  cfg.horizon = horizon;
  cfg.dt = 1e-3;
  cfg.seed = 42;
  cfg.runs = runs;
  cfg.optics.psi_bar = 1.0;
  cfg.optics.f_c = 1.0;
  cfg.optics.rho = rho_from_optics(1.0, 1.0);
  cfg.optics.eta = 50.0;
  cfg.optics.R = SymMat::scalar(2, 0.05);
  const Matrix i2 = Matrix::Identity(2, 2);
  const SystemMatrices m{-i2, i2, i2, i2, Matrix::Zero(2, 2)};
  for (const Station s : {Station::a, Station::b}) {
    auto& st = cfg.station(s);
    st.schedule = LtiSchedule::constant(m, horizon);
    st.power = ConstantPower{1.0};
    st.x0_mean = Vector::Zero(2);
    st.sigma0 = SymMat::scalar(2, 0.1);
  }
  cfg.controllers = {OptimalLaw{}, ZeroLaw{}, ProportionalLaw{}};
  cfg.bound.pdmp_paths = 100000;
  cfg.bound.pdmp_dt = 2.5e-4;
  validate(cfg);
  return cfg;
}

/// Bound checks on a short reference horizon: every controller stays
/// below the bound, and the optimal law attains it.
inline std::vector<props::Result> ordering_checks(unsigned workers) {
  const ScenarioConfig cfg = reference_scenario(0.5, 200);
  const IsotropicCheck iso = isotropic_params(cfg);
  const double g0 = g0_extrapolated(*iso.params, grid_spec(cfg)).extrapolated;
  props::Result upper{"every controller below the bound"};
  props::Result attain{"optimal law attains the bound"};
  for (const ControlLaw& law : cfg.controllers) {
    const JEstimate est = estimate_J(cfg, law, cfg.runs, workers);
    ++upper.total;
    const double z = (est.mean - g0) / est.std_error;
    upper.worst = std::max(upper.worst, z);
    if (z <= 3.0) ++upper.passed;
    if (std::holds_alternative<OptimalLaw>(law)) {
      attain.total = 1;
      attain.worst = std::abs(z);
      attain.passed = std::abs(z) <= 3.0 ? 1 : 0;
      attain.note = "J = " + std::to_string(est.mean) + ", g0 = " + std::to_string(g0);
    }
  }
  return {upper, attain};
}

struct VerifySummary {
  std::vector<props::Result> results;
  [[nodiscard]] bool ok() const {
    return std::all_of(results.begin(), results.end(), [](const props::Result& r) { return r.ok(); });
  }
};

inline VerifySummary cmd_verify(const VerifyOptions& opt, std::ostream& log) {
  static const std::vector<std::string> known{"all", "matrix", "identity", "gtable", "hold", "ordering"};
  if (std::find(known.begin(), known.end(), opt.suite) == known.end()) {
    throw ValidationError("verify: unknown suite '" + opt.suite + "'");
  }
  auto want = [&](const char* s) { return opt.suite == "all" || opt.suite == s; };
  const props::SMapFn smap = opt.mutate_s_map ? props::SMapFn(props::mutated_s_map)
                                              : props::SMapFn(props::reference_s_map);
  VerifySummary sum;
  auto add = [&](props::Result r) {
    log << (r.ok() ? "PASS " : "FAIL ") << r.name << ": " << r.passed << "/" << r.total
        << " worst=" << r.worst;
    if (!r.note.empty()) log << " (" << r.note << ")";
    log << '\n';
    sum.results.push_back(std::move(r));
  };
  if (want("matrix")) {
    add(props::p3(opt.instances, opt.seed, smap));
    add(props::p4(opt.instances, opt.seed + 1, smap));
    add(props::p5(opt.instances, opt.seed + 2));
    add(props::a20(opt.instances, opt.seed + 3));
    add(props::p6(opt.instances, opt.seed + 4));
    add(props::k_operator_consistency(opt.seed + 5));
  }
  if (want("identity")) add(props::step_i(50, 100000, opt.seed + 6));
  if (want("gtable")) {
    const ScenarioConfig cfg = reference_scenario();
    GridSpec spec;
    spec.n_sigma = 64;
    spec.n_time = 512;
    spec.max_slices = 17;
    add(props::gtable_monotone(solve_g_isotropic(*isotropic_params(cfg).params, spec)));
  }
  if (want("hold")) add(props::hold_invariant(opt.hold_dt));
  if (want("ordering")) {
    for (auto& r : ordering_checks(opt.workers)) add(std::move(r));
  }
  return sum;
}

}  // namespace beamtrack
