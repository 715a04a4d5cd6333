// beamtrack: run scenarios, compute the bound, verify properties.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "beamtrack/harness.hpp"

namespace {

using namespace beamtrack;

struct Args {
  std::string scenario;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<double> dt;
  std::string controllers;
  std::optional<int> grid_sigma;
  std::optional<int> grid_time;
  std::optional<int> pdmp_paths;
  unsigned workers = 0;
  VerifyOptions verify;
};

ScenarioConfig scenario_from(const Args& a) {
  Overrides ov;
  ov.seed = a.seed;
  ov.runs = a.runs;
  ov.dt = a.dt;
  if (!a.controllers.empty()) ov.controllers = parse_controller_list(a.controllers);
  ov.grid_sigma = a.grid_sigma;
  ov.grid_time = a.grid_time;
  ov.pdmp_paths = a.pdmp_paths;
  try {
    return apply_overrides(load_scenario_file(a.scenario), ov);
  } catch (const SchemaError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ValidationError(a.scenario + " (after overrides): " + e.what());
  }
}

void add_scenario_flags(CLI::App* cmd, Args& a) {
  cmd->add_option("--scenario", a.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seed", a.seed, "master seed");
  cmd->add_option("--grid-sigma", a.grid_sigma, "sigma nodes per axis")->check(CLI::PositiveNumber);
  cmd->add_option("--grid-time", a.grid_time, "backward time steps")->check(CLI::PositiveNumber);
  cmd->add_option("--pdmp-paths", a.pdmp_paths, "PDMP Monte Carlo paths")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", a.workers, "worker threads (0: hardware)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative beam tracking: simulation, bound, property checks"};
  app.require_subcommand(1);
  Args a;

  auto* run = app.add_subcommand("run", "simulate controllers and compare with the bound");
  add_scenario_flags(run, a);
  run->add_option("--runs", a.runs, "closed-loop runs per controller")->check(CLI::PositiveNumber);
  run->add_option("--dt", a.dt, "simulation step")->check(CLI::PositiveNumber);
  run->add_option("--controllers", a.controllers, "comma list: optimal,zero,proportional");

  auto* bound = app.add_subcommand("bound", "grid and PDMP bound only");
  add_scenario_flags(bound, a);
  bound->add_option("--dt", a.dt, "scenario step (PDMP flow step unless bound.pdmp_dt is set)")
      ->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "property suites");
  verify->add_option("--suite", a.verify.suite, "all|matrix|identity|gtable|hold|ordering");
  verify->add_option("--seed", a.verify.seed, "property seed");
  verify->add_option("--instances", a.verify.instances, "random instances per matrix property")
      ->check(CLI::PositiveNumber);
  verify->add_option("--dt", a.verify.hold_dt, "step for the hold-invariant check")->check(CLI::PositiveNumber);
  verify->add_flag("--mutate-s-map", a.verify.mutate_s_map, "inject a sign error into the posterior map");
  verify->add_option("--workers", a.verify.workers, "worker threads (0: hardware)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version exit 0; every usage error maps to the validation code.
    return app.exit(e) == 0 ? 0 : static_cast<int>(ExitCode::validation);
  }

  try {
    if (run->parsed()) {
      const RunResult r = cmd_run(scenario_from(a), a.out, a.workers);
      for (const auto& c : r.report["controllers"]) {
        std::cout << c["controller"].dump() << ": J = " << c["mean"].get<double>() << " +- "
                  << c["std_error"].get<double>() << '\n';
      }
      const auto& b = r.report["bound"];
      if (!b["g0_grid"].is_null()) std::cout << "g0_grid = " << b["g0_grid"].get<double>() << '\n';
      std::cout << "g0_pdmp = " << b["g0_pdmp"].get<double>() << " +- " << b["std_error"].get<double>() << '\n';
      for (const auto& ab : r.report["aborted_runs"]) std::cerr << "aborted: " << ab.dump() << '\n';
      return static_cast<int>(r.code);
    }
    if (bound->parsed()) {
      const RunResult r = cmd_bound(scenario_from(a), a.out, a.workers);
      if (r.report.contains("grid_declined")) {
        std::cout << "grid solver declined: " << r.report["grid_declined"].get<std::string>() << '\n';
      } else {
        std::cout << "g0_grid = " << r.report["g0_grid"].get<double>() << '\n';
      }
      std::cout << "g0_pdmp = " << r.report["g0_pdmp"].get<double>() << " +- "
                << r.report["std_error"].get<double>() << '\n';
      return static_cast<int>(r.code);
    }
    const VerifySummary s = cmd_verify(a.verify, std::cout);
    return static_cast<int>(s.ok() ? ExitCode::success : ExitCode::property_failure);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::validation);
  }
}
