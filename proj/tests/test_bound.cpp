#include <catch2/catch.hpp>

#include <cmath>
#include <limits>

#include "beamtrack/bound.hpp"
#include "beamtrack/harness.hpp"
#include "beamtrack/properties.hpp"

using namespace beamtrack;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Matrix I2 = Matrix::Identity(2, 2);

IsotropicParams unit_params() {
  IsotropicParams p;
  p.a = 1.0;
  p.d = 1.0;
  p.varrho = 0.05;
  p.rho = 0.5;
  p.horizon = 1.0;
  p.nu_a = NuPath::constant(1.0, 1.0);
  p.nu_b = NuPath::constant(1.0, 1.0);
  p.sigma0_a = 1.0;
  p.sigma0_b = 1.0;
  return p;
}

}  // namespace

TEST_CASE("jump operator examples", "[bound]") {
  const ValueFn constant = [](const SymMat&, const SymMat&) { return 3.0; };
  CHECK(apply_L(constant, Station::a, SymMat::identity(2), SymMat::identity(2), I2, SymMat::identity(2)) == 0.0);

  const ValueFn trace_a = [](const SymMat& a, const SymMat&) { return a.trace(); };
  CHECK_THAT(apply_L(trace_a, Station::a, SymMat::scalar(2, 2.0), SymMat::identity(2), I2, SymMat::scalar(2, 2.0)),
             WithinAbs(-2.0, 1e-14));
  CHECK(apply_L(trace_a, Station::b, SymMat::scalar(2, 2.0), SymMat::identity(2), I2, SymMat::scalar(2, 2.0)) ==
        0.0);

  props::Sampler s(41);
  for (int k = 0; k < 100; ++k) {
    const int n = s.dim();
    const Matrix c = s.full_rank_c(n);
    const double rho = s.rho();
    const ValueFn g = [&](const SymMat& a, const SymMat&) { return h(a, c, rho); };
    CHECK(apply_L(g, Station::a, s.pd(n), s.pd(n), c, s.pd(2)) > 0.0);
  }
}

TEST_CASE("Lyapunov flow examples", "[bound]") {
  const SymMat sigma(Matrix{{1.0, 0.3}, {0.3, 2.0}});
  CHECK(flow_X(sigma, -I2, I2, 0.0) == sigma);
  CHECK((flow_X(sigma, Matrix::Zero(2, 2), I2, 0.1).matrix() - sigma.matrix() - 0.1 * I2).norm() < 1e-15);
  const double a = 0.7, d = 1.3, s0 = 0.4, eps = 0.01;
  const SymMat iso = flow_X(SymMat::scalar(2, s0), -a * I2, d * I2, eps);
  CHECK((iso.matrix() - (s0 + eps * (-2 * a * s0 + d * d)) * I2).norm() < 1e-15);
  CHECK_THROWS_AS(flow_X(sigma, -I2, I2, -1e-3), DomainError);
}

TEST_CASE("isotropic scalar maps", "[bound]") {
  const IsotropicParams p = unit_params();
  CHECK_THAT(p.h(1.0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(p.s_map(p.varrho), WithinAbs(0.5 * p.varrho, 1e-15));
  CHECK_THAT(p.flow(0.4, 0.01), WithinAbs(0.4 + 0.01 * (-0.8 + 1.0), 1e-15));
  CHECK(p.s_map(0.0) == 0.0);
  // Scalar forms agree with the matrix maps on sigma I.
  const SymMat s = SymMat::scalar(2, 0.37);
  CHECK_THAT(h(s, I2, p.rho), WithinRel(p.h(0.37), 1e-14));
  CHECK_THAT(s_map(s, I2, SymMat::scalar(2, p.varrho))(0, 0), WithinRel(p.s_map(0.37), 1e-14));
}

TEST_CASE("one backward step", "[bound]") {
  IsotropicParams p = unit_params();
  GridSpec spec;
  spec.n_sigma = 8;
  spec.n_time = 1;
  spec.sigma_lo = 1.0;  // puts sigma = 1 on a node
  spec.sigma_hi = 8.0;
  p.horizon = 0.01;
  const GTable t = solve_g_isotropic(p, spec);
  REQUIRE(t.slices() == 2);
  CHECK(t.time_grid().front() == 0.01);
  CHECK(t.time_grid().back() == 0.0);
  CHECK_THAT(t.g0(1.0, 1.0), WithinAbs(0.01, 1e-15));
  const auto& grid = t.sigma_grid();
  for (std::size_t ia = 0; ia < grid.size(); ++ia) {
    for (std::size_t ib = 0; ib < grid.size(); ++ib) {
      const double expect = 0.01 * (p.h(grid[ib]) + p.h(grid[ia]));
      CHECK_THAT(t.at_node(1, ia, ib), WithinAbs(expect, 1e-15));
    }
  }
}

TEST_CASE("no power gives a zero value function", "[bound]") {
  IsotropicParams p = unit_params();
  p.nu_a = NuPath::constant(0.0, 1.0);
  p.nu_b = NuPath::constant(0.0, 1.0);
  GridSpec spec;
  spec.n_sigma = 24;
  spec.n_time = 50;
  const GTable t = solve_g_isotropic(p, spec);
  for (std::size_t s = 0; s < t.slices(); ++s) {
    for (const double v : t.slice(s)) CHECK(v == 0.0);
  }
}

TEST_CASE("value table is monotone and bounded", "[bound]") {
  const ScenarioConfig cfg = reference_scenario();
  const IsotropicParams p = *isotropic_params(cfg).params;
  GridSpec spec;
  spec.n_sigma = 48;
  spec.n_time = 512;
  spec.max_slices = 9;
  const GTable t = solve_g_isotropic(p, spec);
  CHECK(props::gtable_monotone(t).ok());
  const double cap = (p.alpha_a * 50.0 + p.alpha_b * 50.0) * p.horizon;
  for (std::size_t s = 0; s < t.slices(); ++s) {
    for (const double v : t.slice(s)) {
      CHECK(v >= 0.0);
      CHECK(v <= cap);
    }
  }
  // Values grow with the remaining horizon.
  CHECK(t.g0(0.1, 0.1) > t.value(1.0, 0.1, 0.1));
  CHECK_THAT(t.value(cfg.horizon, 0.1, 0.1), WithinAbs(0.0, 0.0));
}

TEST_CASE("grid refinement converges", "[bound]") {
  const ScenarioConfig cfg = reference_scenario();
  const IsotropicParams p = *isotropic_params(cfg).params;
  GridSpec spec;
  spec.n_sigma = 128;
  spec.n_time = 1024;
  spec.max_slices = 2;
  const double coarse = solve_g_isotropic(p, spec).g0(0.1, 0.1);
  spec.n_sigma *= 2;
  spec.n_time *= 2;
  const double fine = solve_g_isotropic(p, spec).g0(0.1, 0.1);
  CHECK(std::abs(fine - coarse) / fine < 0.01);
  spec.n_sigma *= 2;
  spec.n_time *= 2;
  const double finer = solve_g_isotropic(p, spec).g0(0.1, 0.1);
  CHECK(std::abs(finer - fine) / finer < 0.005);
  // First-order convergence: successive differences roughly halve.
  CHECK((fine - finer) / (coarse - fine) > 0.3);
  CHECK((fine - finer) / (coarse - fine) < 0.7);
}

TEST_CASE("grid solver errors", "[bound]") {
  IsotropicParams p = unit_params();
  p.nu_a = NuPath::constant(100.0, 1.0);
  p.nu_b = NuPath::constant(100.0, 1.0);
  GridSpec spec;
  spec.n_sigma = 16;
  spec.n_time = 100;
  CHECK_THROWS_AS(solve_g_isotropic(p, spec), StepSizeError);

  const GTable t = solve_g_isotropic(unit_params(), spec);
  CHECK_THROWS_AS(t.g0(-0.1, 1.0), GridRangeError);
  CHECK_THROWS_AS(t.g0(1.0, 2.0 * t.sigma_grid().back()), GridRangeError);
  CHECK_THROWS_AS(t.value(1.5, 1.0, 1.0), RangeError);

  // A flow that leaves the grid is reported, not clamped.
  GridSpec narrow = spec;
  narrow.sigma_lo = 0.01;
  narrow.sigma_hi = 0.02;
  CHECK_THROWS_AS(solve_g_isotropic(unit_params(), narrow), GridRangeError);
}

TEST_CASE("isotropic gate", "[bound]") {
  const ScenarioConfig ref = reference_scenario();
  REQUIRE(isotropic_params(ref).params);
  CHECK(isotropic_params(ref).params->rho == 2.0);

  ScenarioConfig fading = ref;
  fading.b.power = LognormalFade{1.0, 0.3, 0.1};
  CHECK_FALSE(isotropic_params(fading).params);
  CHECK_FALSE(isotropic_params(fading).reason.empty());

  ScenarioConfig skew = ref;
  skew.optics.R = SymMat(Matrix{{0.05, 0.01}, {0.01, 0.05}});
  CHECK(isotropic_params(skew).reason.find("R") != std::string::npos);

  ScenarioConfig tilted = ref;
  Matrix a = -I2;
  a(0, 1) = 0.2;
  const SystemMatrices m{a, I2, I2, I2, Matrix::Zero(2, 2)};
  tilted.a.schedule = tilted.b.schedule = LtiSchedule::constant(m, ref.horizon);
  CHECK(isotropic_params(tilted).reason.find("A") != std::string::npos);
}

TEST_CASE("PDMP degenerate cases", "[bound]") {
  ScenarioConfig cfg = reference_scenario(0.5, 10);
  cfg.bound.pdmp_dt = 1e-3;

  ScenarioConfig dark = cfg;
  dark.a.power = dark.b.power = ConstantPower{0.0};
  const PdmpProblem prob = pdmp_problem(dark);
  Rng rng(3);
  const PdmpPath path = simulate_pdmp(prob, NuPath::constant(0.0, 0.5), NuPath::constant(0.0, 0.5), rng);
  CHECK(path.reward == 0.0);
  CHECK(path.jumps_a + path.jumps_b == 0);
  // Pure Lyapunov flow: sigma' = -2 sigma + 1 from 0.1.
  const double exact = 0.5 + (0.1 - 0.5) * std::exp(-2.0 * 0.5);
  CHECK_THAT(path.final_a(0, 0), WithinAbs(exact, 2e-3));
  CHECK(estimate_pdmp(dark, 50).mean == 0.0);

  ScenarioConfig open = cfg;
  open.optics.psi_bar = std::numeric_limits<double>::infinity();
  open.optics.rho = 0.0;
  const PdmpEstimate e = estimate_pdmp(open, 200);
  CHECK_THAT(e.mean, WithinRel(100.0 * 0.5, 1e-12));
}

TEST_CASE("PDMP agrees with the grid on a short horizon", "[bound]") {
  ScenarioConfig cfg = reference_scenario(0.5, 10);
  cfg.bound.pdmp_dt = 2.5e-4;
  const double g0 = g0_extrapolated(*isotropic_params(cfg).params, grid_spec(cfg)).extrapolated;
  const PdmpEstimate e = estimate_pdmp(cfg, 4000);
  INFO("grid " << g0 << ", pdmp " << e.mean << " +- " << e.std_error);
  CHECK(std::abs(e.mean - g0) <= 3.0 * e.std_error);
}

TEST_CASE("PDMP handles non-isotropic scenarios", "[bound]") {
  ScenarioConfig cfg = reference_scenario(0.5, 10);
  Matrix a = -I2;
  a(0, 1) = 0.2;
  const SystemMatrices m{a, I2, I2, I2, Matrix::Zero(2, 2)};
  cfg.a.schedule = LtiSchedule::constant(m, cfg.horizon);
  cfg.b.power = LognormalFade{1.0, 0.3, 0.05};
  const PdmpEstimate e = estimate_pdmp(cfg, 200);
  CHECK(e.mean > 0.0);
  CHECK(e.mean < 100.0 * cfg.horizon * 1.5);
  CHECK(e.std_error > 0.0);
}

TEST_CASE("gap vanishes without attenuation and along the hold", "[bound]") {
  ScenarioConfig cfg = reference_scenario(0.2, 10);
  const GTable table = solve_g_isotropic(*isotropic_params(cfg).params, GridSpec{48, 400, 0.0, 0.0, 41});
  RunTraces tr;
  (void)simulate_run(cfg, OptimalLaw{}, 0, &tr);
  CHECK(std::abs(estimate_gap(tr, table, cfg)) < 1e-3);
  (void)simulate_run(cfg, ZeroLaw{}, 0, &tr);
  CHECK(estimate_gap(tr, table, cfg) > 0.0);

  ScenarioConfig open = cfg;
  open.optics.rho = 0.0;
  open.optics.psi_bar = std::numeric_limits<double>::infinity();
  const GTable flat = solve_g_isotropic(*isotropic_params(open).params, GridSpec{48, 400, 0.0, 0.0, 41});
  (void)simulate_run(open, ZeroLaw{}, 0, &tr);
  CHECK(estimate_gap(tr, flat, open) == 0.0);
}
