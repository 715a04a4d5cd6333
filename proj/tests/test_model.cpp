#include <catch2/catch.hpp>

#include <cmath>

#include "beamtrack/model.hpp"

using namespace beamtrack;
using nlohmann::json;

namespace {

json isotropic_doc() {
  const json i2 = {{1, 0}, {0, 1}};
  const json st = {{"schedule", {{"A", {{-1, 0}, {0, -1}}}, {"B", i2}, {"C", i2}, {"D", i2}}},
                   {"power", {{"type", "constant"}, {"P", 1.0}}},
                   {"x0_mean", {0, 0}},
                   {"sigma0", {{0.1, 0}, {0, 0.1}}}};
  return {{"horizon", 2.0},
          {"dt", 1e-3},
          {"seed", 42},
          {"runs", 10},
          {"alpha", {1, 1}},
          {"optics", {{"psi_bar", 1.0}, {"f_c", 1.0}, {"eta", 50.0}, {"R", {{0.05, 0}, {0, 0.05}}}}},
          {"stations", {{"a", st}, {"b", st}}},
          {"controller", "optimal"}};
}

SystemMatrices mats(double a) {
  const Matrix i2 = Matrix::Identity(2, 2);
  return {-a * i2, i2, i2, i2, Matrix::Zero(2, 2)};
}

}  // namespace

TEST_CASE("minimal isotropic document loads", "[model]") {
  const ScenarioConfig cfg = load_scenario(isotropic_doc());
  CHECK(cfg.horizon == 2.0);
  CHECK(cfg.steps() == 2000);
  CHECK(cfg.optics.rho == 2.0);
  CHECK(cfg.a.schedule.n() == 2);
  REQUIRE(cfg.controllers.size() == 1);
  CHECK(std::holds_alternative<OptimalLaw>(cfg.controllers[0]));
}

TEST_CASE("rank-deficient C is rejected", "[model]") {
  json doc = isotropic_doc();
  doc["stations"]["a"]["schedule"]["C"] = {{1, 0}, {2, 0}};
  CHECK_THROWS_AS(load_scenario(doc), RankDeficientCError);
}

TEST_CASE("singular C B is rejected", "[model]") {
  json doc = isotropic_doc();
  doc["stations"]["b"]["schedule"]["B"] = {{1, 1}, {1, 1}};
  CHECK_THROWS_AS(load_scenario(doc), SingularCBError);
}

TEST_CASE("optimal controller needs C0 x0 = 0", "[model]") {
  json doc = isotropic_doc();
  doc["stations"]["a"]["x0_mean"] = {1, 0};
  CHECK_THROWS_AS(load_scenario(doc), InitialConditionError);
  doc["controller"] = "zero";
  CHECK_NOTHROW(load_scenario(doc));
}

TEST_CASE("schema violations are named", "[model]") {
  json doc = isotropic_doc();
  doc["dt"] = 0.5;  // > T/100
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
  doc = isotropic_doc();
  doc.erase("optics");
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
  doc = isotropic_doc();
  doc["stations"]["a"]["sigma0"] = {{1, 2}, {2, 1}};
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
  doc = isotropic_doc();
  doc["stations"]["a"]["power"] = {{"type", "laser"}};
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
  doc = isotropic_doc();
  doc["controller"] = "bang-bang";
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
  doc = isotropic_doc();
  doc["optics"]["R"] = {{1, 0}, {0, -1}};
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
}

TEST_CASE("JSON syntax errors carry a position", "[model]") {
  try {
    (void)load_scenario(std::string("{\n  \"horizon\": 2,\n  oops\n}"));
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("render round-trips", "[model]") {
  json doc = isotropic_doc();
  doc["controller"] = json::array({"optimal", "zero", {{"type", "proportional"}, {"gain", {{2, 0}, {0, 3}}}}});
  doc["stations"]["b"]["power"] = {{"type", "lognormal_fade"}, {"P_mean", 1.5}, {"sigma_log", 0.3}, {"tau_corr", 0.1}};
  doc["stations"]["a"]["power"] = {{"type", "ook"}, {"P", 2.0}, {"bit_duration", 0.01}, {"duty", 0.5}};
  doc["optics"]["psi_bar"] = "inf";
  const ScenarioConfig cfg = load_scenario(doc);
  const ScenarioConfig again = load_scenario(render(cfg));
  CHECK(cfg == again);
  CHECK(scenario_digest(cfg) == scenario_digest(again));
  CHECK(cfg.optics.rho == 0.0);
}

TEST_CASE("rho from optics", "[model]") {
  CHECK_THAT(rho_from_optics(1.0, std::sqrt(2.0)), Catch::Matchers::WithinRel(1.0, 1e-15));
  CHECK(rho_from_optics(2.0, 1.0) == 0.5);
  CHECK_THAT(rho_from_optics(1e-3, 0.1), Catch::Matchers::WithinRel(2e8, 1e-12));
  CHECK_THROWS_AS(rho_from_optics(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(rho_from_optics(1.0, -1.0), DomainError);
  for (double p = 0.1; p < 5.0; p *= 1.5) {
    CHECK(rho_from_optics(p * 1.1, 1.0) < rho_from_optics(p, 1.0));
    CHECK(rho_from_optics(1.0, p * 1.1) < rho_from_optics(1.0, p));
  }
}

TEST_CASE("schedule lookup", "[model]") {
  const LtiSchedule single = LtiSchedule::constant(mats(1.0), 2.0);
  CHECK(single.at(0.0) == mats(1.0));
  CHECK(single.at(1.3) == mats(1.0));
  CHECK(single.at(2.0) == mats(1.0));

  const LtiSchedule two({0.0, 1.0, 2.0}, {mats(1.0), mats(3.0)});
  CHECK(eval_matrices(two, 0.5) == mats(1.0));
  CHECK(eval_matrices(two, 1.0) == mats(3.0));
  CHECK(eval_matrices(two, 1.7) == mats(3.0));
  CHECK(eval_matrices(two, 2.0) == mats(3.0));
  CHECK_THROWS_AS(two.at(-1e-9), RangeError);
  CHECK_THROWS_AS(two.at(2.0 + 1e-9), RangeError);
  CHECK(&two.at(0.25) == &two.at(0.75));
}

TEST_CASE("schedule shape checks", "[model]") {
  CHECK_THROWS_AS(LtiSchedule({0.0, 1.0, 1.0}, {mats(1.0), mats(1.0)}), SchemaError);
  CHECK_THROWS_AS(LtiSchedule({0.5, 1.0}, {mats(1.0)}), SchemaError);
  SystemMatrices bad = mats(1.0);
  bad.B = Matrix::Identity(2, 3);
  CHECK_THROWS_AS(LtiSchedule::constant(bad, 1.0), SchemaError);
}

TEST_CASE("schedule must cover the horizon", "[model]") {
  json doc = isotropic_doc();
  const json iv = doc["stations"]["a"]["schedule"];
  doc["stations"]["a"]["schedule"] = {{"breakpoints", {0.0, 1.0}}, {"intervals", {iv}}};
  CHECK_THROWS_AS(load_scenario(doc), SchemaError);
  doc["stations"]["a"]["schedule"] = {{"breakpoints", {0.0, 1.0, 2.0}}, {"intervals", {iv, iv}}};
  CHECK_NOTHROW(load_scenario(doc));
}
