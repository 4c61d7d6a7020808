#include <gtest/gtest.h>

#include <string>

#include "dwcool/config.hpp"

using namespace dwcool;

namespace {

// Asserts a ConfigError whose message mentions `needle`.
void expect_config_error(const std::string& text, const std::string& needle) {
  try {
    parse_config_text(text);
    ADD_FAILURE() << "accepted: " << text;
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError) << e.what();
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig c = parse_config_text("{}");
  ASSERT_TRUE(c.double_well.has_value());
  EXPECT_DOUBLE_EQ(c.double_well->nu, fixtures::main_double_well().nu);
  EXPECT_EQ(c.cavities.size(), 3u);
  EXPECT_EQ(c.steady.method, SteadyMethod::automatic);
  EXPECT_EQ(c.normalization, DampingNormalization::well);
  EXPECT_EQ(c.tomography.coherences.size(), 1u);
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
  expect_config_error(R"({"bogus": 1})", "bogus: unknown key");
  expect_config_error(R"({"bath": {"temperature_K": 0.01, "Q": 5}})", "bath.Q: unknown key");
  expect_config_error(R"({"cavities": [{"detuning_transition": [1, 0], "extra": true}]})",
                      "cavities[0].extra: unknown key");
  expect_config_error(R"({"tomography": {"planted": [{"j": 1, "k": 0, "phase": 1}]}})",
                      "tomography.planted[0].phase");
}

TEST(Config, MalformedAndMistypedInput) {
  expect_config_error("{\"bath\": ", "malformed JSON");
  expect_config_error("[1, 2]", "expected an object");
  expect_config_error(R"({"bath": {"temperature_K": "cold"}})", "bath.temperature_K: expected a number");
  expect_config_error(R"({"tomography": {"points": 10.5}})", "tomography.points: expected an integer");
  expect_config_error(R"({"cool_opt": {"budget": -3}})", "cool_opt.budget");
  expect_config_error(R"({"steady": {"method": "magic"}})", "unknown solver");
}

TEST(Config, RangeChecks) {
  expect_config_error(R"({"bath": {"quality": 0}})", "bath.quality");
  expect_config_error(R"({"steady": {"tol": 0.5}})", "steady.tol");
  expect_config_error(R"({"csl": {"lambda_grid_Hz": [1e-9, -1]}})", "csl.lambda_grid_Hz");
  expect_config_error(R"({"csl": {"lower_ratio": 1.0}})", "csl.lower_ratio");
  expect_config_error(R"({"double_well": {"mass_kg": 1e-18, "nu_J_per_m2": 1e-5}})", "beta_J_per_m4");
  expect_config_error(R"({"cavities": [{"detuning_transition": [12, 0]}]})", "outside the retained levels");
  expect_config_error(R"({"tomography": {"planted": [{"j": 0, "k": 1}]}})", "j > k");
}

TEST(Config, MutuallyExclusiveChoices) {
  expect_config_error(R"({"double_well": {"mass_kg": 1e-18, "nu_J_per_m2": 1e-5, "beta_J_per_m4": 1e15},
                          "physical_chain": true})",
                      "mutually exclusive");
  expect_config_error(R"({"cavities": [{}]})", "exactly one of");
  expect_config_error(R"({"cavities": [{"detuning_rad_per_s": -1e5, "detuning_transition": [1, 0]}]})",
                      "exactly one of");
}

TEST(Config, MembraneRegimeMustMatchTension) {
  expect_config_error(R"({"physical": {"regime": "plate", "membrane": {"tension_N_per_m": 0.1}}})", "tension");
  expect_config_error(R"({"physical": {"regime": "tensioned", "membrane": {"tension_N_per_m": 0}}})", "tension");
  expect_config_error(R"({"physical": {"regime": "sheet"}})", "physical.regime");
  const RunConfig c = parse_config_text(R"({"physical": {"regime": "plate"}, "physical_chain": true})");
  EXPECT_EQ(c.physical.regime, MembraneRegime::plate);
  EXPECT_EQ(c.physical.membrane.tension, 0.0);
  EXPECT_FALSE(c.double_well.has_value());
}

TEST(Config, ParsesNestedSections) {
  const RunConfig c = parse_config_text(R"({
    "bath": {"temperature_K": 0.02, "quality": 2e6},
    "damping_normalization": "harmonic",
    "cavities": [{"detuning_rad_per_s": -3e5, "kappa_rad_per_s": 1e4, "nbar_c": 250, "fock_truncation": 4}],
    "steady": {"method": "krylov", "tol": 1e-9},
    "csl": {"sigmas": [1e-7], "lambda_grid_Hz": [0, 1e-8]},
    "tomography": {"coherences": [[3, 2]], "planted": [{"j": 3, "k": 2, "re": 0.01, "im": -0.02}], "shots": 100}
  })");
  EXPECT_DOUBLE_EQ(c.bath.temperature, 0.02);
  EXPECT_EQ(c.normalization, DampingNormalization::harmonic);
  ASSERT_EQ(c.cavities.size(), 1u);
  EXPECT_DOUBLE_EQ(*c.cavities[0].detuning, -3e5);
  EXPECT_EQ(c.cavities[0].fock_truncation, 4);
  EXPECT_EQ(c.steady.method, SteadyMethod::krylov);
  EXPECT_EQ(c.csl.lambda_grid.size(), 2u);
  EXPECT_EQ(c.tomography.coherences[0], std::make_pair(3, 2));
  EXPECT_EQ(c.tomography.planted[0].value, cplx(0.01, -0.02));
  EXPECT_EQ(c.tomography.shots, 100);
}

TEST(Config, BuildSystemResolvesCavities) {
  const RunConfig c = parse_config_text(R"({"cavities": [{"detuning_transition": [1, 0], "nbar_c": 300},
                                                         {"detuning_rad_per_s": -1e5, "kappa_rad_per_s": 2e3}]})");
  const SystemSpec sys = build_system(c, resolve_double_well(c), 2);
  ASSERT_EQ(sys.cavities.size(), 2u);
  const double d10 = sys.spectrum.delta(1, 0);
  EXPECT_DOUBLE_EQ(sys.cavities[0].detuning, -d10);
  EXPECT_DOUBLE_EQ(sys.cavities[0].kappa, fixtures::kappa_over_delta10 * d10);
  EXPECT_DOUBLE_EQ(sys.cavities[1].kappa, 2e3);
  for (const auto& m : sys.cavities) EXPECT_EQ(m.fock_truncation, 2);
  const SystemSpec empty = build_system(parse_config_text(R"({"cavities": []})"), resolve_double_well(c));
  EXPECT_TRUE(empty.cavities.empty());
}

}  // namespace
