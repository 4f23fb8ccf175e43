#include <doctest.h>

#include <cmath>

#include "heomcal/error.hpp"
#include "heomcal/platform.hpp"
#include "heomcal/units.hpp"

using namespace heomcal;

TEST_CASE("shipped config loads into the preset") {
  const RunConfig cfg = load_run_config(std::string(HEOMCAL_CONFIG_DIR) + "/tier1.yaml");
  CHECK(cfg == tier1_preset());
  CHECK(cfg.platform.qubit_freq == doctest::Approx(units::two_pi * 5.528));
  CHECK(cfg.platform.t1_char == doctest::Approx(24800.0));
  CHECK(cfg.platform.t2_char == doctest::Approx(34200.0));
  CHECK(cfg.platform.levels == 3);
}

TEST_CASE("serialize round trip") {
  const RunConfig cfg = tier1_preset();
  CHECK(parse_run_config(serialize_run_config(cfg)) == cfg);
  CHECK(parse_platform(serialize_platform(cfg.platform)) == cfg.platform);
}

TEST_CASE("invariant violations name the field") {
  PlatformConfig p = tier1_preset().platform;
  p.t2_char = 3.0 * p.t1_char;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  try {
    p.validate();
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("t2") != std::string::npos);
  }

  PlatformConfig two = tier1_preset().platform;
  two.levels = 2;
  two.bath.coupling_diag = {0.0, 1.0};
  CHECK_NOTHROW(two.validate());
  two.bath.coupling_diag = {0.0, 1.0, 2.0};
  CHECK_THROWS_AS(two.validate(), ConfigError);
}

TEST_CASE("lindblad rates") {
  PlatformConfig p = tier1_preset().platform;
  auto r = derive_lindblad_rates(p);
  CHECK(r.gamma1 == doctest::Approx(1.0 / 24800.0));
  CHECK(r.gamma_phi == doctest::Approx(1.0 / 34200.0 - 1.0 / 49600.0).epsilon(1e-12));
  CHECK(r.gamma_phi == doctest::Approx(9.0785e-6).epsilon(1e-4));

  p.t2_char = 2.0 * p.t1_char;
  CHECK(derive_lindblad_rates(p).gamma_phi == doctest::Approx(0.0));

  p.t1_char = 1e6;
  p.t2_char = 1e6;
  CHECK(derive_lindblad_rates(p).gamma_phi == doctest::Approx(5e-7));

  p.t1_char = INFINITY;
  CHECK_THROWS_AS(derive_lindblad_rates(p), ConfigError);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse_run_config("platform: {name: x}\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1, 2"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/tier1.yaml"), ConfigError);
}
