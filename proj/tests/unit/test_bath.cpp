#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "heomcal/bath.hpp"
#include "heomcal/units.hpp"

using namespace heomcal;
using bath::cplx;

TEST_CASE("spectral density against the closed form") {
  const BathSpec b = tier1_preset().platform.bath;
  const double w = units::two_pi;  // 1 GHz
  const double window = 1.0 / (1.0 + std::pow(b.low_cutoff / w, 2)) / (1.0 + std::pow(w / b.high_cutoff, 2));
  CHECK(bath::cutoff_window(b, w) == doctest::Approx(window));
  CHECK(bath::spectral_density(b, w) == doctest::Approx(1.8e-6 * window));
  // Far below the low cutoff the window suppresses the bare 1/w law.
  const double low = b.low_cutoff * 1e-2;
  CHECK(bath::spectral_density(b, low) < 1e-3 * units::two_pi * b.amplitude_a0 / low);
}

TEST_CASE("single exponential is recovered") {
  std::vector<double> t;
  std::vector<cplx> v;
  const cplx c(0.7, -0.2), nu(0.05, 0.0);
  for (int i = 0; i < 400; ++i) {
    t.push_back(0.5 * i);
    v.push_back(c * std::exp(-nu * t.back()));
  }
  bath::CorrelationTrace tr{t, v, 0.0};
  const auto d = bath::exp_decompose(tr, 1);
  REQUIRE(d.modes.size() == 1);
  CHECK(std::abs(d.modes[0].coeff - c) / std::abs(c) < 1e-8);
  CHECK(std::abs(d.modes[0].decay - nu) / std::abs(nu) < 1e-8);
  CHECK(bath::decomposition_residual(d, tr) < 1e-8);
}

TEST_CASE("three-mode synthetic round trip") {
  const std::vector<bath::ExpMode> truth{{cplx(1.0, 0.1), cplx(0.02, 0.0)},
                                          {cplx(-0.4, 0.0), cplx(0.2, 0.0)},
                                          {cplx(0.3, -0.05), cplx(1.5, 0.0)}};
  std::vector<double> t;
  std::vector<cplx> v;
  for (int i = 0; i < 2000; ++i) {
    t.push_back(0.05 * i);
    cplx s = 0.0;
    for (const auto& m : truth) s += m.coeff * std::exp(-m.decay * t.back());
    v.push_back(s);
  }
  bath::CorrelationTrace tr{t, v, 0.0};
  auto d = bath::exp_decompose(tr, 3);
  REQUIRE(d.modes.size() == 3);
  std::sort(d.modes.begin(), d.modes.end(), [](auto& a, auto& b) { return a.decay.real() < b.decay.real(); });
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(d.modes[k].coeff - truth[k].coeff) < 1e-6);
    CHECK(std::abs(d.modes[k].decay - truth[k].decay) < 1e-6);
  }
}

TEST_CASE("tier1 correlation decomposes to the residual bound") {
  const BathSpec b = tier1_preset().platform.bath;
  const auto grid = bath::default_correlation_grid();
  const auto corr = bath::correlation_function(b, grid);
  const auto d = bath::exp_decompose(corr, 3);
  CHECK(d.rel_rms_residual <= 1e-3);
  CHECK(bath::decomposition_residual(d, corr) == doctest::Approx(d.rel_rms_residual));
  bath::ExpDecomposition none;
  CHECK(bath::decomposition_residual(none, corr) == doctest::Approx(1.0));
  CHECK(bath::decomposition_residual(d.scaled(1.0), corr) == doctest::Approx(d.rel_rms_residual));
}

TEST_CASE("correlation is linear in the amplitude") {
  BathSpec b = tier1_preset().platform.bath;
  const std::vector<double> t{0.0, 1.0, 10.0, 100.0};
  const auto c1 = bath::correlation_function(b, t);
  b.amplitude_a0 *= 2.0;
  const auto c2 = bath::correlation_function(b, t);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(c2.values[i] - 2.0 * c1.values[i]) < 1e-12 * std::abs(c2.values[i]) + 1e-18);
}
