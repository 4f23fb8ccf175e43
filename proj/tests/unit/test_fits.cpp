#include <doctest.h>

#include <cmath>

#include "heomcal/error.hpp"
#include "heomcal/fits.hpp"

using namespace heomcal;
using namespace heomcal::fits;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(lo + (hi - lo) * i / (n - 1));
  return x;
}

}  // namespace

TEST_CASE("tau_aw") {
  const double a1[] = {1.0}, t1[] = {100.0};
  CHECK(tau_aw(a1, t1) == 100.0);
  const double a[] = {1.0, 3.0}, t[] = {50.0, 150.0};
  CHECK(tau_aw(a, t) == doctest::Approx(125.0));
  const double an[] = {-1.0, -3.0};
  CHECK(tau_aw(an, t) == tau_aw(a, t));
}

TEST_CASE("guard predicate") {
  CHECK(evaluate_guard(1.0, 10.0, 0.5, 15.0).passed);
  CHECK_FALSE(evaluate_guard(1.0, 10.0, 0.05, 15.0).passed);
  const auto g = evaluate_guard(1.0, 10.0, 0.5, 24.3);
  CHECK(g.tc_ratio == doctest::Approx(2.43));
  CHECK_FALSE(g.passed);
}

TEST_CASE("exp ceiling") {
  const auto x = linspace(10.0, 2000.0, 30);
  std::vector<double> flat(x.size(), 0.5), decay;
  for (double t : x) decay.push_back(0.5 + 0.4 * std::exp(-t / 100.0));

  const auto f = fit_exp_ceiling(x, decay);
  CHECK(f.param("T") == doctest::Approx(100.0).epsilon(1e-3));
  CHECK_FALSE(f.ceiling_hit);

  std::vector<double> slow;
  for (double t : x) slow.push_back(0.5 + 0.45 * std::exp(-t / 34200.0));
  const auto s = fit_exp_ceiling(x, slow);
  CHECK(s.ceiling_hit);
  CHECK(s.param("T") == doctest::Approx(5.0 * 1990.0));

  const auto c = fit_exp_ceiling(x, flat);
  CHECK(c.ceiling_hit);
  CHECK(std::abs(c.param("a")) < 1e-6);
}

TEST_CASE("single exponential drives the second biexp mode to the guard failure") {
  const auto x = linspace(10.0, 500.0, 50);
  std::vector<double> y;
  for (double t : x) y.push_back(0.5 + 0.4 * std::exp(-t / 60.0));
  const auto f = fit_biexp_revival(x, y);
  REQUIRE(f.guard);
  CHECK_FALSE(f.guard->passed);
  CHECK(f.r_squared > 0.9999);
}

TEST_CASE("stretched exponential") {
  const auto x = linspace(1.0, 400.0, 60);
  std::vector<double> y1, yh;
  for (double t : x) {
    y1.push_back(0.2 + 0.7 * std::exp(-t / 80.0));
    yh.push_back(0.2 + 0.7 * std::exp(-std::sqrt(t / 80.0)));
  }
  CHECK(fit_stretched(x, y1).param("beta") == doctest::Approx(1.0).epsilon(1e-2));
  const auto h = fit_stretched(x, yh);
  CHECK(h.param("beta") == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(h.param("T") == doctest::Approx(80.0).epsilon(1e-2));
}

TEST_CASE("triexp sanity") {
  const auto x = linspace(10.0, 500.0, 50);
  std::vector<double> two, three;
  for (double t : x) {
    const double env = 0.3 * std::exp(-t / 20.0) + 0.2 * std::exp(-t / 150.0);
    two.push_back(0.5 + env * std::cos(2 * M_PI * 0.004 * t));
    three.push_back(0.5 + (env + 0.25 * std::exp(-t / 60.0)) * std::cos(2 * M_PI * 0.004 * t));
  }
  const auto base = fit_biexp_revival(x, two);
  const auto tri = fit_triexp_sanity(x, two, base);
  CHECK(tri.value("a3_ratio") <= 1e-3);
  CHECK(std::abs(tri.value("delta_r_squared")) <= 1e-5);

  const auto base3 = fit_biexp_revival(x, three);
  const auto tri3 = fit_triexp_sanity(x, three, base3);
  CHECK(tri3.value("a3_ratio") > 0.1);
}

TEST_CASE("t1 modes") {
  const auto x = linspace(100.0, 2000.0, 8);
  std::vector<double> y;
  for (double t : x) y.push_back(0.88 * std::exp(-t / 24800.0));
  const auto f = fit_t1(x, y, T1Mode::constrained_a_free);
  CHECK(f.value("a") == doctest::Approx(0.88).epsilon(1e-6));
  CHECK(f.value("beta") == 1.0);
  CHECK(f.value("t1") == doctest::Approx(24800.0).epsilon(1e-4));
  CHECK(fit_t1(x, y, T1Mode::constrained_a_pinned).value("a") == 1.0);
  CHECK(fit_t1(x, y, T1Mode::free_beta_a_pinned).value("beta") < 1.0);
  CHECK(t1_mode_from_string("free_beta_a_pinned") == T1Mode::free_beta_a_pinned);
}

TEST_CASE("rabi cosine") {
  const auto a = linspace(0.01, 0.99, 30);
  std::vector<double> y, flat(a.size(), 0.3);
  for (double v : a) y.push_back(0.5 - 0.5 * std::cos(2 * M_PI * v / 0.615));
  const auto f = fit_rabi_cosine(a, y);
  CHECK(f.value("pi_amp") == doctest::Approx(0.3075).epsilon(1e-4));
  CHECK(f.value("p_max") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(fit_rabi_cosine(a, flat), FitError);
}

TEST_CASE("r squared") {
  const std::vector<double> y{1.0, 2.0, 3.0}, m{1.0, 2.0, 3.0}, c{2.0, 2.0, 2.0};
  CHECK(r_squared(y, m) == 1.0);
  CHECK(r_squared(y, c) == doctest::Approx(0.0));
  CHECK(r_squared(c, c) == 1.0);
}
