#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "heomcal/error.hpp"
#include "heomcal/stats.hpp"

using namespace heomcal;
using namespace heomcal::stats;

namespace {

std::optional<double> mean_y(std::span<const double>, std::span<const double> y, bool) {
  return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
}

std::vector<double> iota_x(std::size_t n) {
  std::vector<double> x(n);
  std::iota(x.begin(), x.end(), 0.0);
  return x;
}

}  // namespace

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST_CASE("philox4x32-10 known answers") {
  using B = Philox4x32::Block;
  CHECK(Philox4x32::block(B{0, 0, 0, 0}, {0, 0}) == B{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block(B{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        B{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::block(B{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        B{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("resample indices are addressed by index") {
  const auto a = resample_indices(7, 3, 30);
  const auto b = resample_indices(7, 3, 30);
  const auto c = resample_indices(7, 4, 30);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(*std::max_element(a.begin(), a.end()) < 30);
}

TEST_CASE("constant data gives a zero-width interval") {
  const auto x = iota_x(20);
  const std::vector<double> y(20, 3.25);
  const auto ci = bca_ci(x, y, mean_y, {500, 11, 0.95, 1});
  CHECK(ci.point == 3.25);
  CHECK(ci.lo == 3.25);
  CHECK(ci.hi == 3.25);
}

TEST_CASE("reproducible and accounted") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  const auto x = iota_x(30);
  std::vector<double> y;
  for (int i = 0; i < 30; ++i) y.push_back(n(rng));
  const BootstrapSpec spec{1000, 99, 0.95, 2};
  const auto a = bca_ci(x, y, mean_y, spec);
  const auto b = bca_ci(x, y, mean_y, spec);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.z0 == b.z0);

  // Drop draws whose first case is even.
  Statistic picky = [](std::span<const double> xs, std::span<const double> ys, bool resample) -> std::optional<double> {
    if (resample && static_cast<int>(xs[0]) % 2 == 0) return std::nullopt;
    return std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  };
  const auto d = bca_ci(x, y, picky, spec);
  CHECK(d.dropped > 0);
  CHECK(d.valid_rate < 1.0);
  CHECK(std::lround(d.valid_rate * d.resamples) + d.dropped == d.resamples);
}

TEST_CASE("BCa shifts toward the skew of the sample") {
  std::mt19937_64 rng(17);
  std::exponential_distribution<double> e(1.0);
  const std::size_t n = 25;
  const auto x = iota_x(n);
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(e(rng));
  const BootstrapSpec spec{4000, 3, 0.95, 1};
  const auto ci = bca_ci(x, y, mean_y, spec);

  // Percentile interval from the same resample set.
  std::vector<double> reps;
  for (int b = 0; b < spec.resamples; ++b) {
    double s = 0.0;
    for (auto i : resample_indices(spec.seed, b, n)) s += y[i];
    reps.push_back(s / n);
  }
  std::sort(reps.begin(), reps.end());
  const double plo = quantile_sorted(reps, 0.025), phi = quantile_sorted(reps, 0.975);
  CHECK(ci.lo > plo);
  CHECK(ci.hi > phi);
}

TEST_CASE("BCa reduces to percentile without bias or acceleration") {
  std::vector<double> reps;
  for (int i = 0; i < 1001; ++i) reps.push_back(-1.0 + 2.0 * i / 1000.0);
  const auto ci = bca_from_replicates(0.0, reps, 1001, {}, 0.95);
  CHECK(ci.z0 == doctest::Approx(0.0).epsilon(1e-3));
  CHECK(ci.lo == doctest::Approx(quantile_sorted(reps, 0.025)).epsilon(1e-3));
  CHECK(ci.hi == doctest::Approx(quantile_sorted(reps, 0.975)).epsilon(1e-3));
}

TEST_CASE("paired delta") {
  const auto x = iota_x(30);
  std::vector<double> y;
  for (int i = 0; i < 30; ++i) y.push_back(std::sin(0.3 * i));
  const BootstrapSpec spec{500, 1, 0.95, 1};
  const auto same = paired_delta_ci(x, y, y, mean_y, spec);
  CHECK(same.point == 0.0);
  CHECK(same.lo == 0.0);
  CHECK(same.hi == 0.0);
  REQUIRE(same.p_value);
  CHECK(*same.p_value == 1.0);

  std::vector<double> shifted = y;
  for (auto& v : shifted) v += 0.125;
  const auto d = paired_delta_ci(x, y, shifted, mean_y, spec);
  CHECK(d.point == doctest::Approx(0.125));
  CHECK(d.lo == doctest::Approx(0.125));
  CHECK(d.hi == doctest::Approx(0.125));
}

TEST_CASE("independent gap") {
  CiRecord mesolve, heom;
  mesolve.lo = mesolve.hi = 9944.0;
  heom.lo = 137.0;
  heom.hi = 755.0;
  CHECK(independent_gap(mesolve, heom, GapMode::ratio_lower_bound) == doctest::Approx(13.17).epsilon(1e-3));

  CiRecord one;
  one.lo = one.hi = 1.0;
  CHECK(independent_gap(one, one, GapMode::ratio_lower_bound) == 1.0);

  CiRecord am, ah;
  am.lo = 0.999;
  am.hi = 1.001;
  ah.lo = 0.879;
  ah.hi = 0.900;
  CHECK(independent_gap(am, ah, GapMode::difference_lower_bound) == doctest::Approx(0.099));

  CiRecord neg;
  neg.lo = -2.0;
  neg.hi = 0.0;
  CHECK_THROWS_AS(independent_gap(one, neg, GapMode::ratio_lower_bound), StatsError);
}

TEST_CASE("failing full-sample statistic") {
  const auto x = iota_x(5);
  const std::vector<double> y(5, 1.0);
  Statistic never = [](auto, auto, bool) -> std::optional<double> { return std::nullopt; };
  CHECK_THROWS_AS(bca_ci(x, y, never, {100, 1, 0.95, 1}), StatsError);
}
