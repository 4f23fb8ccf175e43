#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace heomcal::stats {

/// Philox4x32-10 counter-based generator. A (key, counter) pair maps to one
/// 128-bit block, so every resample owns an independent stream addressed by
/// its index and results do not depend on evaluation order.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block block(Block counter, Key key);

  Philox4x32(std::uint64_t seed, std::uint64_t stream);
  std::uint32_t next();
  /// Uniform integer in [0, n) by 32x32 -> 64 multiply-shift.
  std::uint32_t below(std::uint32_t n);

 private:
  Key key_;
  Block counter_{};
  Block buffer_{};
  int used_ = 4;
};

struct BootstrapSpec {
  int resamples = 10000;
  std::uint64_t seed = 0;
  double level = 0.95;
  int workers = 1;
};

struct CiRecord {
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  double valid_rate = 0.0;
  std::optional<double> p_value;
  std::uint64_t seed = 0;
  int resamples = 0;
  int dropped = 0;
  bool unreliable = false;  // valid_rate < 0.05
  double z0 = 0.0;
  double acceleration = 0.0;
};

/// Statistic over a case sample. `resample` is false for the point estimate
/// and the jackknife, true for bootstrap draws, where resample-only filters
/// (the revival guard) apply. nullopt marks a dropped draw.
using Statistic =
    std::function<std::optional<double>(std::span<const double> x, std::span<const double> y, bool resample)>;

/// Indices of resample `b` of n cases.
std::vector<std::size_t> resample_indices(std::uint64_t seed, std::uint64_t b, std::size_t n);

/// BCa case-bootstrap interval. Throws StatsError when the statistic fails on
/// the full sample.
CiRecord bca_ci(std::span<const double> x, std::span<const double> y, const Statistic& statistic,
                const BootstrapSpec& spec);

/// CI on statistic(b) - statistic(a) with shared case indices and the
/// two-sided sign-crossing p-value.
CiRecord paired_delta_ci(std::span<const double> x, std::span<const double> ya, std::span<const double> yb,
                         const Statistic& statistic, const BootstrapSpec& spec);

enum class GapMode { ratio_lower_bound, difference_lower_bound };

std::string_view to_string(GapMode m);

/// Adversarial-corner bound between two independent intervals:
/// a.lo / b.hi or a.lo - b.hi.
double independent_gap(const CiRecord& a, const CiRecord& b, GapMode mode);

/// Interval from an explicit replicate set; exposed for tests. `jackknife`
/// may be empty (acceleration 0).
CiRecord bca_from_replicates(double point, std::span<const double> replicates, int resamples,
                             std::span<const double> jackknife, double level);

/// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

}  // namespace heomcal::stats
