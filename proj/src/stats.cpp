#include "heomcal/stats.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <mutex>
#include <thread>

#include "heomcal/error.hpp"

namespace heomcal::stats {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

// Stream ids keep the resample draws apart from any future consumer of the
// same seed.
constexpr std::uint64_t kResampleStream = 1;

const boost::math::normal kStdNormal;

double norm_cdf(double z) {
  if (z == std::numeric_limits<double>::infinity()) return 1.0;
  if (z == -std::numeric_limits<double>::infinity()) return 0.0;
  return boost::math::cdf(kStdNormal, z);
}

double norm_ppf(double p) { return boost::math::quantile(kStdNormal, p); }

// Evaluate `fn(i)` for i in [0, n) on up to `workers` threads. Results land
// in slot i, so the reduction order never depends on scheduling.
template <typename T, typename Fn>
std::vector<T> indexed_map(std::size_t n, int workers, Fn fn) {
  std::vector<T> out(n);
  const auto w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::jthread> pool;
  std::exception_ptr failure;
  std::mutex mu;
  for (std::size_t t = 0; t < std::min(w, n); ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<double> jackknife(std::span<const double> x, std::span<const double> y, const Statistic& stat,
                              int workers) {
  const std::size_t n = x.size();
  auto vals = indexed_map<std::optional<double>>(n, workers, [&](std::size_t i) {
    std::vector<double> xs, ys;
    xs.reserve(n - 1);
    ys.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      xs.push_back(x[j]);
      ys.push_back(y[j]);
    }
    return stat(xs, ys, false);
  });
  std::vector<double> out;
  for (const auto& v : vals) {
    if (v && std::isfinite(*v)) out.push_back(*v);
  }
  return out;
}

void check_spec(const BootstrapSpec& spec) {
  if (spec.resamples < 100) throw StatsError("bootstrap needs at least 100 resamples");
  if (!(spec.level > 0.0 && spec.level < 1.0)) throw StatsError("confidence level must lie in (0, 1)");
}

}  // namespace

Philox4x32::Block Philox4x32::block(Block ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

Philox4x32::Philox4x32(std::uint64_t seed, std::uint64_t stream)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {
  counter_[2] = static_cast<std::uint32_t>(stream);
  counter_[3] = static_cast<std::uint32_t>(stream >> 32);
}

std::uint32_t Philox4x32::next() {
  if (used_ == 4) {
    buffer_ = block(counter_, key_);
    if (++counter_[0] == 0) ++counter_[1];
    used_ = 0;
  }
  return buffer_[static_cast<std::size_t>(used_++)];
}

std::uint32_t Philox4x32::below(std::uint32_t n) {
  return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next()) * n) >> 32);
}

std::vector<std::size_t> resample_indices(std::uint64_t seed, std::uint64_t b, std::size_t n) {
  // Stream = (resample index, consumer tag) so resample b is reproducible alone.
  Philox4x32 gen(seed, (b << 8) | kResampleStream);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = gen.below(static_cast<std::uint32_t>(n));
  return idx;
}

double quantile_sorted(std::span<const double> s, double q) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  q = std::clamp(q, 0.0, 1.0);
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= s.size()) return s.back();
  const double frac = pos - static_cast<double>(i);
  return s[i] + frac * (s[i + 1] - s[i]);
}

CiRecord bca_from_replicates(double point, std::span<const double> replicates, int resamples,
                             std::span<const double> jack, double level) {
  CiRecord r;
  r.point = point;
  r.level = level;
  r.resamples = resamples;
  std::vector<double> s;
  for (double v : replicates) {
    if (std::isfinite(v)) s.push_back(v);
  }
  r.dropped = resamples - static_cast<int>(s.size());
  r.valid_rate = resamples > 0 ? static_cast<double>(s.size()) / resamples : 0.0;
  r.unreliable = r.valid_rate < 0.05;
  if (s.empty()) {
    r.lo = r.hi = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  std::sort(s.begin(), s.end());
  if (s.front() == s.back()) {
    // Degenerate replicate distribution: zero-width interval, not an error.
    r.lo = r.hi = s.front();
    if (s.front() == point) return r;
  }

  // Bias correction: share of replicates below the point, ties split evenly.
  const auto below = std::lower_bound(s.begin(), s.end(), point) - s.begin();
  const auto not_above = std::upper_bound(s.begin(), s.end(), point) - s.begin();
  const double bv = static_cast<double>(s.size());
  double frac = (static_cast<double>(below) + 0.5 * static_cast<double>(not_above - below)) / bv;
  frac = std::clamp(frac, 0.5 / bv, 1.0 - 0.5 / bv);
  r.z0 = norm_ppf(frac);

  if (jack.size() >= 2) {
    const double mean = std::accumulate(jack.begin(), jack.end(), 0.0) / static_cast<double>(jack.size());
    double num = 0.0, den = 0.0;
    for (double v : jack) {
      const double d = mean - v;
      num += d * d * d;
      den += d * d;
    }
    if (den > 0.0) r.acceleration = num / (6.0 * std::pow(den, 1.5));
  }

  const double alpha = 0.5 * (1.0 - level);
  auto adjusted = [&](double z) {
    const double t = r.z0 + z;
    const double denom = 1.0 - r.acceleration * t;
    if (!(denom > 0.0)) return z > 0.0 ? 1.0 : 0.0;
    return norm_cdf(r.z0 + t / denom);
  };
  r.lo = quantile_sorted(s, adjusted(norm_ppf(alpha)));
  r.hi = quantile_sorted(s, adjusted(norm_ppf(1.0 - alpha)));
  return r;
}

CiRecord bca_ci(std::span<const double> x, std::span<const double> y, const Statistic& statistic,
                const BootstrapSpec& spec) {
  check_spec(spec);
  if (x.size() != y.size() || x.size() < 2) throw StatsError("bootstrap needs matched samples of size >= 2");
  const auto point = statistic(x, y, false);
  if (!point || !std::isfinite(*point)) throw StatsError("statistic undefined on the full sample");
  const std::size_t n = x.size();
  auto reps = indexed_map<double>(static_cast<std::size_t>(spec.resamples), spec.workers, [&](std::size_t b) {
    const auto idx = resample_indices(spec.seed, b, n);
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = x[idx[i]];
      ys[i] = y[idx[i]];
    }
    const auto v = statistic(xs, ys, true);
    return v && std::isfinite(*v) ? *v : std::numeric_limits<double>::quiet_NaN();
  });
  const auto jack = jackknife(x, y, statistic, spec.workers);
  CiRecord r = bca_from_replicates(*point, reps, spec.resamples, jack, spec.level);
  r.seed = spec.seed;
  return r;
}

CiRecord paired_delta_ci(std::span<const double> x, std::span<const double> ya, std::span<const double> yb,
                         const Statistic& statistic, const BootstrapSpec& spec) {
  check_spec(spec);
  if (x.size() != ya.size() || x.size() != yb.size() || x.size() < 2) {
    throw StatsError("paired bootstrap needs a shared grid of size >= 2");
  }
  const std::size_t n = x.size();
  // Pack (a, b) per case so one resample of indices moves both together.
  std::vector<double> packed(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    packed[2 * i] = ya[i];
    packed[2 * i + 1] = yb[i];
  }
  auto delta = [&](std::span<const double> xs, std::span<const double> cases, bool resample) -> std::optional<double> {
    std::vector<double> a(xs.size()), b(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      a[i] = cases[2 * i];
      b[i] = cases[2 * i + 1];
    }
    const auto sa = statistic(xs, a, resample);
    const auto sb = statistic(xs, b, resample);
    if (!sa || !sb) return std::nullopt;
    return *sb - *sa;
  };
  const auto point = delta(x, packed, false);
  if (!point || !std::isfinite(*point)) throw StatsError("paired statistic undefined on the full sample");

  auto reps = indexed_map<double>(static_cast<std::size_t>(spec.resamples), spec.workers, [&](std::size_t b) {
    const auto idx = resample_indices(spec.seed, b, n);
    std::vector<double> xs(n), cs(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = x[idx[i]];
      cs[2 * i] = packed[2 * idx[i]];
      cs[2 * i + 1] = packed[2 * idx[i] + 1];
    }
    const auto v = delta(xs, cs, true);
    return v && std::isfinite(*v) ? *v : std::numeric_limits<double>::quiet_NaN();
  });
  auto jvals = indexed_map<double>(n, spec.workers, [&](std::size_t i) {
    std::vector<double> xs, cs;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      xs.push_back(x[j]);
      cs.push_back(packed[2 * j]);
      cs.push_back(packed[2 * j + 1]);
    }
    const auto v = delta(xs, cs, false);
    return v && std::isfinite(*v) ? *v : std::numeric_limits<double>::quiet_NaN();
  });
  std::vector<double> jack;
  for (double v : jvals) {
    if (std::isfinite(v)) jack.push_back(v);
  }
  CiRecord r = bca_from_replicates(*point, reps, spec.resamples, jack, spec.level);
  r.seed = spec.seed;

  // Two-sided p: replicates on the far side of zero from the point estimate.
  const int valid = spec.resamples - r.dropped;
  if (*point == 0.0 || valid == 0) {
    r.p_value = 1.0;
  } else {
    int crossing = 0;
    for (double v : reps) {
      if (!std::isfinite(v)) continue;
      if ((*point > 0.0 && v <= 0.0) || (*point < 0.0 && v >= 0.0)) ++crossing;
    }
    r.p_value = std::min(1.0, 2.0 * (1.0 + crossing) / (valid + 1.0));
  }
  return r;
}

std::string_view to_string(GapMode m) {
  return m == GapMode::ratio_lower_bound ? "ratio_lower_bound" : "difference_lower_bound";
}

double independent_gap(const CiRecord& a, const CiRecord& b, GapMode mode) {
  if (!std::isfinite(a.lo) || !std::isfinite(b.hi)) throw StatsError("independent_gap needs finite intervals");
  if (mode == GapMode::ratio_lower_bound) {
    if (!(b.hi > 0.0)) throw StatsError("ratio gap needs a positive upper edge on the second interval");
    return a.lo / b.hi;
  }
  return a.lo - b.hi;
}

}  // namespace heomcal::stats
