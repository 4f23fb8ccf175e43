#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace heomcal::fits {

enum class Family {
  exp_ceiling,
  damped_cosine,
  biexp_revival,
  stretched,
  triexp,
  t1_constrained,
  t1_free_beta,
  rabi_cosine,
};

std::string_view to_string(Family f);

enum class T1Mode { constrained_a_free, constrained_a_pinned, free_beta_a_pinned };

std::string_view to_string(T1Mode m);
T1Mode t1_mode_from_string(std::string_view s);

struct GuardThresholds {
  double amp_ratio = 0.1;
  double tc_ratio = 2.0;
};

struct GuardOutcome {
  double amp_ratio = 0.0;  // |a2 / a1|
  double tc_ratio = 0.0;   // t2 / t1
  bool passed = false;
};

GuardOutcome evaluate_guard(double a1, double t1, double a2, double t2, const GuardThresholds& th = {});

struct FitResult {
  Family family = Family::exp_ceiling;
  std::map<std::string, double> params;
  double r_squared = 0.0;
  bool ceiling_hit = false;
  std::optional<GuardOutcome> guard;
  std::map<std::string, double> derived;
  std::map<std::string, bool> flags;
  bool converged = false;
  int starts_tried = 0;
  int best_start = -1;
  double cost = 0.0;  // 0.5 * sum of squared residuals

  double param(const std::string& name) const;
  double value(const std::string& name) const;  // derived scalar
};

/// 1 - SS_res / SS_tot. Constant data: 1 for an exact fit, 0 otherwise.
double r_squared(std::span<const double> y, std::span<const double> model);

/// y = c + a exp(-t/T), 0 < T <= ceiling_factor * span(x).
FitResult fit_exp_ceiling(std::span<const double> x, std::span<const double> y, double ceiling_factor = 5.0);

/// y = c + [a1 e^{-t/t1} + a2 e^{-t/t2}] cos(2 pi f t + phi).
/// `warm` (optional) is tried before the fixed seed schedule; `max_starts`
/// (when positive) truncates the schedule, warm start included.
FitResult fit_biexp_revival(std::span<const double> x, std::span<const double> y, const GuardThresholds& th = {},
                            const FitResult* warm = nullptr, int max_starts = 0);

/// Amplitude-weighted timescale sum |a_i| |t_i| / sum |a_i|.
double tau_aw(std::span<const double> amplitudes, std::span<const double> timescales);

/// y = c + a exp(-(t/T)^beta), beta in (0, 3].
FitResult fit_stretched(std::span<const double> x, std::span<const double> y);

/// Biexp plus a third envelope mode seeded from `base`.
FitResult fit_triexp_sanity(std::span<const double> x, std::span<const double> y, const FitResult& base,
                            double ghost_threshold = 1e-2);

/// y = A exp(-(t/T1)^beta) + B with B = 0 and the mode's pins.
FitResult fit_t1(std::span<const double> x, std::span<const double> y, T1Mode mode);

/// y = c + v cos(2 pi f a + phi); pi_amp is the first maximum of the fitted
/// curve inside the sampled amplitude range.
FitResult fit_rabi_cosine(std::span<const double> amplitudes, std::span<const double> y);

/// Model evaluation for a fitted result at abscissa x.
double evaluate(const FitResult& fit, double x);

}  // namespace heomcal::fits
