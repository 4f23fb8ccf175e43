#pragma once

#include <optional>
#include <string>
#include <vector>

#include "heomcal/fits.hpp"
#include "heomcal/pipeline.hpp"
#include "heomcal/platform.hpp"
#include "heomcal/verdicts.hpp"

namespace heomcal::audits {

/// One hierarchy depth of the L-sweep.
struct DepthRun {
  int depth = 0;
  std::size_t ado_count = 0;
  std::vector<double> ramsey;        // audit (30-point) grid
  std::vector<double> ramsey_dense;  // 50-point grid, evidence only
  std::vector<double> t1;            // 8-point grid
  fits::FitResult fit;               // biexp on the audit grid, pinned from the previous depth
  std::optional<fits::FitResult> fit_dense;
  fits::FitResult t1_fit;            // constrained_a_free
  double tau_aw = 0.0;
  bool fallback_used = false;  // guard failed; tau_aw taken from the unguarded best fit
  double wall_time = 0.0;      // s
};

struct LSweepRecord {
  std::vector<int> depths;
  std::vector<double> ramsey_grid;
  std::vector<double> ramsey_dense_grid;
  std::vector<double> t1_grid;
  double pi_amp = 0.0;
  std::vector<DepthRun> runs;

  std::vector<double> trace_residuals;     // Ramsey, max_t |P_L - P_{L-1}|
  std::vector<double> t1_residuals;        // T1 occupation, same norm
  std::vector<double> tau_aw_by_l;
  std::vector<fits::GuardOutcome> guard_by_l;
  std::vector<bool> fallback_used;
  std::vector<double> tau_aw_dense_by_l;
  double bath_residual = 0.0;
  double tau_aw_max_rel_dev = 0.0;  // max pairwise |dtau| / min(tau) over L >= 4
  bool case_b_tau_aw_robust = false;
};

/// HEOM Ramsey and T1 at each depth (concurrently, up to `workers`), then
/// fits in depth order. Each depth's biexp is warm-started from the previous
/// depth's fit in addition to the fixed seed schedule, so reruns are
/// reproducible. Needs at least two strictly increasing depths.
LSweepRecord run_l_sweep(const RunConfig& cfg, const pipeline::BathModel& bath, std::vector<int> depths,
                         double pi_amp, int workers);

struct ScalePoint {
  double scale = 1.0;
  std::vector<double> ramsey;  // verdict grid
  fits::FitResult fit;
  double tau_aw = 0.0;
  double t2_star = 0.0;
  double gap = 0.0;  // T2*(mesolve) - tau_aw(HEOM)
  int gap_sign = 0;
  // Stretched-exponential refit of the same trace, evidence only.
  double stretched_tau = 0.0;
  double stretched_beta = 0.0;
  bool stretched_unresolved = false;  // T below the first sample
};

struct RefitCheck {
  double scale = 2.0;
  double residual_scaled = 0.0;  // scaled base modes vs the scale-2 correlation
  double residual_refit = 0.0;   // fresh decomposition of the scale-2 correlation
  double max_rel_diff = 0.0;     // scaled vs refit reconstruction over the grid
};

struct ASweepRecord {
  std::vector<double> scales;
  std::string grid;  // "dense" or "standard"
  std::vector<double> delays;
  double pi_amp = 0.0;
  double mesolve_t2_star = 0.0;
  bool mesolve_ceiling_hit = false;
  std::vector<ScalePoint> points;
  RefitCheck refit;
  bool tau_aw_strictly_decreasing = false;
  bool gap_sign_constant = false;
  bool stretched_tau_strictly_decreasing = false;
};

/// HEOM Ramsey per coupling scale with the base modes scaled linearly (C is
/// linear in A0), on the verdict grid. `mesolve` is the Lindblad Ramsey fit
/// the gap is measured against. A decomposition refit runs at scale 2.
ASweepRecord run_a_sweep(const RunConfig& cfg, const pipeline::BathModel& bath, std::vector<double> scales,
                         double pi_amp, const fits::FitResult& mesolve, int workers);

struct SanityRecord {
  int depth = 5;
  fits::FitResult base;
  fits::FitResult triexp;
  fits::FitResult stretched;
  double a3_ratio = 0.0;
  double delta_r_squared = 0.0;
  double tau_aw_biexp = 0.0;
  double tau_aw_triexp = 0.0;  // ghost-gated
  double tau_aw_rel_diff = 0.0;
  bool third_mode_ghost = false;
  bool triexp_fallback = false;  // no triexp optimum beat the base; base kept with a3 = 0
};

/// Triexp and stretched refits of one Ramsey trace against its biexp fit.
/// `base` is refit when absent; throws FitError if it does not converge.
SanityRecord run_l5_sanity(const std::vector<double>& x, const std::vector<double>& y,
                           std::optional<fits::FitResult> base, const fits::GuardThresholds& guard, int depth = 5);

struct PartialTraceCheck {
  verdicts::PartialTraceRecord record;
  double pi_amp_heom = 0.0;
  double pi_amp_mesolve = 0.0;
};

/// rho11 after the pi pulse at the probe delays on HEOM and Lindblad, each
/// driven with its own calibrated pi amplitude.
PartialTraceCheck run_partial_trace_check(const RunConfig& cfg, const pipeline::BathModel& bath);

/// Max-norm distance between two traces on the same grid.
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace heomcal::audits
