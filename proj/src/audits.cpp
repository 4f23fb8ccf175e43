#include "heomcal/audits.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include "heomcal/error.hpp"

namespace heomcal::audits {

namespace {

using dynamics::Backend;

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first failure
// (lowest index) is rethrown after all threads join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += w) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw AuditError("trace residual needs traces on the same grid");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

LSweepRecord run_l_sweep(const RunConfig& cfg, const pipeline::BathModel& bath, std::vector<int> depths,
                         double pi_amp, int workers) {
  if (depths.size() < 2) throw AuditError("L-sweep needs at least two depths");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (depths[i] < 0) throw AuditError("L-sweep depth must be non-negative");
    if (i > 0 && depths[i] <= depths[i - 1]) throw AuditError("L-sweep depths must be strictly increasing");
  }
  const fits::GuardThresholds guard{cfg.verdicts.guard_amp_ratio, cfg.verdicts.guard_tc_ratio};

  LSweepRecord rec;
  rec.depths = depths;
  rec.pi_amp = pi_amp;
  rec.bath_residual = bath.modes.rel_rms_residual;
  rec.ramsey_grid = protocols::make_ramsey_plan(cfg.protocols, false).delays;
  rec.ramsey_dense_grid = protocols::make_ramsey_plan(cfg.protocols, true).delays;
  rec.t1_grid = protocols::make_t1_plan(cfg.protocols, false).delays;
  rec.runs.resize(depths.size());

  std::vector<pipeline::RamseyOutcome> ramsey(depths.size());
  parallel_for(depths.size(), workers, [&](std::size_t i) {
    const int depth = depths[i];
    try {
      const auto t0 = std::chrono::steady_clock::now();
      RunConfig c = cfg;
      c.heom.depth = depth;
      const auto engine = protocols::make_engine(Backend::heom, c, bath.modes);
      ramsey[i] = pipeline::ramsey_outcome(engine, c, pi_amp);
      const auto t1 = pipeline::t1_outcome(engine, c, pi_amp);
      auto& run = rec.runs[i];
      run.depth = depth;
      run.ado_count = dynamics::ado_count(static_cast<int>(bath.modes.modes.size()), depth);
      run.ramsey = ramsey[i].standard.measured;
      run.ramsey_dense = ramsey[i].dense.measured;
      run.t1 = t1.standard.measured;
      run.t1_fit = t1.a_free;
      run.fit_dense = ramsey[i].biexp_dense;
      run.wall_time = seconds_since(t0);
    } catch (const std::exception& e) {
      throw AuditError("L-sweep depth " + std::to_string(depth) + ": " + e.what());
    }
  });

  // Fits in depth order; each depth also tries the previous depth's optimum.
  for (std::size_t i = 0; i < depths.size(); ++i) {
    auto& run = rec.runs[i];
    try {
      const fits::FitResult* warm = i > 0 ? &rec.runs[i - 1].fit : nullptr;
      run.fit = fits::fit_biexp_revival(rec.ramsey_grid, run.ramsey, guard, warm);
    } catch (const std::exception& e) {
      throw AuditError("L-sweep depth " + std::to_string(run.depth) + ": " + e.what());
    }
    run.tau_aw = run.fit.value("tau_aw");
    run.fallback_used = !run.fit.guard->passed;
    rec.tau_aw_by_l.push_back(run.tau_aw);
    rec.guard_by_l.push_back(*run.fit.guard);
    rec.fallback_used.push_back(run.fallback_used);
    rec.tau_aw_dense_by_l.push_back(run.fit_dense ? run.fit_dense->value("tau_aw")
                                                  : std::numeric_limits<double>::quiet_NaN());
    if (i > 0) {
      rec.trace_residuals.push_back(max_abs_diff(run.ramsey, rec.runs[i - 1].ramsey));
      rec.t1_residuals.push_back(max_abs_diff(run.t1, rec.runs[i - 1].t1));
    }
  }

  std::vector<double> deep;
  for (const auto& run : rec.runs) {
    if (run.depth >= 4) deep.push_back(run.tau_aw);
  }
  if (deep.size() >= 2) {
    const auto [lo, hi] = std::minmax_element(deep.begin(), deep.end());
    rec.tau_aw_max_rel_dev = (*hi - *lo) / *lo;
    rec.case_b_tau_aw_robust = rec.tau_aw_max_rel_dev <= 0.05;
  } else {
    rec.tau_aw_max_rel_dev = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

ASweepRecord run_a_sweep(const RunConfig& cfg, const pipeline::BathModel& bath, std::vector<double> scales,
                         double pi_amp, const fits::FitResult& mesolve, int workers) {
  if (scales.empty()) throw AuditError("A-sweep needs at least one scale");
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw AuditError("A-sweep scales must be positive");
  }
  std::sort(scales.begin(), scales.end());
  if (bath.modes.modes.empty()) throw AuditError("A-sweep needs a non-empty bath decomposition");

  ASweepRecord rec;
  rec.scales = scales;
  rec.grid = cfg.verdicts.ramsey_fit_grid;
  rec.delays = protocols::make_ramsey_plan(cfg.protocols, rec.grid == "dense").delays;
  rec.pi_amp = pi_amp;
  rec.mesolve_t2_star = mesolve.value("t2_star");
  rec.mesolve_ceiling_hit = mesolve.ceiling_hit;
  rec.points.resize(scales.size());

  parallel_for(scales.size(), workers, [&](std::size_t i) {
    const double s = scales[i];
    try {
      RunConfig c = cfg;
      c.platform.bath.amplitude_a0 *= s;
      const auto engine = protocols::make_engine(Backend::heom, c, bath.modes.scaled(s));
      const auto r = pipeline::ramsey_outcome(engine, c, pi_amp);
      auto& p = rec.points[i];
      p.scale = s;
      p.ramsey = rec.grid == "dense" ? r.dense.measured : r.standard.measured;
      p.fit = r.primary(rec.grid);
      const auto st = rec.grid == "dense" && r.stretched_dense
                          ? *r.stretched_dense
                          : fits::fit_stretched(r.standard.sweep_values, r.standard.measured);
      p.stretched_tau = st.value("tau");
      p.stretched_beta = st.value("beta");
      p.stretched_unresolved = st.flags.count("unresolved_T") && st.flags.at("unresolved_T");
    } catch (const std::exception& e) {
      throw AuditError("A-sweep scale " + std::to_string(s) + ": " + e.what());
    }
  });

  rec.tau_aw_strictly_decreasing = true;
  rec.stretched_tau_strictly_decreasing = true;
  rec.gap_sign_constant = true;
  for (std::size_t i = 0; i < rec.points.size(); ++i) {
    auto& p = rec.points[i];
    p.tau_aw = p.fit.value("tau_aw");
    p.t2_star = p.fit.value("t2_star");
    p.gap = rec.mesolve_t2_star - p.tau_aw;
    p.gap_sign = (p.gap > 0.0) - (p.gap < 0.0);
    if (i > 0) {
      rec.tau_aw_strictly_decreasing = rec.tau_aw_strictly_decreasing && p.tau_aw < rec.points[i - 1].tau_aw;
      rec.stretched_tau_strictly_decreasing =
          rec.stretched_tau_strictly_decreasing && p.stretched_tau < rec.points[i - 1].stretched_tau;
      rec.gap_sign_constant = rec.gap_sign_constant && p.gap_sign == rec.points[0].gap_sign;
    }
  }
  if (rec.points.front().gap_sign == 0) rec.gap_sign_constant = false;

  // Linearity cross-check: scaled base modes against a fresh decomposition.
  try {
    BathSpec spec = cfg.platform.bath;
    spec.amplitude_a0 *= rec.refit.scale;
    const auto corr = bath::correlation_function(spec, bath.corr.times);
    const auto scaled = bath.modes.scaled(rec.refit.scale);
    const auto refit = bath::exp_decompose(corr, static_cast<int>(bath.modes.modes.size()));
    rec.refit.residual_scaled = bath::decomposition_residual(scaled, corr);
    rec.refit.residual_refit = refit.rel_rms_residual;
    const double c0 = std::abs(corr.values.front());
    for (double t : corr.times) {
      rec.refit.max_rel_diff = std::max(rec.refit.max_rel_diff, std::abs(scaled.evaluate(t) - refit.evaluate(t)) / c0);
    }
  } catch (const std::exception& e) {
    throw AuditError(std::string("A-sweep refit check: ") + e.what());
  }
  return rec;
}

SanityRecord run_l5_sanity(const std::vector<double>& x, const std::vector<double>& y,
                           std::optional<fits::FitResult> base, const fits::GuardThresholds& guard, int depth) {
  SanityRecord rec;
  rec.depth = depth;
  rec.base = base ? *base : fits::fit_biexp_revival(x, y, guard);
  if (rec.base.family != fits::Family::biexp_revival || !rec.base.converged) {
    throw FitError("L5 sanity: base biexp fit did not converge");
  }
  rec.triexp = fits::fit_triexp_sanity(x, y, rec.base);
  rec.stretched = fits::fit_stretched(x, y);
  rec.a3_ratio = rec.triexp.value("a3_ratio");
  rec.delta_r_squared = rec.triexp.value("delta_r_squared");
  rec.third_mode_ghost = rec.triexp.flags.at("third_mode_ghost");
  rec.triexp_fallback = rec.triexp.flags.at("fallback");
  rec.tau_aw_biexp = rec.base.value("tau_aw");
  rec.tau_aw_triexp = rec.triexp.value("tau_aw");
  rec.tau_aw_rel_diff = std::abs(rec.tau_aw_triexp - rec.tau_aw_biexp) / rec.tau_aw_biexp;
  return rec;
}

PartialTraceCheck run_partial_trace_check(const RunConfig& cfg, const pipeline::BathModel& bath) {
  PartialTraceCheck out;
  protocols::T1Plan plan;
  plan.probe_delays = cfg.protocols.probe_delays;
  std::vector<double> rho[2];
  const Backend backends[2] = {Backend::heom, Backend::lindblad};
  for (int k = 0; k < 2; ++k) {
    try {
      const auto engine = protocols::make_engine(backends[k], cfg, bath.modes);
      const double pi_amp = pipeline::rabi_outcome(engine, cfg).fit.value("pi_amp");
      (k == 0 ? out.pi_amp_heom : out.pi_amp_mesolve) = pi_amp;
      const auto r = protocols::run_t1(engine, plan, pi_amp);
      for (const auto& p : r.probes) rho[k].push_back(p.rho(1, 1).real());
    } catch (const std::exception& e) {
      throw AuditError(std::string("partial-trace probe on ") + std::string(dynamics::to_string(backends[k])) +
                       ": " + e.what());
    }
  }
  out.record = verdicts::make_partial_trace(cfg.protocols.probe_delays, rho[0], rho[1], cfg.verdicts);
  return out;
}

}  // namespace heomcal::audits
