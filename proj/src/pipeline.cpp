#include "heomcal/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "heomcal/error.hpp"

namespace heomcal::pipeline {

namespace {

using dynamics::Backend;

std::vector<double> sorted_union(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

fits::GuardThresholds guard_of(const RunConfig& cfg) {
  return {cfg.verdicts.guard_amp_ratio, cfg.verdicts.guard_tc_ratio};
}

// Offsets keep the bootstrap streams of different intervals apart.
enum CiStream : std::uint64_t {
  kRamseyMesolve = 1,
  kRamseyHeom = 2,
  kRabiPiAmp = 3,
  kRabiPMax = 4,
  kT1Mesolve = 5,
  kT1Heom = 6,
};

// Resample refits of the 7-parameter model: warm start from the point fit
// plus the first seeds of the fixed schedule.
constexpr int kBiexpResampleStarts = 3;

}  // namespace

BathModel build_bath(const RunConfig& cfg) {
  BathModel m;
  const auto grid = bath::default_correlation_grid();
  if (cfg.platform.bath.amplitude_a0 == 0.0) {
    m.corr.times = grid;
    m.corr.values.assign(grid.size(), bath::cplx(0.0, 0.0));
    m.modes.method_tag = "zero_coupling";
    return m;
  }
  m.corr = bath::correlation_function(cfg.platform.bath, grid);
  m.modes = bath::exp_decompose(m.corr, cfg.heom.modes);
  return m;
}

protocols::ProtocolResult restrict_to(const protocols::ProtocolResult& r, const std::vector<double>& grid) {
  protocols::ProtocolResult out = r;
  out.sweep_values.clear();
  out.measured.clear();
  out.raw_measured.clear();
  for (double g : grid) {
    const auto it = std::find(r.sweep_values.begin(), r.sweep_values.end(), g);
    if (it == r.sweep_values.end()) throw Error("protocols", "grid point missing from combined run");
    const auto i = static_cast<std::size_t>(it - r.sweep_values.begin());
    out.sweep_values.push_back(g);
    out.measured.push_back(r.measured[i]);
    if (!r.raw_measured.empty()) out.raw_measured.push_back(r.raw_measured[i]);
  }
  return out;
}

const fits::FitResult& RamseyOutcome::primary(const std::string& grid) const {
  const auto& biexp = grid == "dense" ? biexp_dense : biexp_standard;
  return biexp ? *biexp : exp_fit;
}

std::vector<std::string> default_node_ids(Backend b) {
  if (b == Backend::unitary) return {"rabi", "ramsey"};
  return {"rabi", "ramsey", "t1"};
}

const BackendRun* RunRecord::find(Backend b) const {
  for (const auto& r : runs) {
    if (r.backend == b) return &r;
  }
  return nullptr;
}

RamseyOutcome ramsey_outcome(const protocols::Engine& engine, const RunConfig& cfg, double pi_amp) {
  RamseyOutcome r;
  r.pi_amp = pi_amp;
  const auto standard = protocols::make_ramsey_plan(cfg.protocols, false);
  const auto dense = protocols::make_ramsey_plan(cfg.protocols, true);
  protocols::RamseyPlan both = standard;
  both.delays = sorted_union(standard.delays, dense.delays);
  const auto full = protocols::run_ramsey(engine, both, pi_amp);
  r.standard = restrict_to(full, standard.delays);
  r.dense = restrict_to(full, dense.delays);
  r.exp_fit = fits::fit_exp_ceiling(r.standard.sweep_values, r.standard.measured);
  if (engine.backend == Backend::heom) {
    const auto guard = guard_of(cfg);
    r.biexp_standard = fits::fit_biexp_revival(r.standard.sweep_values, r.standard.measured, guard);
    r.biexp_dense = fits::fit_biexp_revival(r.dense.sweep_values, r.dense.measured, guard);
    r.stretched_dense = fits::fit_stretched(r.dense.sweep_values, r.dense.measured);
  }
  return r;
}

T1Outcome t1_outcome(const protocols::Engine& engine, const RunConfig& cfg, double pi_amp) {
  T1Outcome r;
  r.pi_amp = pi_amp;
  const auto standard = protocols::make_t1_plan(cfg.protocols, false);
  const auto dense = protocols::make_t1_plan(cfg.protocols, true);
  protocols::T1Plan both = standard;
  both.delays = sorted_union(standard.delays, dense.delays);
  const auto full = protocols::run_t1(engine, both, pi_amp);
  r.standard = restrict_to(full, standard.delays);
  r.dense = restrict_to(full, dense.delays);
  using fits::T1Mode;
  r.a_free = fits::fit_t1(r.standard.sweep_values, r.standard.measured, T1Mode::constrained_a_free);
  r.a_free_dense = fits::fit_t1(r.dense.sweep_values, r.dense.measured, T1Mode::constrained_a_free);
  r.a_pinned = fits::fit_t1(r.standard.sweep_values, r.standard.measured, T1Mode::constrained_a_pinned);
  r.free_beta = fits::fit_t1(r.standard.sweep_values, r.standard.measured, T1Mode::free_beta_a_pinned);
  return r;
}

RabiOutcome rabi_outcome(const protocols::Engine& engine, const RunConfig& cfg) {
  RabiOutcome r;
  r.trace = protocols::run_rabi(engine, protocols::make_rabi_plan(cfg.protocols));
  r.fit = fits::fit_rabi_cosine(r.trace.sweep_values, r.trace.measured);
  return r;
}

BackendRun run_backend(const RunConfig& cfg, const BathModel& bath, Backend backend, const RunOptions& opt) {
  BackendRun out;
  out.backend = backend;
  const auto engine = protocols::make_engine(backend, cfg, bath.modes);
  const std::string tag(dynamics::to_string(backend));

  dag::GateRule gate{cfg.dag.min_r_squared, {"pi_amp"}};
  std::vector<dag::DagNode> nodes;

  nodes.push_back({"rabi", "rabi", tag, {}, gate, [&](const dag::Inputs&) {
                     auto r = rabi_outcome(engine, cfg);
                     dag::NodeOutput o;
                     o.scalars["pi_amp"] = r.fit.value("pi_amp");
                     o.scalars["p_max"] = r.fit.value("p_max");
                     o.r_squared = opt.force_rabi_r_squared.value_or(r.fit.r_squared);
                     out.rabi = std::move(r);
                     return o;
                   }});

  nodes.push_back({"ramsey", "ramsey", tag, {"rabi"}, gate, [&](const dag::Inputs& in) {
                     auto r = ramsey_outcome(engine, cfg, in.at("rabi")->scalars.at("pi_amp"));
                     dag::NodeOutput o;
                     const auto& p = r.primary(cfg.verdicts.ramsey_fit_grid);
                     o.scalars["t2_star"] = p.value("t2_star");
                     o.r_squared = p.r_squared;
                     out.ramsey = std::move(r);
                     return o;
                   }});

  if (backend != Backend::unitary) {
    nodes.push_back({"t1", "t1", tag, {"rabi"}, gate, [&](const dag::Inputs& in) {
                       auto r = t1_outcome(engine, cfg, in.at("rabi")->scalars.at("pi_amp"));
                       dag::NodeOutput o;
                       o.scalars["t1"] = r.a_free.value("t1");
                       o.scalars["a"] = r.a_free.value("a");
                       o.r_squared = r.a_free.r_squared;
                       out.t1 = std::move(r);
                       return o;
                     }});
  }

  out.dag = dag::execute_dag(nodes, opt.workers);
  return out;
}

CiSet compute_cis(const RunConfig& cfg, const RunRecord& rec, int workers) {
  CiSet set;
  const auto* h = rec.find(Backend::heom);
  const auto* m = rec.find(Backend::lindblad);
  if (!h || !m) return set;
  const fits::GuardThresholds guard = guard_of(cfg);
  auto spec = [&](std::uint64_t stream) {
    stats::BootstrapSpec s;
    s.resamples = cfg.bootstrap.resamples;
    s.seed = cfg.bootstrap.seed + stream;
    s.workers = workers;
    return s;
  };
  auto guarded = [](auto fn) {
    return [fn](std::span<const double> x, std::span<const double> y, bool resample) -> std::optional<double> {
      try {
        return fn(x, y, resample);
      } catch (const FitError&) {
        return std::nullopt;
      }
    };
  };

  if (h->ramsey && m->ramsey) {
    const auto& ms = m->ramsey->standard;
    set.records["ramsey_t2_star_mesolve"] = stats::bca_ci(
        ms.sweep_values, ms.measured,
        guarded([](auto x, auto y, bool) -> std::optional<double> {
          return fits::fit_exp_ceiling(x, y).value("t2_star");
        }),
        spec(kRamseyMesolve));

    const bool dense = cfg.verdicts.ramsey_fit_grid == "dense";
    const auto& hs = dense ? h->ramsey->dense : h->ramsey->standard;
    const auto& base = h->ramsey->primary(cfg.verdicts.ramsey_fit_grid);
    if (base.family == fits::Family::biexp_revival) {
      set.records["ramsey_t2_star_heom"] = stats::bca_ci(
          hs.sweep_values, hs.measured,
          guarded([&base, guard](auto x, auto y, bool resample) -> std::optional<double> {
            const auto f = fits::fit_biexp_revival(x, y, guard, &base, resample ? kBiexpResampleStarts : 0);
            if (resample && !f.guard->passed) return std::nullopt;
            return f.value("t2_star");
          }),
          spec(kRamseyHeom));
      const auto& a = set.records["ramsey_t2_star_mesolve"];
      const auto& b = set.records["ramsey_t2_star_heom"];
      if (std::isfinite(a.lo) && std::isfinite(b.hi) && b.hi > 0.0) {
        set.gaps["ramsey_t2_star_ratio_lower_bound"] =
            stats::independent_gap(a, b, stats::GapMode::ratio_lower_bound);
      }
    }
  }

  if (h->rabi && m->rabi && h->rabi->trace.sweep_values == m->rabi->trace.sweep_values) {
    const auto& x = m->rabi->trace.sweep_values;
    auto rabi_stat = [&](const char* name) {
      return guarded([name](auto xs, auto ys, bool) -> std::optional<double> {
        return fits::fit_rabi_cosine(xs, ys).value(name);
      });
    };
    set.records["rabi_delta_pi_amp"] = stats::paired_delta_ci(x, m->rabi->trace.measured, h->rabi->trace.measured,
                                                              rabi_stat("pi_amp"), spec(kRabiPiAmp));
    set.records["rabi_delta_p_max"] = stats::paired_delta_ci(x, m->rabi->trace.measured, h->rabi->trace.measured,
                                                             rabi_stat("p_max"), spec(kRabiPMax));
  }

  if (h->t1 && m->t1) {
    auto a_stat = guarded([](auto x, auto y, bool) -> std::optional<double> {
      return fits::fit_t1(x, y, fits::T1Mode::constrained_a_free).value("a");
    });
    set.records["t1_a_mesolve"] =
        stats::bca_ci(m->t1->standard.sweep_values, m->t1->standard.measured, a_stat, spec(kT1Mesolve));
    set.records["t1_a_heom"] =
        stats::bca_ci(h->t1->standard.sweep_values, h->t1->standard.measured, a_stat, spec(kT1Heom));
    const auto& a = set.records["t1_a_mesolve"];
    const auto& b = set.records["t1_a_heom"];
    if (std::isfinite(a.lo) && std::isfinite(b.hi)) {
      set.gaps["t1_a_difference_lower_bound"] = stats::independent_gap(a, b, stats::GapMode::difference_lower_bound);
    }
  }
  return set;
}

RunRecord run_all(const RunConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  RunRecord rec;
  rec.cfg = cfg;
  rec.bath = build_bath(cfg);
  for (auto b : opt.backends) rec.runs.push_back(run_backend(cfg, rec.bath, b, opt));

  const auto* h = rec.find(Backend::heom);
  const auto* m = rec.find(Backend::lindblad);
  const auto& th = cfg.verdicts;
  if (h && m && h->t1 && m->t1) {
    std::vector<double> times, rh, rm;
    for (std::size_t i = 0; i < h->t1->standard.probes.size(); ++i) {
      times.push_back(h->t1->standard.probes[i].time);
      rh.push_back(h->t1->standard.probes[i].rho(1, 1).real());
      rm.push_back(m->t1->standard.probes[i].rho(1, 1).real());
    }
    if (!times.empty()) rec.partial_trace = verdicts::make_partial_trace(times, rh, rm, th);
  }

  rec.cis = compute_cis(cfg, rec, opt.workers);

  std::vector<verdicts::MatrixCell> cells;
  bool complete = true;
  for (const auto& r : rec.runs) {
    const std::string tag(dynamics::to_string(r.backend));
    if (!r.dag.all_done()) complete = false;
    if (r.rabi) {
      cells.push_back({"rabi", tag,
                       {{"pi_amp", r.rabi->fit.value("pi_amp")}, {"p_max", r.rabi->fit.value("p_max")}},
                       std::string(fits::to_string(r.rabi->fit.family)), ""});
    }
    if (r.ramsey) {
      const auto& p = r.ramsey->primary(th.ramsey_fit_grid);
      cells.push_back({"ramsey", tag,
                       {{"t2_star", p.value("t2_star")}, {"tau_aw", p.value("tau_aw")}},
                       std::string(fits::to_string(p.family)),
                       p.family == fits::Family::biexp_revival ? "biexp_revival" : "exponential"});
    }
    if (r.t1) {
      const auto& f = r.t1->a_free;
      cells.push_back({"t1", tag,
                       {{"t1", f.value("t1")}, {"beta", f.value("beta")}, {"a", f.value("a")}},
                       std::string(fits::to_string(f.family)), ""});
    }
  }

  std::vector<verdicts::Verdict> vs;
  auto annotate = [&](verdicts::Verdict& v, std::initializer_list<const char*> names) {
    for (const char* n : names) {
      if (auto it = rec.cis.records.find(n); it != rec.cis.records.end()) v.annotations[n] = it->second;
    }
  };
  if (h && m && h->rabi && m->rabi) {
    auto v = verdicts::rabi_verdict(h->rabi->fit, m->rabi->fit, th);
    annotate(v, {"rabi_delta_pi_amp", "rabi_delta_p_max"});
    vs.push_back(std::move(v));
  }
  if (h && m && h->ramsey && m->ramsey) {
    auto v = verdicts::ramsey_verdict(h->ramsey->primary(th.ramsey_fit_grid), m->ramsey->exp_fit, th);
    // The fit on the other grid rides along as evidence.
    const auto& alt = th.ramsey_fit_grid == "dense" ? h->ramsey->biexp_standard : h->ramsey->biexp_dense;
    const std::string alt_tag = th.ramsey_fit_grid == "dense" ? "standard" : "dense";
    if (alt) {
      v.evidence["t2_star_heom_" + alt_tag] = alt->value("t2_star");
      v.evidence["tau_aw_heom_" + alt_tag] = alt->value("tau_aw");
      v.evidence["guard_passed_" + alt_tag] = alt->guard->passed ? 1.0 : 0.0;
    }
    v.notes["heom_fit_grid"] = th.ramsey_fit_grid;
    annotate(v, {"ramsey_t2_star_mesolve", "ramsey_t2_star_heom"});
    if (auto it = rec.cis.gaps.find("ramsey_t2_star_ratio_lower_bound"); it != rec.cis.gaps.end()) {
      v.evidence["ci_ratio_lower_bound"] = it->second;
    }
    vs.push_back(std::move(v));
  }
  if (h && m && h->t1 && m->t1) {
    auto v = verdicts::t1_interpretation(h->t1->a_free, m->t1->a_free, rec.partial_trace, th);
    annotate(v, {"t1_a_mesolve", "t1_a_heom"});
    if (auto it = rec.cis.gaps.find("t1_a_difference_lower_bound"); it != rec.cis.gaps.end()) {
      v.evidence["ci_difference_lower_bound"] = it->second;
    }
    vs.push_back(std::move(v));
  }
  const bool all_backends = opt.backends.size() == 3;
  if (complete || !cells.empty()) {
    try {
      rec.comparison = verdicts::assemble_matrix(std::move(cells), std::move(vs), all_backends && complete);
    } catch (const VerdictError&) {
      if (complete) throw;
    }
  }
  return rec;
}

}  // namespace heomcal::pipeline
