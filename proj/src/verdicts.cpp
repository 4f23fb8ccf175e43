#include "heomcal/verdicts.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "heomcal/error.hpp"

namespace heomcal::verdicts {

namespace {

double derived_or(const fits::FitResult& f, const std::string& name, const std::string& fallback) {
  if (auto it = f.derived.find(name); it != f.derived.end()) return it->second;
  return f.value(fallback);
}

}  // namespace

std::string_view to_string(Label l) {
  switch (l) {
    case Label::non_markov_gap: return "non_markov_gap";
    case Label::distinguishable: return "distinguishable";
    case Label::marginal_visibility: return "marginal_visibility";
    case Label::degraded: return "degraded";
    case Label::shape_match_with_contamination: return "shape_match_with_contamination";
  }
  return "unknown";
}

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::physical: return "physical";
    case Branch::representation: return "representation";
    case Branch::indeterminate: return "indeterminate";
  }
  return "unknown";
}

Branch classify_branch(double discrepancy, const VerdictThresholds& th) {
  if (discrepancy >= th.probe_physical) return Branch::physical;
  if (discrepancy <= th.probe_representation) return Branch::representation;
  return Branch::indeterminate;
}

PartialTraceRecord make_partial_trace(std::vector<double> times, std::vector<double> heom, std::vector<double> mesolve,
                                      const VerdictThresholds& th) {
  if (times.empty() || times.size() != heom.size() || times.size() != mesolve.size()) {
    throw VerdictError("partial-trace record needs matched, non-empty probe vectors");
  }
  PartialTraceRecord r;
  r.probe_times = std::move(times);
  r.rho11_heom = std::move(heom);
  r.rho11_mesolve = std::move(mesolve);
  for (std::size_t i = 0; i < r.probe_times.size(); ++i) {
    r.discrepancy_per_delay.push_back(r.rho11_mesolve[i] - r.rho11_heom[i]);
  }
  const auto first = std::min_element(r.probe_times.begin(), r.probe_times.end()) - r.probe_times.begin();
  r.branch = classify_branch(r.discrepancy_per_delay[static_cast<std::size_t>(first)], th);

  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < r.probe_times.size(); ++i) {
    if (r.probe_times[i] < 1.0 || r.probe_times[i] > 100.0) continue;
    lo = std::min(lo, r.rho11_heom[i]);
    hi = std::max(hi, r.rho11_heom[i]);
  }
  r.plateau_flatness = hi >= lo && hi > 0.0 ? (hi - lo) / hi : 0.0;
  return r;
}

Verdict ramsey_verdict(const fits::FitResult& heom, const fits::FitResult& mesolve, const VerdictThresholds& th) {
  if (!heom.guard) throw VerdictError("ramsey_verdict: HEOM fit carries no revival guard outcome");
  Verdict v;
  v.protocol = "ramsey";
  const double t_m = mesolve.value("t2_star");
  const double t_h = heom.value("t2_star");
  const double tau_m = derived_or(mesolve, "tau_aw", "t2_star");
  const double tau_h = derived_or(heom, "tau_aw", "t2_star");
  const double rel = std::abs(t_h - t_m) / t_m;
  v.evidence["t2_star_mesolve"] = t_m;
  v.evidence["t2_star_heom"] = t_h;
  v.evidence["relative_difference"] = rel;
  v.evidence["ratio_mesolve_over_heom"] = t_m / t_h;
  v.evidence["tau_aw_mesolve"] = tau_m;
  v.evidence["tau_aw_heom"] = tau_h;
  v.evidence["tau_aw_ratio"] = tau_m / tau_h;
  v.evidence["guard_amp_ratio"] = heom.guard->amp_ratio;
  v.evidence["guard_tc_ratio"] = heom.guard->tc_ratio;
  v.evidence["guard_passed"] = heom.guard->passed ? 1.0 : 0.0;
  v.evidence["mesolve_ceiling_hit"] = mesolve.ceiling_hit ? 1.0 : 0.0;
  if (rel > th.ramsey_rel_gap && heom.guard->passed) {
    v.label = Label::non_markov_gap;
    v.status = "assigned";
  } else {
    v.status = "no_gap";
    v.notes["reason"] = rel > th.ramsey_rel_gap ? "revival guard failed" : "relative T2* difference below threshold";
  }
  return v;
}

Verdict rabi_verdict(const fits::FitResult& heom, const fits::FitResult& ref, const VerdictThresholds& th) {
  Verdict v;
  v.protocol = "rabi";
  const double pa_h = heom.value("pi_amp"), pa_r = ref.value("pi_amp");
  const double pm_h = heom.value("p_max"), pm_r = ref.value("p_max");
  const double d_amp = pa_h - pa_r;
  const double d_pmax = pm_h - pm_r;
  const double rel_amp = std::abs(d_amp) / std::abs(pa_r);
  v.evidence["pi_amp_heom"] = pa_h;
  v.evidence["pi_amp_ref"] = pa_r;
  v.evidence["delta_pi_amp"] = d_amp;
  v.evidence["relative_delta_pi_amp"] = rel_amp;
  v.evidence["p_max_heom"] = pm_h;
  v.evidence["p_max_ref"] = pm_r;
  v.evidence["delta_p_max"] = d_pmax;
  v.status = "assigned";
  if (rel_amp >= th.rabi_pi_amp_rel) {
    v.label = Label::distinguishable;
  } else if (std::abs(d_pmax) >= th.rabi_p_max_abs) {
    v.label = Label::marginal_visibility;
  } else {
    v.label = Label::degraded;
  }
  return v;
}

Verdict t1_interpretation(const fits::FitResult& heom, const fits::FitResult& mesolve,
                          const std::optional<PartialTraceRecord>& probe, const VerdictThresholds& th) {
  if (!probe) throw VerdictError("t1_interpretation: partial-trace probe record missing");
  Verdict v;
  v.protocol = "t1";
  const double a_h = heom.value("a"), a_m = mesolve.value("a");
  const double b_h = heom.value("beta"), b_m = mesolve.value("beta");
  const double d_beta = std::abs(b_h - b_m);
  v.evidence["a_heom"] = a_h;
  v.evidence["a_mesolve"] = a_m;
  v.evidence["delta_a"] = a_h - a_m;
  v.evidence["beta_heom"] = b_h;
  v.evidence["beta_mesolve"] = b_m;
  v.evidence["delta_beta"] = d_beta;
  v.evidence["t1_heom"] = heom.value("t1");
  v.evidence["t1_mesolve"] = mesolve.value("t1");
  v.evidence["probe_discrepancy_first"] = probe->discrepancy_per_delay.front();
  v.notes["branch"] = std::string(to_string(probe->branch));

  const bool shape = d_beta <= th.t1_beta_tol;
  const bool contaminated = a_h < a_m - th.t1_contamination;
  if (shape && contaminated && probe->branch == Branch::physical) {
    v.label = Label::shape_match_with_contamination;
    v.status = "assigned";
  } else if (contaminated && probe->branch != Branch::physical) {
    // An amplitude deficit the probe cannot attribute to the bath.
    v.status = "withheld";
    v.notes["reason"] = "amplitude deficit without a physical probe branch; flagged for audit";
  } else {
    v.status = "no_gap";
    v.notes["reason"] = shape ? "no initial-state contamination" : "decay shapes differ";
  }
  return v;
}

const std::vector<std::string>& observable_names(std::string_view protocol) {
  static const std::vector<std::string> rabi{"pi_amp", "p_max"};
  static const std::vector<std::string> ramsey{"t2_star", "tau_aw"};
  static const std::vector<std::string> t1{"t1", "beta", "a"};
  static const std::vector<std::string> none;
  if (protocol == "rabi") return rabi;
  if (protocol == "ramsey") return ramsey;
  if (protocol == "t1") return t1;
  return none;
}

ComparisonRecord assemble_matrix(std::vector<MatrixCell> cells, std::vector<Verdict> verdicts, bool require_all) {
  std::map<std::pair<std::string, std::string>, const MatrixCell*> by_key;
  std::set<std::string> backends;
  for (const auto& c : cells) {
    const auto& names = observable_names(c.protocol);
    if (names.empty()) throw VerdictError("matrix cell with unknown protocol '" + c.protocol + "'");
    for (const auto& [k, val] : c.observables) {
      if (std::find(names.begin(), names.end(), k) == names.end()) {
        throw VerdictError("observable '" + k + "' is not declared for protocol '" + c.protocol + "'");
      }
    }
    if (!by_key.emplace(std::pair{c.protocol, c.backend}, &c).second) {
      throw VerdictError("duplicate matrix cell " + c.protocol + "/" + c.backend);
    }
    backends.insert(c.backend);
  }
  const std::vector<std::pair<std::string, std::string>> expected{
      {"rabi", "unitary"}, {"rabi", "lindblad"}, {"rabi", "heom"},  {"ramsey", "unitary"},
      {"ramsey", "lindblad"}, {"ramsey", "heom"}, {"t1", "lindblad"}, {"t1", "heom"}};
  for (const auto& key : expected) {
    if (!require_all && !backends.count(key.second)) continue;
    if (!by_key.count(key)) throw VerdictError("missing matrix cell " + key.first + "/" + key.second);
  }

  ComparisonRecord out;
  for (const std::string protocol : {"rabi", "ramsey", "t1"}) {
    const auto h = by_key.find({protocol, "heom"});
    const auto m = by_key.find({protocol, "lindblad"});
    if (h == by_key.end() || m == by_key.end()) continue;
    auto& d = out.delta[protocol];
    for (const auto& name : observable_names(protocol)) {
      const auto ih = h->second->observables.find(name);
      const auto im = m->second->observables.find(name);
      if (ih == h->second->observables.end() || im == m->second->observables.end()) continue;
      d[name] = ih->second - im->second;
      if (protocol == "ramsey") d[name + "_ratio_mesolve_over_heom"] = im->second / ih->second;
    }
  }
  out.cells = std::move(cells);
  out.verdicts = std::move(verdicts);
  return out;
}

}  // namespace heomcal::verdicts
