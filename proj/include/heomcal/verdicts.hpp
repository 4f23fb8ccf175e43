#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "heomcal/fits.hpp"
#include "heomcal/platform.hpp"
#include "heomcal/stats.hpp"

namespace heomcal::verdicts {

enum class Label { non_markov_gap, distinguishable, marginal_visibility, degraded, shape_match_with_contamination };

std::string_view to_string(Label l);

enum class Branch { physical, representation, indeterminate };

std::string_view to_string(Branch b);

/// ρ11 after the π pulse on HEOM and Lindblad at the probe delays.
struct PartialTraceRecord {
  std::vector<double> probe_times;
  std::vector<double> rho11_heom;
  std::vector<double> rho11_mesolve;
  std::vector<double> discrepancy_per_delay;  // mesolve - heom
  Branch branch = Branch::indeterminate;
  double plateau_flatness = 0.0;  // max relative variation of HEOM ρ11 over [1, 100] ns
};

/// physical iff discrepancy at the first probe >= physical; representation
/// iff <= representation; indeterminate in between.
Branch classify_branch(double discrepancy, const VerdictThresholds& th);

PartialTraceRecord make_partial_trace(std::vector<double> times, std::vector<double> heom, std::vector<double> mesolve,
                                      const VerdictThresholds& th);

struct Verdict {
  std::string protocol;
  std::optional<Label> label;  // empty: no criterion met
  std::string status;          // "assigned", "no_gap", "withheld"
  std::map<std::string, double> evidence;
  std::map<std::string, std::string> notes;
  std::map<std::string, stats::CiRecord> annotations;
};

/// non_markov_gap iff |ΔT2*| / T2*(mesolve) > ramsey_rel_gap and the HEOM
/// revival guard passed. Throws VerdictError when the HEOM fit has no guard.
Verdict ramsey_verdict(const fits::FitResult& heom, const fits::FitResult& mesolve, const VerdictThresholds& th);

/// distinguishable on |Δπ-amp| / π-amp(ref) >= rabi_pi_amp_rel, else
/// marginal_visibility on |Δp_max| >= rabi_p_max_abs (population points),
/// else degraded.
Verdict rabi_verdict(const fits::FitResult& heom, const fits::FitResult& ref, const VerdictThresholds& th);

/// shape_match_with_contamination iff |Δβ| <= t1_beta_tol, A(HEOM) <
/// A(mesolve) - t1_contamination and the probe branch is physical.
Verdict t1_interpretation(const fits::FitResult& heom, const fits::FitResult& mesolve,
                          const std::optional<PartialTraceRecord>& probe, const VerdictThresholds& th);

struct MatrixCell {
  std::string protocol;  // rabi, ramsey, t1
  std::string backend;   // sesolve, mesolve, heom
  std::map<std::string, double> observables;
  std::string fit_family;
  std::string decay_shape;  // Ramsey only
};

/// Declared observables per protocol.
const std::vector<std::string>& observable_names(std::string_view protocol);

struct ComparisonRecord {
  std::vector<MatrixCell> cells;
  std::map<std::string, std::map<std::string, double>> delta;  // protocol -> named HEOM vs mesolve deltas
  std::vector<Verdict> verdicts;
};

/// Checks the eight populated cells (every protocol on every backend except
/// the unitary T1 reference slot) and fills the HEOM vs mesolve column.
/// `require_all` false restricts the check to the backends present.
ComparisonRecord assemble_matrix(std::vector<MatrixCell> cells, std::vector<Verdict> verdicts,
                                 bool require_all = true);

}  // namespace heomcal::verdicts
