#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "heomcal/bath.hpp"
#include "heomcal/dag.hpp"
#include "heomcal/fits.hpp"
#include "heomcal/platform.hpp"
#include "heomcal/protocols.hpp"
#include "heomcal/stats.hpp"
#include "heomcal/verdicts.hpp"

namespace heomcal::pipeline {

/// Correlation function and K-mode decomposition for a run. A zero coupling
/// amplitude gives an empty decomposition (the hierarchy is inert).
struct BathModel {
  bath::CorrelationTrace corr;
  bath::ExpDecomposition modes;
};

BathModel build_bath(const RunConfig& cfg);

/// One protocol trace restricted to a sub-grid of a combined run.
protocols::ProtocolResult restrict_to(const protocols::ProtocolResult& r, const std::vector<double>& grid);

struct RabiOutcome {
  protocols::ProtocolResult trace;
  fits::FitResult fit;
};

struct RamseyOutcome {
  protocols::ProtocolResult standard;  // 30-point common grid
  protocols::ProtocolResult dense;     // 50-point grid
  fits::FitResult exp_fit;             // exp_ceiling on the common grid
  std::optional<fits::FitResult> biexp_standard;
  std::optional<fits::FitResult> biexp_dense;
  std::optional<fits::FitResult> stretched_dense;
  double pi_amp = 0.0;

  /// Fit that feeds the matrix and verdict: biexp on the configured grid for
  /// HEOM, exp_ceiling otherwise.
  const fits::FitResult& primary(const std::string& grid) const;
};

struct T1Outcome {
  protocols::ProtocolResult standard;  // 8 points
  protocols::ProtocolResult dense;     // 16 points
  fits::FitResult a_free;              // constrained_a_free, standard grid
  fits::FitResult a_free_dense;
  fits::FitResult a_pinned;
  fits::FitResult free_beta;
  double pi_amp = 0.0;
};

struct BackendRun {
  dynamics::Backend backend = dynamics::Backend::lindblad;
  dag::DagRunRecord dag;
  std::optional<RabiOutcome> rabi;
  std::optional<RamseyOutcome> ramsey;
  std::optional<T1Outcome> t1;
};

/// Default topology for one backend: Rabi -> {Ramsey, T1}; the unitary
/// backend has no T1 node (it is the Markov reference slot).
std::vector<std::string> default_node_ids(dynamics::Backend b);

struct RunOptions {
  std::vector<dynamics::Backend> backends{dynamics::Backend::unitary, dynamics::Backend::lindblad,
                                          dynamics::Backend::heom};
  int workers = 2;
  /// Test hook: replaces the Rabi fit R^2 before gating.
  std::optional<double> force_rabi_r_squared;
};

struct CiSet {
  std::map<std::string, stats::CiRecord> records;
  std::map<std::string, double> gaps;
};

struct RunRecord {
  RunConfig cfg;
  BathModel bath;
  std::vector<BackendRun> runs;  // options.backends order
  std::optional<verdicts::PartialTraceRecord> partial_trace;
  std::optional<verdicts::ComparisonRecord> comparison;
  CiSet cis;

  const BackendRun* find(dynamics::Backend b) const;
};

/// Node bodies, shared with the audits. Ramsey and T1 evolve once over the
/// union of the standard and dense grids, then split.
RabiOutcome rabi_outcome(const protocols::Engine& engine, const RunConfig& cfg);
RamseyOutcome ramsey_outcome(const protocols::Engine& engine, const RunConfig& cfg, double pi_amp);
T1Outcome t1_outcome(const protocols::Engine& engine, const RunConfig& cfg, double pi_amp);

/// Executes one backend's DAG; node tasks run the protocols and fits.
BackendRun run_backend(const RunConfig& cfg, const BathModel& bath, dynamics::Backend backend,
                       const RunOptions& opt);

/// Bootstrap intervals for the comparison (HEOM vs Lindblad): Ramsey T2*,
/// paired Rabi deltas, T1 amplitudes and the adversarial-corner gaps.
CiSet compute_cis(const RunConfig& cfg, const RunRecord& rec, int workers);

/// Full run: bath, per-backend DAGs, CIs, partial-trace record, verdicts and
/// the comparison matrix.
RunRecord run_all(const RunConfig& cfg, const RunOptions& opt);

}  // namespace heomcal::pipeline
