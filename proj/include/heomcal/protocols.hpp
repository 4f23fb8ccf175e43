#pragma once

#include <memory>
#include <string>
#include <vector>

#include "heomcal/bath.hpp"
#include "heomcal/dynamics.hpp"
#include "heomcal/platform.hpp"

namespace heomcal::protocols {

/// `points` values evenly spaced on [lo, hi], or on [lo, hi) when half_open.
std::vector<double> linear_grid(const GridSpec& g, bool half_open = false);

struct RabiPlan {
  std::vector<double> amplitudes;  // normalized drive units
  double pulse_duration = 20.0;
};

struct RamseyPlan {
  std::vector<double> delays;  // ns of free evolution between the pulses
  double detuning = 0.0;       // rad/ns
};

struct T1Plan {
  std::vector<double> delays;
  std::vector<double> probe_delays;  // density-matrix snapshots after the pi pulse
};

RabiPlan make_rabi_plan(const ProtocolSettings& s);
/// Standard 30-point grid, or the 50-point dense grid (head half-open, then tail).
RamseyPlan make_ramsey_plan(const ProtocolSettings& s, bool dense);
/// 8-point default grid or the 16-point rescan over the same interval.
T1Plan make_t1_plan(const ProtocolSettings& s, bool dense);

/// Everything one backend needs to simulate a protocol. Built once per run
/// and shared read-only.
struct Engine {
  dynamics::Backend backend = dynamics::Backend::lindblad;
  PlatformConfig platform;
  DriveSettings drive;
  HeomSettings heom;
  bath::ExpDecomposition modes;  // used by the HEOM backend only

  std::unique_ptr<dynamics::Propagator> propagator() const;
  /// H for a single square pulse of normalized amplitude starting at t = 0
  /// (amplitude 0 gives the free Hamiltonian).
  dynamics::HamiltonianPlan pulse_plan(double amplitude, double detuning = 0.0) const;
};

struct TraceMeta {
  std::int64_t steps = 0;
  std::int64_t rejected = 0;
  std::int64_t rhs_evals = 0;
  std::size_t ado_count = 0;
};

struct ProtocolResult {
  std::string protocol;
  std::string backend;
  std::vector<double> sweep_values;
  std::vector<double> measured;
  TraceMeta traces_meta;
  double wall_time = 0.0;  // s

  // T1 only.
  std::vector<double> raw_measured;         // pop1 before normalization
  double pulse_end_population = 0.0;        // backend pop1 right after the pi pulse
  double reference_population = 0.0;       // closed-system pop1 right after the pi pulse
  std::vector<dynamics::StateProbe> probes;  // times relative to the pulse end
};

ProtocolResult run_rabi(const Engine& engine, const RabiPlan& plan);
ProtocolResult run_ramsey(const Engine& engine, const RamseyPlan& plan, double pi_amp);
/// pop1 after a pi pulse and a free delay, divided by the closed-system
/// pop1 at the end of the same pulse so that A = 1 marks an ideal transfer.
ProtocolResult run_t1(const Engine& engine, const T1Plan& plan, double pi_amp);

/// Engine for a backend with the Tier-1 style configuration sections.
Engine make_engine(dynamics::Backend backend, const RunConfig& cfg, const bath::ExpDecomposition& modes);

/// Builds HeomConfig from engine settings.
dynamics::HeomConfig heom_config(const Engine& engine);

}  // namespace heomcal::protocols
