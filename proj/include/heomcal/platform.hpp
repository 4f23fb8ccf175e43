#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace heomcal {

/// Burkard 1/f bath parameterization. Frequencies in rad/ns, temperature in K.
struct BathSpec {
  double amplitude_a0 = 1.8e-6;  // GHz, enters S(w) = 2*pi*A0/|w| with w in rad/ns
  double low_cutoff = 0.0;
  double high_cutoff = 0.0;
  double temperature = 0.0;
  std::vector<double> coupling_diag;

  bool operator==(const BathSpec&) const = default;
};

/// Frozen device parameterization shared by every backend.
///
/// Immutable after load; `validate()` enforces the physical invariants and
/// names the offending field in the thrown `ConfigError`.
struct PlatformConfig {
  std::string name = "tier1";
  double qubit_freq = 0.0;     // rad/ns
  double anharmonicity = 0.0;  // rad/ns, negative for a transmon
  double t1_char = 0.0;        // ns
  double t2_char = 0.0;        // ns
  int levels = 3;
  BathSpec bath;

  void validate() const;
  bool operator==(const PlatformConfig&) const = default;
};

struct LindbladRates {
  double gamma1 = 0.0;     // 1/ns
  double gamma_phi = 0.0;  // 1/ns
};

LindbladRates derive_lindblad_rates(const PlatformConfig& cfg);

enum class Terminator { truncate, markovian };

std::string_view to_string(Terminator t);
Terminator terminator_from_string(std::string_view s);

struct DriveSettings {
  double pulse_duration = 20.0;  // ns
  double full_scale = 0.0;       // rad/ns Rabi frequency at normalized amplitude 1
  double ramsey_detuning = 0.0;  // rad/ns

  bool operator==(const DriveSettings&) const = default;
};

struct GridSpec {
  int points = 0;
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const GridSpec&) const = default;
};

struct ProtocolSettings {
  DriveSettings drive;
  GridSpec rabi{30, 0.01, 0.99};
  GridSpec ramsey{30, 10.0, 2000.0};
  GridSpec ramsey_dense_head{30, 10.0, 500.0};  // half-open on the right
  GridSpec ramsey_dense_tail{20, 500.0, 2000.0};
  GridSpec t1{8, 100.0, 2000.0};
  int t1_dense_points = 16;
  std::vector<double> probe_delays{1.0, 2.0, 5.0, 10.0, 50.0, 100.0};

  bool operator==(const ProtocolSettings&) const = default;
};

struct HeomSettings {
  int depth = 3;
  int modes = 3;
  Terminator terminator = Terminator::truncate;
  bool relaxation = true;  // apply the T1 amplitude-damping dissipator to every ADO
  double rtol = 1e-8;
  double atol = 1e-10;
  int max_ados = 20000;

  bool operator==(const HeomSettings&) const = default;
};

struct DagSettings {
  int workers = 2;
  double min_r_squared = 0.9;

  bool operator==(const DagSettings&) const = default;
};

struct VerdictThresholds {
  double ramsey_rel_gap = 1e-3;
  double rabi_pi_amp_rel = 5e-3;
  double rabi_p_max_abs = 1e-2;
  double guard_amp_ratio = 0.1;
  double guard_tc_ratio = 2.0;
  double t1_beta_tol = 1e-3;
  double t1_contamination = 0.05;
  double probe_physical = 0.05;
  double probe_representation = 1e-3;
  // HEOM Ramsey fit used for the verdict: "dense" (50-point) or "standard" (30-point).
  std::string ramsey_fit_grid = "dense";

  bool operator==(const VerdictThresholds&) const = default;
};

struct BootstrapSettings {
  int resamples = 10000;
  std::uint64_t seed = 20240917;

  bool operator==(const BootstrapSettings&) const = default;
};

/// Everything a run consumes: the platform plus protocol, solver, scheduler,
/// verdict and bootstrap sections of the same config document.
struct RunConfig {
  PlatformConfig platform;
  ProtocolSettings protocols;
  HeomSettings heom;
  DagSettings dag;
  VerdictThresholds verdicts;
  BootstrapSettings bootstrap;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

PlatformConfig parse_platform(std::string_view text);
PlatformConfig load_platform(const std::filesystem::path& path);
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Emit a config document in config units (GHz/MHz/us/mK). Values are chosen
/// so that re-parsing reproduces the internal doubles exactly.
std::string serialize_platform(const PlatformConfig& cfg);
std::string serialize_run_config(const RunConfig& cfg);

/// Built-in Tier-1 parameter preset (the shipped config/tier1.yaml).
RunConfig tier1_preset();

}  // namespace heomcal
