#include "heomcal/platform.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "heomcal/error.hpp"
#include "heomcal/units.hpp"

namespace heomcal {

namespace {

using Convert = std::function<double(double)>;

[[noreturn]] void violation(const std::string& field, const std::string& constraint) {
  throw ConfigError("invariant violation: " + field + " must satisfy " + constraint);
}

const YAML::Node require_section(const YAML::Node& root, const char* name) {
  YAML::Node node = root[name];
  if (!node || !node.IsMap()) throw ConfigError(std::string("missing section '") + name + "'");
  return node;
}

template <typename T>
T require(const YAML::Node& section, const char* section_name, const char* key) {
  YAML::Node node = section[key];
  if (!node) throw ConfigError(std::string("missing key '") + section_name + "." + key + "'");
  try {
    return node.as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("bad value for '") + section_name + "." + key + "': " + e.what());
  }
}

template <typename T>
T optional(const YAML::Node& section, const char* section_name, const char* key, T fallback) {
  if (!section) return fallback;
  YAML::Node node = section[key];
  if (!node) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("bad value for '") + section_name + "." + key + "': " + e.what());
  }
}

// Find a config-unit value whose forward conversion reproduces `internal`
// bit-for-bit. Falls back to the plain inverse when no neighbour matches.
double exact_preimage(double internal, const Convert& forward, const Convert& inverse) {
  const double guess = inverse(internal);
  if (forward(guess) == internal) return guess;
  double lo = guess;
  double hi = guess;
  for (int i = 0; i < 16; ++i) {
    lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    if (forward(lo) == internal) return lo;
    if (forward(hi) == internal) return hi;
  }
  return guess;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string emit(double internal, const Convert& forward, const Convert& inverse) {
  return num(exact_preimage(internal, forward, inverse));
}

const Convert ghz_fwd = [](double v) { return units::ghz_to_rad_per_ns(v); };
const Convert ghz_inv = [](double v) { return units::rad_per_ns_to_ghz(v); };
const Convert mhz_fwd = [](double v) { return units::mhz_to_rad_per_ns(v); };
const Convert mhz_inv = [](double v) { return units::rad_per_ns_to_mhz(v); };
const Convert us_fwd = [](double v) { return units::us_to_ns(v); };
const Convert us_inv = [](double v) { return v * 1e-3; };
const Convert mk_fwd = [](double v) { return units::mk_to_k(v); };
const Convert mk_inv = [](double v) { return v * 1e3; };
const Convert same = [](double v) { return v; };

PlatformConfig platform_from_yaml(const YAML::Node& root) {
  const YAML::Node p = require_section(root, "platform");
  const YAML::Node b = require_section(root, "bath");
  PlatformConfig cfg;
  cfg.name = optional<std::string>(p, "platform", "name", "tier1");
  cfg.qubit_freq = ghz_fwd(require<double>(p, "platform", "qubit_freq_ghz"));
  cfg.anharmonicity = mhz_fwd(require<double>(p, "platform", "anharmonicity_mhz"));
  cfg.t1_char = us_fwd(require<double>(p, "platform", "t1_us"));
  cfg.t2_char = us_fwd(require<double>(p, "platform", "t2_us"));
  cfg.levels = require<int>(p, "platform", "levels");
  cfg.bath.amplitude_a0 = require<double>(b, "bath", "amplitude_a0_ghz");
  cfg.bath.low_cutoff = mhz_fwd(require<double>(b, "bath", "low_cutoff_mhz"));
  cfg.bath.high_cutoff = ghz_fwd(require<double>(b, "bath", "high_cutoff_ghz"));
  cfg.bath.temperature = mk_fwd(require<double>(b, "bath", "temperature_mk"));
  cfg.bath.coupling_diag = require<std::vector<double>>(b, "bath", "coupling_diag");
  cfg.validate();
  return cfg;
}

GridSpec grid_from_yaml(const YAML::Node& node, const char* name, GridSpec fallback) {
  if (!node) return fallback;
  const YAML::Node g = node[name];
  if (!g) return fallback;
  GridSpec out = fallback;
  out.points = optional<int>(g, name, "points", fallback.points);
  out.lo = optional<double>(g, name, "lo", fallback.lo);
  out.hi = optional<double>(g, name, "hi", fallback.hi);
  return out;
}

YAML::Node parse_yaml(std::string_view text) {
  try {
    return YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_grid(std::ostringstream& os, const char* name, const GridSpec& g) {
  os << "  " << name << ": {points: " << g.points << ", lo: " << num(g.lo) << ", hi: " << num(g.hi)
     << "}\n";
}

}  // namespace

void PlatformConfig::validate() const {
  if (!(qubit_freq > 0.0)) violation("platform.qubit_freq", "> 0");
  if (!(anharmonicity < 0.0)) violation("platform.anharmonicity", "< 0");
  if (levels < 2) violation("platform.levels", ">= 2");
  if (!(t1_char > 0.0) || !std::isfinite(t1_char)) violation("platform.t1", "finite and > 0");
  if (!(t2_char > 0.0) || !std::isfinite(t2_char)) violation("platform.t2", "finite and > 0");
  if (!(t2_char <= 2.0 * t1_char)) violation("platform.t2", "t2 <= 2*t1");
  if (!(bath.low_cutoff > 0.0)) violation("bath.low_cutoff", "> 0");
  if (!(bath.low_cutoff < bath.high_cutoff)) violation("bath.high_cutoff", "> low_cutoff");
  if (!(bath.amplitude_a0 >= 0.0)) violation("bath.amplitude_a0", ">= 0");
  if (!(bath.temperature > 0.0)) violation("bath.temperature", "> 0");
  if (static_cast<int>(bath.coupling_diag.size()) != levels) {
    violation("bath.coupling_diag", "length == platform.levels");
  }
}

LindbladRates derive_lindblad_rates(const PlatformConfig& cfg) {
  cfg.validate();
  LindbladRates r;
  r.gamma1 = 1.0 / cfg.t1_char;
  r.gamma_phi = 1.0 / cfg.t2_char - 1.0 / (2.0 * cfg.t1_char);
  // t2 <= 2 t1 guarantees this up to rounding.
  if (r.gamma_phi < 0.0) r.gamma_phi = 0.0;
  return r;
}

std::string_view to_string(Terminator t) {
  return t == Terminator::truncate ? "truncate" : "markovian";
}

Terminator terminator_from_string(std::string_view s) {
  if (s == "truncate") return Terminator::truncate;
  if (s == "markovian") return Terminator::markovian;
  throw ConfigError("unknown terminator '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  platform.validate();
  const auto& d = protocols.drive;
  if (!(d.pulse_duration > 0.0)) violation("protocols.pulse_duration_ns", "> 0");
  if (!(d.full_scale > 0.0)) violation("protocols.drive_full_scale_mhz", "> 0");
  auto check_grid = [](const GridSpec& g, const std::string& name, int min_points) {
    if (g.points < min_points) violation(name + ".points", ">= " + std::to_string(min_points));
    if (!(g.lo < g.hi)) violation(name, "lo < hi");
  };
  check_grid(protocols.rabi, "protocols.rabi", 8);
  check_grid(protocols.ramsey, "protocols.ramsey", 4);
  check_grid(protocols.ramsey_dense_head, "protocols.ramsey_dense_head", 1);
  check_grid(protocols.ramsey_dense_tail, "protocols.ramsey_dense_tail", 1);
  check_grid(protocols.t1, "protocols.t1", 4);
  if (protocols.rabi.lo < 0.0 || protocols.rabi.hi > 1.0) violation("protocols.rabi", "within [0, 1]");
  if (protocols.t1.points != 8 && protocols.t1.points != 16) violation("protocols.t1.points", "in {8, 16}");
  if (protocols.t1_dense_points != 8 && protocols.t1_dense_points != 16) {
    violation("protocols.t1_dense_points", "in {8, 16}");
  }
  if (heom.depth < 1) violation("heom.depth", ">= 1");
  if (heom.modes < 1) violation("heom.modes", ">= 1");
  if (!(heom.rtol > 0.0) || !(heom.atol > 0.0)) violation("heom.rtol/atol", "> 0");
  if (dag.workers < 1) violation("dag.workers", ">= 1");
  if (!(dag.min_r_squared > 0.0 && dag.min_r_squared <= 1.0)) violation("dag.min_r_squared", "in (0, 1]");
  if (verdicts.ramsey_fit_grid != "dense" && verdicts.ramsey_fit_grid != "standard") {
    violation("verdicts.ramsey_fit_grid", "in {dense, standard}");
  }
  if (bootstrap.resamples < 100) violation("bootstrap.resamples", ">= 100");
}

PlatformConfig parse_platform(std::string_view text) { return platform_from_yaml(parse_yaml(text)); }

PlatformConfig load_platform(const std::filesystem::path& path) { return parse_platform(read_file(path)); }

RunConfig parse_run_config(std::string_view text) {
  const YAML::Node root = parse_yaml(text);
  RunConfig rc;
  rc.platform = platform_from_yaml(root);

  const YAML::Node pr = root["protocols"];
  auto& d = rc.protocols.drive;
  d.pulse_duration = optional<double>(pr, "protocols", "pulse_duration_ns", 20.0);
  d.full_scale = mhz_fwd(optional<double>(pr, "protocols", "drive_full_scale_mhz", 80.0));
  d.ramsey_detuning = mhz_fwd(optional<double>(pr, "protocols", "ramsey_detuning_mhz", 0.0));
  rc.protocols.rabi = grid_from_yaml(pr, "rabi", rc.protocols.rabi);
  rc.protocols.ramsey = grid_from_yaml(pr, "ramsey", rc.protocols.ramsey);
  rc.protocols.ramsey_dense_head = grid_from_yaml(pr, "ramsey_dense_head", rc.protocols.ramsey_dense_head);
  rc.protocols.ramsey_dense_tail = grid_from_yaml(pr, "ramsey_dense_tail", rc.protocols.ramsey_dense_tail);
  rc.protocols.t1 = grid_from_yaml(pr, "t1", rc.protocols.t1);
  rc.protocols.t1_dense_points = optional<int>(pr, "protocols", "t1_dense_points", 16);
  rc.protocols.probe_delays =
      optional<std::vector<double>>(pr, "protocols", "probe_delays_ns", rc.protocols.probe_delays);

  const YAML::Node h = root["heom"];
  rc.heom.depth = optional<int>(h, "heom", "depth", rc.heom.depth);
  rc.heom.modes = optional<int>(h, "heom", "modes", rc.heom.modes);
  rc.heom.terminator = terminator_from_string(optional<std::string>(h, "heom", "terminator", "truncate"));
  rc.heom.relaxation = optional<bool>(h, "heom", "relaxation", rc.heom.relaxation);
  rc.heom.rtol = optional<double>(h, "heom", "rtol", rc.heom.rtol);
  rc.heom.atol = optional<double>(h, "heom", "atol", rc.heom.atol);
  rc.heom.max_ados = optional<int>(h, "heom", "max_ados", rc.heom.max_ados);

  const YAML::Node g = root["dag"];
  rc.dag.workers = optional<int>(g, "dag", "workers", rc.dag.workers);
  rc.dag.min_r_squared = optional<double>(g, "dag", "min_r_squared", rc.dag.min_r_squared);

  const YAML::Node v = root["verdicts"];
  auto& t = rc.verdicts;
  t.ramsey_rel_gap = optional<double>(v, "verdicts", "ramsey_rel_gap", t.ramsey_rel_gap);
  t.rabi_pi_amp_rel = optional<double>(v, "verdicts", "rabi_pi_amp_rel", t.rabi_pi_amp_rel);
  t.rabi_p_max_abs = optional<double>(v, "verdicts", "rabi_p_max_abs", t.rabi_p_max_abs);
  t.guard_amp_ratio = optional<double>(v, "verdicts", "guard_amp_ratio", t.guard_amp_ratio);
  t.guard_tc_ratio = optional<double>(v, "verdicts", "guard_tc_ratio", t.guard_tc_ratio);
  t.t1_beta_tol = optional<double>(v, "verdicts", "t1_beta_tol", t.t1_beta_tol);
  t.t1_contamination = optional<double>(v, "verdicts", "t1_contamination", t.t1_contamination);
  t.probe_physical = optional<double>(v, "verdicts", "probe_physical", t.probe_physical);
  t.probe_representation = optional<double>(v, "verdicts", "probe_representation", t.probe_representation);
  t.ramsey_fit_grid = optional<std::string>(v, "verdicts", "ramsey_fit_grid", t.ramsey_fit_grid);

  const YAML::Node bs = root["bootstrap"];
  rc.bootstrap.resamples = optional<int>(bs, "bootstrap", "resamples", rc.bootstrap.resamples);
  rc.bootstrap.seed = optional<std::uint64_t>(bs, "bootstrap", "seed", rc.bootstrap.seed);

  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string serialize_platform(const PlatformConfig& cfg) {
  std::ostringstream os;
  os << "platform:\n";
  os << "  name: " << cfg.name << "\n";
  os << "  qubit_freq_ghz: " << emit(cfg.qubit_freq, ghz_fwd, ghz_inv) << "\n";
  os << "  anharmonicity_mhz: " << emit(cfg.anharmonicity, mhz_fwd, mhz_inv) << "\n";
  os << "  t1_us: " << emit(cfg.t1_char, us_fwd, us_inv) << "\n";
  os << "  t2_us: " << emit(cfg.t2_char, us_fwd, us_inv) << "\n";
  os << "  levels: " << cfg.levels << "\n";
  os << "bath:\n";
  os << "  amplitude_a0_ghz: " << num(cfg.bath.amplitude_a0) << "\n";
  os << "  low_cutoff_mhz: " << emit(cfg.bath.low_cutoff, mhz_fwd, mhz_inv) << "\n";
  os << "  high_cutoff_ghz: " << emit(cfg.bath.high_cutoff, ghz_fwd, ghz_inv) << "\n";
  os << "  temperature_mk: " << emit(cfg.bath.temperature, mk_fwd, mk_inv) << "\n";
  os << "  coupling_diag: [";
  for (std::size_t i = 0; i < cfg.bath.coupling_diag.size(); ++i) {
    os << (i ? ", " : "") << num(cfg.bath.coupling_diag[i]);
  }
  os << "]\n";
  return os.str();
}

std::string serialize_run_config(const RunConfig& rc) {
  std::ostringstream os;
  os << serialize_platform(rc.platform);
  const auto& p = rc.protocols;
  os << "protocols:\n";
  os << "  pulse_duration_ns: " << num(p.drive.pulse_duration) << "\n";
  os << "  drive_full_scale_mhz: " << emit(p.drive.full_scale, mhz_fwd, mhz_inv) << "\n";
  os << "  ramsey_detuning_mhz: " << emit(p.drive.ramsey_detuning, mhz_fwd, mhz_inv) << "\n";
  emit_grid(os, "rabi", p.rabi);
  emit_grid(os, "ramsey", p.ramsey);
  emit_grid(os, "ramsey_dense_head", p.ramsey_dense_head);
  emit_grid(os, "ramsey_dense_tail", p.ramsey_dense_tail);
  emit_grid(os, "t1", p.t1);
  os << "  t1_dense_points: " << p.t1_dense_points << "\n";
  os << "  probe_delays_ns: [";
  for (std::size_t i = 0; i < p.probe_delays.size(); ++i) os << (i ? ", " : "") << num(p.probe_delays[i]);
  os << "]\n";
  const auto& h = rc.heom;
  os << "heom:\n";
  os << "  depth: " << h.depth << "\n  modes: " << h.modes << "\n  terminator: " << to_string(h.terminator)
     << "\n  relaxation: " << (h.relaxation ? "true" : "false") << "\n  rtol: " << num(h.rtol)
     << "\n  atol: " << num(h.atol) << "\n  max_ados: " << h.max_ados << "\n";
  os << "dag:\n  workers: " << rc.dag.workers << "\n  min_r_squared: " << num(rc.dag.min_r_squared) << "\n";
  const auto& t = rc.verdicts;
  os << "verdicts:\n";
  os << "  ramsey_rel_gap: " << num(t.ramsey_rel_gap) << "\n";
  os << "  rabi_pi_amp_rel: " << num(t.rabi_pi_amp_rel) << "\n";
  os << "  rabi_p_max_abs: " << num(t.rabi_p_max_abs) << "\n";
  os << "  guard_amp_ratio: " << num(t.guard_amp_ratio) << "\n";
  os << "  guard_tc_ratio: " << num(t.guard_tc_ratio) << "\n";
  os << "  t1_beta_tol: " << num(t.t1_beta_tol) << "\n";
  os << "  t1_contamination: " << num(t.t1_contamination) << "\n";
  os << "  probe_physical: " << num(t.probe_physical) << "\n";
  os << "  probe_representation: " << num(t.probe_representation) << "\n";
  os << "  ramsey_fit_grid: " << t.ramsey_fit_grid << "\n";
  os << "bootstrap:\n  resamples: " << rc.bootstrap.resamples << "\n  seed: " << rc.bootstrap.seed << "\n";
  return os.str();
}

RunConfig tier1_preset() {
  static const char* kTier1 = R"(platform:
  name: tier1
  qubit_freq_ghz: 5.528
  anharmonicity_mhz: -293
  t1_us: 24.8
  t2_us: 34.2
  levels: 3
bath:
  amplitude_a0_ghz: 1.8e-6
  low_cutoff_mhz: 5
  high_cutoff_ghz: 3
  temperature_mk: 50
  coupling_diag: [0, 1, 2]
)";
  return parse_run_config(kTier1);
}

}  // namespace heomcal
