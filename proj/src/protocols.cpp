#include "heomcal/protocols.hpp"

#include <algorithm>
#include <chrono>

#include "heomcal/error.hpp"

namespace heomcal::protocols {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void accumulate(TraceMeta& m, const ode::Stats& s) {
  m.steps += s.accepted;
  m.rejected += s.rejected;
  m.rhs_evals += s.rhs_evals;
}

double pop1(const dynamics::Propagator& p, const Eigen::VectorXcd& y) { return p.density(y)(1, 1).real(); }

[[noreturn]] void rethrow_at(const std::string& protocol, const char* what_index, std::size_t i, const Error& e) {
  throw IntegrationError(protocol + ": " + what_index + " " + std::to_string(i) + ": " + e.what());
}

}  // namespace

std::vector<double> linear_grid(const GridSpec& g, bool half_open) {
  if (g.points < 1) throw ConfigError("grid needs at least one point");
  std::vector<double> out(static_cast<std::size_t>(g.points));
  if (g.points == 1) {
    out[0] = g.lo;
    return out;
  }
  const double div = half_open ? g.points : g.points - 1;
  for (int i = 0; i < g.points; ++i) out[i] = g.lo + (g.hi - g.lo) * static_cast<double>(i) / div;
  if (!half_open) out.back() = g.hi;
  return out;
}

RabiPlan make_rabi_plan(const ProtocolSettings& s) {
  return {linear_grid(s.rabi), s.drive.pulse_duration};
}

RamseyPlan make_ramsey_plan(const ProtocolSettings& s, bool dense) {
  RamseyPlan p;
  p.detuning = s.drive.ramsey_detuning;
  if (!dense) {
    p.delays = linear_grid(s.ramsey);
  } else {
    p.delays = linear_grid(s.ramsey_dense_head, true);
    const auto tail = linear_grid(s.ramsey_dense_tail);
    p.delays.insert(p.delays.end(), tail.begin(), tail.end());
  }
  return p;
}

T1Plan make_t1_plan(const ProtocolSettings& s, bool dense) {
  GridSpec g = s.t1;
  if (dense) g.points = s.t1_dense_points;
  return {linear_grid(g), s.probe_delays};
}

std::unique_ptr<dynamics::Propagator> Engine::propagator() const {
  std::unique_ptr<dynamics::Propagator> p;
  switch (backend) {
    case dynamics::Backend::unitary:
      p = dynamics::make_unitary(platform.levels);
      break;
    case dynamics::Backend::lindblad:
      p = dynamics::make_lindblad(platform.levels, derive_lindblad_rates(platform));
      break;
    case dynamics::Backend::heom:
      p = dynamics::make_heom(platform.levels, heom_config(*this), platform.bath.coupling_diag);
      break;
  }
  p->options.rtol = heom.rtol;
  p->options.atol = heom.atol;
  return p;
}

dynamics::HamiltonianPlan Engine::pulse_plan(double amplitude, double detuning) const {
  dynamics::HamiltonianPlan plan;
  plan.static_diag = dynamics::rotating_frame_diag(platform.levels, platform.anharmonicity, detuning);
  if (amplitude != 0.0) {
    plan.drive_segments.push_back({0.0, drive.pulse_duration, amplitude * drive.full_scale, 0.0, "square"});
  }
  return plan;
}

dynamics::HeomConfig heom_config(const Engine& e) {
  dynamics::HeomConfig h;
  h.depth_l = e.heom.depth;
  h.modes = e.modes;
  h.terminator = e.heom.terminator;
  h.relaxation_rate = e.heom.relaxation ? derive_lindblad_rates(e.platform).gamma1 : 0.0;
  h.max_ados = static_cast<std::size_t>(e.heom.max_ados);
  return h;
}

Engine make_engine(dynamics::Backend backend, const RunConfig& cfg, const bath::ExpDecomposition& modes) {
  Engine e;
  e.backend = backend;
  e.platform = cfg.platform;
  e.drive = cfg.protocols.drive;
  e.heom = cfg.heom;
  e.modes = modes;
  return e;
}

ProtocolResult run_rabi(const Engine& engine, const RabiPlan& plan) {
  const auto t0 = Clock::now();
  ProtocolResult r;
  r.protocol = "rabi";
  r.backend = std::string(dynamics::to_string(engine.backend));
  const auto prop = engine.propagator();
  if (engine.backend == dynamics::Backend::heom) r.traces_meta.ado_count = heom_config(engine).ado_count();
  const Eigen::MatrixXcd rho0 = dynamics::ground_state(engine.platform.levels);
  for (std::size_t i = 0; i < plan.amplitudes.size(); ++i) {
    if (i > 0 && !(plan.amplitudes[i] > plan.amplitudes[i - 1])) {
      throw ConfigError("Rabi amplitudes must be strictly increasing");
    }
    try {
      auto h = engine.pulse_plan(plan.amplitudes[i]);
      if (!h.drive_segments.empty()) h.drive_segments[0].duration = plan.pulse_duration;
      Eigen::VectorXcd y = prop->prepare(rho0);
      accumulate(r.traces_meta, prop->advance(h, y, 0.0, plan.pulse_duration, {}, nullptr));
      r.sweep_values.push_back(plan.amplitudes[i]);
      r.measured.push_back(pop1(*prop, y));
    } catch (const Error& e) {
      rethrow_at("rabi", "amplitude index", i, e);
    }
  }
  r.wall_time = seconds_since(t0);
  return r;
}

ProtocolResult run_ramsey(const Engine& engine, const RamseyPlan& plan, double pi_amp) {
  const auto t0 = Clock::now();
  ProtocolResult r;
  r.protocol = "ramsey";
  r.backend = std::string(dynamics::to_string(engine.backend));
  for (std::size_t i = 1; i < plan.delays.size(); ++i) {
    if (!(plan.delays[i] > plan.delays[i - 1])) throw ConfigError("Ramsey delays must be strictly increasing");
  }
  if (!plan.delays.empty() && plan.delays.front() < 0.0) throw ConfigError("Ramsey delays must be non-negative");
  const auto prop = engine.propagator();
  if (engine.backend == dynamics::Backend::heom) r.traces_meta.ado_count = heom_config(engine).ado_count();
  const double tp = engine.drive.pulse_duration;
  const auto half_pulse = engine.pulse_plan(0.5 * pi_amp, plan.detuning);
  const auto free = engine.pulse_plan(0.0, plan.detuning);

  // pi/2, then one free evolution sampled at every delay, then the closing
  // pi/2 applied to each sampled (full, bath-inclusive) state.
  Eigen::VectorXcd y = prop->prepare(dynamics::ground_state(engine.platform.levels));
  std::vector<Eigen::VectorXcd> branches;
  try {
    accumulate(r.traces_meta, prop->advance(half_pulse, y, 0.0, tp, {}, nullptr));
    const double t_end = plan.delays.empty() ? 0.0 : plan.delays.back();
    accumulate(r.traces_meta, prop->advance(free, y, 0.0, t_end, plan.delays, &branches));
  } catch (const Error& e) {
    throw IntegrationError(std::string("ramsey: free evolution: ") + e.what());
  }
  for (std::size_t i = 0; i < branches.size(); ++i) {
    try {
      accumulate(r.traces_meta, prop->advance(half_pulse, branches[i], 0.0, tp, {}, nullptr));
    } catch (const Error& e) {
      rethrow_at("ramsey", "delay index", i, e);
    }
    r.sweep_values.push_back(plan.delays[i]);
    r.measured.push_back(pop1(*prop, branches[i]));
  }
  r.wall_time = seconds_since(t0);
  return r;
}

ProtocolResult run_t1(const Engine& engine, const T1Plan& plan, double pi_amp) {
  const auto t0 = Clock::now();
  ProtocolResult r;
  r.protocol = "t1";
  r.backend = std::string(dynamics::to_string(engine.backend));
  for (std::size_t i = 1; i < plan.delays.size(); ++i) {
    if (!(plan.delays[i] > plan.delays[i - 1])) throw ConfigError("T1 delays must be strictly increasing");
  }
  const auto prop = engine.propagator();
  if (engine.backend == dynamics::Backend::heom) r.traces_meta.ado_count = heom_config(engine).ado_count();
  const double tp = engine.drive.pulse_duration;
  const auto pi_pulse = engine.pulse_plan(pi_amp);
  const auto free = engine.pulse_plan(0.0);
  const int levels = engine.platform.levels;

  // Closed-system reference population for the same pulse.
  {
    auto ref = dynamics::make_unitary(levels);
    ref->options = prop->options;
    Eigen::VectorXcd psi = ref->prepare(dynamics::ground_state(levels));
    ref->advance(pi_pulse, psi, 0.0, tp, {}, nullptr);
    r.reference_population = pop1(*ref, psi);
  }
  if (!(r.reference_population > 0.0)) throw IntegrationError("t1: pi pulse leaves no population in |1>");

  Eigen::VectorXcd y = prop->prepare(dynamics::ground_state(levels));
  std::vector<double> samples(plan.delays.begin(), plan.delays.end());
  samples.insert(samples.end(), plan.probe_delays.begin(), plan.probe_delays.end());
  std::sort(samples.begin(), samples.end());
  samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
  std::vector<Eigen::VectorXcd> states;
  try {
    accumulate(r.traces_meta, prop->advance(pi_pulse, y, 0.0, tp, {}, nullptr));
    r.pulse_end_population = pop1(*prop, y);
    const double t_end = samples.empty() ? 0.0 : samples.back();
    accumulate(r.traces_meta, prop->advance(free, y, 0.0, t_end, samples, &states));
  } catch (const Error& e) {
    throw IntegrationError(std::string("t1: ") + e.what());
  }
  auto at = [&](double t) -> const Eigen::VectorXcd& {
    return states[static_cast<std::size_t>(std::lower_bound(samples.begin(), samples.end(), t) - samples.begin())];
  };
  for (double d : plan.delays) {
    const double p = pop1(*prop, at(d));
    r.sweep_values.push_back(d);
    r.raw_measured.push_back(p);
    r.measured.push_back(p / r.reference_population);
  }
  for (double d : plan.probe_delays) r.probes.push_back({d, prop->density(at(d))});
  r.wall_time = seconds_since(t0);
  return r;
}

}  // namespace heomcal::protocols
