#include <doctest.h>

#include <cmath>

#include "heomcal/dynamics.hpp"
#include "heomcal/protocols.hpp"

using namespace heomcal;
using namespace heomcal::dynamics;

namespace {

HamiltonianPlan driven(int levels, double area) {
  HamiltonianPlan p;
  p.static_diag = rotating_frame_diag(levels, -2.0 * M_PI * 0.293, 0.0);
  p.drive_segments.push_back({0.0, 20.0, area / 20.0, 0.0});
  return p;
}

std::vector<double> grid() {
  std::vector<double> t;
  for (int i = 1; i <= 40; ++i) t.push_back(i);
  return t;
}

}  // namespace

TEST_CASE("ADO bookkeeping") {
  CHECK(ado_count(3, 3) == 20);
  CHECK(ado_count(3, 5) == 56);
  const auto ados = enumerate_ados(2, 2);
  REQUIRE(ados.size() == 6);
  CHECK(ados[0] == std::vector<int>{0, 0});
  CHECK(ados[1] == std::vector<int>{1, 0});
  CHECK(ados[2] == std::vector<int>{0, 1});
}

TEST_CASE("undriven ground state is stationary") {
  HamiltonianPlan p;
  p.static_diag = rotating_frame_diag(3, -1.8, 0.0);
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(3);
  psi(0) = 1.0;
  const auto t = grid();
  const auto tr = evolve_unitary(p, psi, t);
  for (double v : tr.observable("pop1")) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("two-level pi pulse inverts the population") {
  HamiltonianPlan p{{0.0, 0.0}, {{0.0, 20.0, M_PI / 20.0, 0.0}}};
  Eigen::VectorXcd psi(2);
  psi << 1.0, 0.0;
  const std::vector<double> t{10.0, 20.0};
  const auto tr = evolve_unitary(p, psi, t);
  CHECK(tr.observable("pop1")[0] == doctest::Approx(std::pow(std::sin(M_PI / 4), 2)).epsilon(1e-6));
  CHECK(std::abs(tr.observable("pop1")[1] - 1.0) < 1e-6);
}

TEST_CASE("strong three-level drive leaks into level 2") {
  HamiltonianPlan p = driven(3, 3.0 * M_PI);
  p.drive_segments[0].duration = 4.0;
  p.drive_segments[0].amplitude = 3.0 * M_PI / 4.0;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(3);
  psi(0) = 1.0;
  const std::vector<double> t{4.0};
  CHECK(evolve_unitary(p, psi, t).observable("pop2")[0] > 1e-3);
}

TEST_CASE("closed-system limits coincide") {
  const auto plan = driven(3, M_PI);
  const auto t = grid();
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(3);
  psi(0) = 1.0;
  const auto u = evolve_unitary(plan, psi, t);
  const auto l = evolve_lindblad(plan, LindbladRates{0.0, 0.0}, ground_state(3), t);
  HeomConfig h;
  h.depth_l = 3;
  h.modes.modes = {{{0.0, 0.0}, {0.1, 0.0}}, {{0.0, 0.0}, {1.0, 0.0}}};
  const auto e = evolve_heom(plan, h, {0.0, 1.0, 2.0}, ground_state(3), t);
  for (const char* obs : {"pop0", "pop1", "pop2", "coh01_re", "coh01_im"}) {
    CHECK(trace_residual(u, l, obs) < 1e-8);
    CHECK(trace_residual(u, e, obs) < 1e-8);
  }
}

TEST_CASE("amplitude damping follows the exponential") {
  HamiltonianPlan p;
  p.static_diag = rotating_frame_diag(3, -1.8, 0.0);
  const std::vector<double> t{24800.0};
  const auto tr = evolve_lindblad(p, LindbladRates{1.0 / 24800.0, 0.0}, basis_state(3, 1), t);
  CHECK(std::abs(tr.observable("pop1")[0] - std::exp(-1.0)) < 1e-4);
}

TEST_CASE("trace residual") {
  SimTrace a, b;
  a.times = b.times = {1.0, 2.0, 3.0};
  a.observables["pop1"] = {0.5, 0.5, 0.5};
  b.observables["pop1"] = {0.6, 0.6, 0.6};
  CHECK(trace_residual(a, a, "pop1") == 0.0);
  CHECK(trace_residual(a, b, "pop1") == doctest::Approx(0.1));
  b.times.pop_back();
  b.observables["pop1"].pop_back();
  CHECK_THROWS(trace_residual(a, b, "pop1"));
}

TEST_CASE("protocol grids") {
  const auto s = tier1_preset().protocols;
  const auto std_plan = protocols::make_ramsey_plan(s, false);
  const auto dense = protocols::make_ramsey_plan(s, true);
  CHECK(std_plan.delays.size() == 30);
  CHECK(dense.delays.size() == 50);
  CHECK(std_plan.delays.front() == 10.0);
  CHECK(std_plan.delays.back() == 2000.0);
  CHECK(std::is_sorted(dense.delays.begin(), dense.delays.end()));
  CHECK(protocols::make_t1_plan(s, false).delays.size() == 8);
  CHECK(protocols::make_t1_plan(s, true).delays.size() == 16);
  CHECK(protocols::make_rabi_plan(s).amplitudes.size() == 30);
}

TEST_CASE("ramsey at zero delay composes to a pi rotation") {
  RunConfig cfg = tier1_preset();
  const auto engine = protocols::make_engine(Backend::unitary, cfg, {});
  const auto rabi = protocols::run_rabi(engine, protocols::make_rabi_plan(cfg.protocols));
  CHECK(std::abs(rabi.measured.front()) < 0.05);
  protocols::RamseyPlan plan;
  plan.delays = {0.0};
  // Drive amplitude whose 20 ns pulse has area pi.
  const double pi_amp = M_PI / 20.0 / cfg.protocols.drive.full_scale;
  const auto r = protocols::run_ramsey(engine, plan, pi_amp);
  CHECK(r.measured[0] > 0.97);
}
