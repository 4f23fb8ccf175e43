#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "heomcal/bath.hpp"
#include "heomcal/ode.hpp"
#include "heomcal/platform.hpp"

namespace heomcal::dynamics {

using cplx = std::complex<double>;

enum class Backend { unitary, lindblad, heom };

std::string_view to_string(Backend b);
/// Accepts the canonical names plus the aliases "sesolve" and "mesolve".
Backend backend_from_string(std::string_view s);

struct PulseSegment {
  double start = 0.0;      // ns
  double duration = 0.0;   // ns
  double amplitude = 0.0;  // rad/ns Rabi frequency
  double phase = 0.0;      // rad
  std::string shape = "square";
};

/// Rotating-frame Hamiltonian: H(t) = diag(static_diag) + sum of drive
/// segments. A segment with Rabi frequency W and phase p contributes
/// (W/2) [ (|0><1| + sqrt2 |1><2| + ...) e^{-ip} + h.c. ].
struct HamiltonianPlan {
  std::vector<double> static_diag;
  std::vector<PulseSegment> drive_segments;
  std::string frame = "rotating";

  void validate() const;
  int levels() const { return static_cast<int>(static_diag.size()); }
  /// Plan end: last segment end (0 when undriven).
  double drive_end() const;
};

/// Rotating-frame diagonal (0, D, 2D + a, ...) for drive detuning D and
/// anharmonicity a, i.e. level k sits at k*D + a*k(k-1)/2.
std::vector<double> rotating_frame_diag(int levels, double anharmonicity, double detuning);

/// Ladder operator a with <k-1|a|k> = sqrt(k).
Eigen::MatrixXcd lowering_operator(int levels);

Eigen::MatrixXcd hamiltonian_at(const HamiltonianPlan& plan, double t);

struct StateProbe {
  double time = 0.0;
  Eigen::MatrixXcd rho;
};

struct SimTrace {
  std::vector<double> times;
  std::map<std::string, std::vector<double>> observables;  // pop<k>, coh01_re, coh01_im
  std::string backend;
  std::vector<StateProbe> full_state_probe;
  ode::Stats stats;

  const std::vector<double>& observable(const std::string& name) const;
};

struct HeomConfig {
  int depth_l = 3;
  bath::ExpDecomposition modes;
  Terminator terminator = Terminator::truncate;
  double relaxation_rate = 0.0;  // gamma1 of the amplitude-damping dissipator applied to every ADO
  std::size_t max_ados = 20000;

  std::size_t ado_count() const;
};

/// Number of multi-indices n over k modes with |n| <= depth: C(k + depth, depth).
std::size_t ado_count(int modes, int depth);

/// Multi-indices with |n| <= depth ordered by total order, then
/// lexicographically descending. Position in this list is the ADO rank.
std::vector<std::vector<int>> enumerate_ados(int modes, int depth);

/// A backend bound to its physical parameters. Operates on a flat complex
/// state: the wave function (unitary), the vectorized density matrix
/// (lindblad) or the ADO arena (heom, rank-major, each block column-major).
class Propagator {
 public:
  virtual ~Propagator() = default;

  virtual Backend backend() const = 0;
  int levels() const { return levels_; }

  /// Builds the flat state from a density matrix. The unitary backend
  /// requires a pure state and takes its dominant eigenvector.
  virtual Eigen::VectorXcd prepare(const Eigen::MatrixXcd& rho0) const = 0;
  virtual Eigen::MatrixXcd density(const Eigen::VectorXcd& state) const = 0;

  /// Advances `state` from t0 to t1 under `plan` and stores the state at each
  /// sample time (sorted, inside [t0, t1]). Segment edges restart the
  /// integrator so piecewise-constant drives are integrated exactly.
  ode::Stats advance(const HamiltonianPlan& plan, Eigen::VectorXcd& state, double t0, double t1,
                     std::span<const double> samples, std::vector<Eigen::VectorXcd>* out) const;

  ode::Options options;

 protected:
  explicit Propagator(int levels) : levels_(levels) {}
  virtual void rhs(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) const = 0;

  int levels_;
};

std::unique_ptr<Propagator> make_unitary(int levels);
std::unique_ptr<Propagator> make_lindblad(int levels, const LindbladRates& rates);
std::unique_ptr<Propagator> make_heom(int levels, const HeomConfig& heom, const std::vector<double>& coupling_diag);

/// Ground-state density matrix |0><0|.
Eigen::MatrixXcd ground_state(int levels);
Eigen::MatrixXcd basis_state(int levels, int k);

SimTrace evolve_unitary(const HamiltonianPlan& plan, const Eigen::VectorXcd& psi0, std::span<const double> times,
                        const ode::Options& opt = {});
SimTrace evolve_lindblad(const HamiltonianPlan& plan, const LindbladRates& rates, const Eigen::MatrixXcd& rho0,
                         std::span<const double> times, const ode::Options& opt = {});
SimTrace evolve_heom(const HamiltonianPlan& plan, const HeomConfig& heom, const std::vector<double>& coupling_diag,
                     const Eigen::MatrixXcd& rho0, std::span<const double> times,
                     std::span<const double> probes = {}, const ode::Options& opt = {});

/// Shared driver behind the evolve_* entry points.
SimTrace evolve(const Propagator& prop, const HamiltonianPlan& plan, const Eigen::MatrixXcd& rho0,
                std::span<const double> times, std::span<const double> probes = {});

/// Fills pop<k> and coh01 observables from a density matrix.
void append_observables(SimTrace& trace, const Eigen::MatrixXcd& rho);

/// max_t |a(t) - b(t)| of one observable. Throws on grid mismatch.
double trace_residual(const SimTrace& a, const SimTrace& b, const std::string& observable);

}  // namespace heomcal::dynamics
