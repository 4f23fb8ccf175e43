#include "heomcal/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "heomcal/error.hpp"

namespace heomcal::dynamics {

namespace {

constexpr cplx kI{0.0, 1.0};

// out = -i (H X - X H) for column-major d x d blocks.
inline void neg_i_commutator(const cplx* h, const cplx* x, cplx* out, int d) {
  for (int b = 0; b < d; ++b) {
    for (int a = 0; a < d; ++a) {
      cplx s = 0.0;
      for (int m = 0; m < d; ++m) s += h[a + m * d] * x[m + b * d] - x[a + m * d] * h[m + b * d];
      out[a + b * d] = -kI * s;
    }
  }
}

// out += D[rho] for amplitude damping (gamma1) and number dephasing (gamma_phi).
inline void add_dissipator(const cplx* x, cplx* out, int d, double gamma1, double gamma_phi) {
  if (gamma1 == 0.0 && gamma_phi == 0.0) return;
  for (int b = 0; b < d; ++b) {
    for (int a = 0; a < d; ++a) {
      const double k = a;
      const double l = b;
      cplx v = -(0.5 * gamma1 * (k + l) + gamma_phi * (k - l) * (k - l)) * x[a + b * d];
      if (a + 1 < d && b + 1 < d) v += gamma1 * std::sqrt((k + 1.0) * (l + 1.0)) * x[(a + 1) + (b + 1) * d];
      out[a + b * d] += v;
    }
  }
}

Eigen::MatrixXcd block(const Eigen::VectorXcd& y, Eigen::Index offset, int d) {
  return Eigen::Map<const Eigen::MatrixXcd>(y.data() + offset, d, d);
}

class UnitaryPropagator final : public Propagator {
 public:
  explicit UnitaryPropagator(int levels) : Propagator(levels) {}
  Backend backend() const override { return Backend::unitary; }

  Eigen::VectorXcd prepare(const Eigen::MatrixXcd& rho0) const override {
    if (rho0.rows() != levels_ || rho0.cols() != levels_) {
      throw IntegrationError("initial state dimension does not match the level count");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho0);
    const Eigen::Index top = es.eigenvalues().size() - 1;
    if (std::abs(es.eigenvalues()[top] - 1.0) > 1e-10) {
      throw IntegrationError("unitary backend requires a pure initial state");
    }
    Eigen::VectorXcd psi = es.eigenvectors().col(top);
    // Fix the global phase on the largest component for reproducibility.
    Eigen::Index imax = 0;
    psi.cwiseAbs().maxCoeff(&imax);
    psi *= std::conj(psi[imax]) / std::abs(psi[imax]);
    return psi;
  }

  Eigen::MatrixXcd density(const Eigen::VectorXcd& psi) const override { return psi * psi.adjoint(); }

 protected:
  void rhs(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) const override {
    dy.noalias() = h * y;
    dy *= -kI;
  }
};

class LindbladPropagator final : public Propagator {
 public:
  LindbladPropagator(int levels, LindbladRates rates) : Propagator(levels), rates_(rates) {
    if (!(rates.gamma1 >= 0.0) || !(rates.gamma_phi >= 0.0)) {
      throw IntegrationError("lindblad rates must be non-negative");
    }
  }
  Backend backend() const override { return Backend::lindblad; }

  Eigen::VectorXcd prepare(const Eigen::MatrixXcd& rho0) const override {
    if (rho0.rows() != levels_ || rho0.cols() != levels_) {
      throw IntegrationError("initial state dimension does not match the level count");
    }
    return Eigen::Map<const Eigen::VectorXcd>(rho0.data(), rho0.size());
  }

  Eigen::MatrixXcd density(const Eigen::VectorXcd& y) const override { return block(y, 0, levels_); }

 protected:
  void rhs(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) const override {
    neg_i_commutator(h.data(), y.data(), dy.data(), levels_);
    add_dissipator(y.data(), dy.data(), levels_, rates_.gamma1, rates_.gamma_phi);
  }

 private:
  LindbladRates rates_;
};

struct GeneralMode {
  cplx c_left;   // multiplies Q rho
  cplx c_right;  // multiplies rho Q
  cplx nu;
};

std::vector<GeneralMode> generalize(const bath::ExpDecomposition& d) {
  std::vector<GeneralMode> out;
  for (const auto& m : d.modes) {
    if (std::abs(m.decay.imag()) <= 1e-12 * std::abs(m.decay)) {
      out.push_back({m.coeff, std::conj(m.coeff), cplx(m.decay.real(), 0.0)});
    } else {
      // A complex rate and its conjugate partner act on opposite sides.
      out.push_back({m.coeff, 0.0, m.decay});
      out.push_back({0.0, std::conj(m.coeff), std::conj(m.decay)});
    }
  }
  return out;
}

class HeomPropagator final : public Propagator {
 public:
  HeomPropagator(int levels, const HeomConfig& cfg, const std::vector<double>& q)
      : Propagator(levels), modes_(generalize(cfg.modes)), gamma1_(cfg.relaxation_rate) {
    if (cfg.depth_l < 1) throw IntegrationError("HEOM depth must be >= 1");
    if (static_cast<int>(q.size()) != levels) {
      throw IntegrationError("coupling_diag length does not match the level count");
    }
    if (levels > 8) throw IntegrationError("HEOM backend supports at most 8 levels");
    if (!(gamma1_ >= 0.0)) throw IntegrationError("HEOM relaxation rate must be non-negative");
    for (const auto& m : modes_) {
      if (!(m.nu.real() > 0.0)) throw IntegrationError("HEOM modes must decay (Re nu > 0)");
    }
    const int k = static_cast<int>(modes_.size());
    const std::size_t count = ado_count(k, cfg.depth_l);
    if (count > cfg.max_ados) {
      throw IntegrationError("ADO count " + std::to_string(count) + " exceeds the memory bound " +
                             std::to_string(cfg.max_ados));
    }
    const auto index = enumerate_ados(k, cfg.depth_l);
    n_ados_ = index.size();
    k_ = k;
    const int d = levels;
    const int dd = d * d;

    std::map<std::vector<int>, int> rank;
    for (std::size_t i = 0; i < index.size(); ++i) rank[index[i]] = static_cast<int>(i);
    up_.assign(n_ados_ * k_, -1);
    down_.assign(n_ados_ * k_, -1);
    occupation_.assign(n_ados_ * k_, 0);
    damping_.assign(n_ados_, 0.0);
    terminal_.assign(n_ados_, {});
    for (std::size_t i = 0; i < n_ados_; ++i) {
      const auto& n = index[i];
      int total = 0;
      for (int m = 0; m < k_; ++m) {
        total += n[m];
        occupation_[i * k_ + m] = n[m];
        damping_[i] += static_cast<double>(n[m]) * modes_[m].nu;
        auto nb = n;
        ++nb[m];
        if (auto it = rank.find(nb); it != rank.end()) up_[i * k_ + m] = it->second;
        if (n[m] > 0) {
          nb[m] -= 2;
          down_[i * k_ + m] = rank.at(nb);
        }
      }
      if (total == cfg.depth_l && cfg.terminator == Terminator::markovian) {
        // rho_{n+e_m} ~ -i (n_m+1) (cL Q rho_n - cR rho_n Q) / (gamma_n + nu_m),
        // folded back through -i [Q, .] into an elementwise factor on rho_n.
        std::vector<cplx> fac(dd, 0.0);
        for (int m = 0; m < k_; ++m) {
          const cplx den = damping_[i] + modes_[m].nu;
          for (int b = 0; b < d; ++b) {
            for (int a = 0; a < d; ++a) {
              fac[a + b * d] += -(q[a] - q[b]) * static_cast<double>(n[m] + 1) *
                                (modes_[m].c_left * q[a] - modes_[m].c_right * q[b]) / den;
            }
          }
        }
        terminal_[i] = std::move(fac);
      }
    }
    // Elementwise self terms: -gamma_n, the decay half of the dissipator and
    // the optional terminator.
    self_.assign(n_ados_ * dd, 0.0);
    for (std::size_t i = 0; i < n_ados_; ++i) {
      for (int b = 0; b < d; ++b) {
        for (int a = 0; a < d; ++a) {
          cplx v = -damping_[i] - 0.5 * gamma1_ * static_cast<double>(a + b);
          if (!terminal_[i].empty()) v += terminal_[i][a + b * d];
          self_[i * dd + a + b * d] = v;
        }
      }
    }
    feed_.assign(dd, 0.0);
    for (int b = 0; b + 1 < d; ++b) {
      for (int a = 0; a + 1 < d; ++a) feed_[a + b * d] = gamma1_ * std::sqrt((a + 1.0) * (b + 1.0));
    }
    up_fac_.resize(dd);
    down_fac_.assign(static_cast<std::size_t>(k_) * dd, 0.0);
    for (int b = 0; b < d; ++b) {
      for (int a = 0; a < d; ++a) {
        up_fac_[a + b * d] = -kI * (q[a] - q[b]);
        for (int m = 0; m < k_; ++m) {
          down_fac_[m * dd + a + b * d] = -kI * (modes_[m].c_left * q[a] - modes_[m].c_right * q[b]);
        }
      }
    }
  }

  Backend backend() const override { return Backend::heom; }

  Eigen::VectorXcd prepare(const Eigen::MatrixXcd& rho0) const override {
    if (rho0.rows() != levels_ || rho0.cols() != levels_) {
      throw IntegrationError("initial state dimension does not match the level count");
    }
    Eigen::VectorXcd y = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n_ados_) * levels_ * levels_);
    y.head(rho0.size()) = Eigen::Map<const Eigen::VectorXcd>(rho0.data(), rho0.size());
    return y;
  }

  Eigen::MatrixXcd density(const Eigen::VectorXcd& y) const override { return block(y, 0, levels_); }

  std::size_t ado_total() const { return n_ados_; }

 protected:
  void rhs(const Eigen::MatrixXcd& h, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) const override {
    const int d = levels_;
    const int dd = d * d;
    // Free evolution has a diagonal H; then every term is elementwise.
    bool diagonal = true;
    for (int b = 0; b < d && diagonal; ++b) {
      for (int a = 0; a < d; ++a) {
        if (a != b && h(a, b) != 0.0) {
          diagonal = false;
          break;
        }
      }
    }
    cplx comm[64];
    if (diagonal) {
      for (int b = 0; b < d; ++b) {
        for (int a = 0; a < d; ++a) comm[a + b * d] = -kI * (h(a, a) - h(b, b));
      }
    }
    const cplx* ys = y.data();
    cplx* out = dy.data();
    for (std::size_t i = 0; i < n_ados_; ++i) {
      const cplx* x = ys + i * dd;
      cplx* o = out + i * dd;
      const cplx* self = self_.data() + i * dd;
      if (diagonal) {
        for (int e = 0; e < dd; ++e) o[e] = (comm[e] + self[e]) * x[e];
      } else {
        neg_i_commutator(h.data(), x, o, d);
        for (int e = 0; e < dd; ++e) o[e] += self[e] * x[e];
      }
      if (gamma1_ != 0.0) {
        for (int b = 0; b + 1 < d; ++b) {
          for (int a = 0; a + 1 < d; ++a) o[a + b * d] += feed_[a + b * d] * x[(a + 1) + (b + 1) * d];
        }
      }
      for (int m = 0; m < k_; ++m) {
        const int u = up_[i * k_ + m];
        if (u >= 0) {
          const cplx* xu = ys + static_cast<std::size_t>(u) * dd;
          for (int e = 0; e < dd; ++e) o[e] += up_fac_[e] * xu[e];
        }
        const int lo = down_[i * k_ + m];
        if (lo >= 0) {
          const cplx* xl = ys + static_cast<std::size_t>(lo) * dd;
          const double nm = occupation_[i * k_ + m];
          const cplx* f = down_fac_.data() + m * dd;
          for (int e = 0; e < dd; ++e) o[e] += nm * f[e] * xl[e];
        }
      }
    }
  }

 private:
  std::vector<GeneralMode> modes_;
  double gamma1_;
  std::size_t n_ados_ = 0;
  int k_ = 0;
  std::vector<int> up_;
  std::vector<int> down_;
  std::vector<int> occupation_;
  std::vector<cplx> damping_;
  std::vector<std::vector<cplx>> terminal_;
  std::vector<cplx> self_;
  std::vector<cplx> feed_;
  std::vector<cplx> up_fac_;
  std::vector<cplx> down_fac_;
};

}  // namespace

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::unitary: return "unitary";
    case Backend::lindblad: return "lindblad";
    case Backend::heom: return "heom";
  }
  return "unknown";
}

Backend backend_from_string(std::string_view s) {
  if (s == "unitary" || s == "sesolve") return Backend::unitary;
  if (s == "lindblad" || s == "mesolve") return Backend::lindblad;
  if (s == "heom") return Backend::heom;
  throw Error("dynamics-backends", "unknown backend '" + std::string(s) + "'");
}

void HamiltonianPlan::validate() const {
  if (static_diag.empty()) throw IntegrationError("HamiltonianPlan.static_diag is empty");
  if (frame != "rotating") throw IntegrationError("HamiltonianPlan.frame must be 'rotating'");
  double prev_end = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < drive_segments.size(); ++i) {
    const auto& s = drive_segments[i];
    if (!(s.duration > 0.0)) throw IntegrationError("PulseSegment.duration must be > 0 (segment " + std::to_string(i) + ")");
    if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase) || !std::isfinite(s.start)) {
      throw IntegrationError("PulseSegment fields must be finite (segment " + std::to_string(i) + ")");
    }
    if (s.shape != "square") throw IntegrationError("PulseSegment.shape '" + s.shape + "' is not supported");
    if (s.start < prev_end) throw IntegrationError("drive segments overlap or are out of order");
    prev_end = s.start + s.duration;
  }
}

double HamiltonianPlan::drive_end() const {
  return drive_segments.empty() ? 0.0 : drive_segments.back().start + drive_segments.back().duration;
}

std::vector<double> rotating_frame_diag(int levels, double anharmonicity, double detuning) {
  std::vector<double> out(static_cast<std::size_t>(levels));
  for (int k = 0; k < levels; ++k) out[k] = k * detuning + 0.5 * anharmonicity * k * (k - 1);
  return out;
}

Eigen::MatrixXcd lowering_operator(int levels) {
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(levels, levels);
  for (int k = 1; k < levels; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

Eigen::MatrixXcd hamiltonian_at(const HamiltonianPlan& plan, double t) {
  const int d = plan.levels();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(d, d);
  for (int k = 0; k < d; ++k) h(k, k) = plan.static_diag[k];
  for (const auto& s : plan.drive_segments) {
    if (t < s.start || t >= s.start + s.duration) continue;
    const cplx w = 0.5 * s.amplitude * std::exp(cplx(0.0, -s.phase));
    for (int k = 1; k < d; ++k) {
      const double m = std::sqrt(static_cast<double>(k));
      h(k - 1, k) += w * m;
      h(k, k - 1) += std::conj(w) * m;
    }
  }
  return h;
}

const std::vector<double>& SimTrace::observable(const std::string& name) const {
  auto it = observables.find(name);
  if (it == observables.end()) throw Error("dynamics-backends", "trace has no observable '" + name + "'");
  return it->second;
}

std::size_t ado_count(int modes, int depth) {
  // C(modes + depth, depth) computed incrementally; exact for the sizes used.
  std::size_t r = 1;
  for (int i = 1; i <= depth; ++i) r = r * static_cast<std::size_t>(modes + i) / static_cast<std::size_t>(i);
  return r;
}

std::size_t HeomConfig::ado_count() const {
  int k = 0;
  for (const auto& m : modes.modes) k += std::abs(m.decay.imag()) <= 1e-12 * std::abs(m.decay) ? 1 : 2;
  return dynamics::ado_count(k, depth_l);
}

std::vector<std::vector<int>> enumerate_ados(int modes, int depth) {
  std::vector<std::vector<int>> out;
  std::vector<int> n(static_cast<std::size_t>(modes), 0);
  for (int total = 0; total <= depth; ++total) {
    // All compositions of `total` into `modes` non-negative parts, first part largest first.
    std::vector<std::vector<int>> level;
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == modes - 1) {
        n[pos] = left;
        level.push_back(n);
        return;
      }
      for (int v = left; v >= 0; --v) {
        n[pos] = v;
        rec(pos + 1, left - v);
      }
    };
    if (modes == 0) {
      if (total == 0) out.emplace_back();
      continue;
    }
    rec(0, total);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

ode::Stats Propagator::advance(const HamiltonianPlan& plan, Eigen::VectorXcd& state, double t0, double t1,
                               std::span<const double> samples, std::vector<Eigen::VectorXcd>* out) const {
  if (plan.levels() != levels_) throw IntegrationError("plan level count does not match the backend");
  std::vector<double> edges{t0};
  for (const auto& s : plan.drive_segments) {
    for (double e : {s.start, s.start + s.duration}) {
      if (e > t0 && e < t1) edges.push_back(e);
    }
  }
  edges.push_back(t1);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  ode::Stats total;
  std::size_t next = 0;
  while (next < samples.size() && samples[next] < t0) ++next;
  for (std::size_t seg = 0; seg + 1 < edges.size(); ++seg) {
    const double a = edges[seg];
    const double b = edges[seg + 1];
    const Eigen::MatrixXcd h = hamiltonian_at(plan, 0.5 * (a + b));
    std::size_t end = next;
    while (end < samples.size() && samples[end] <= b) ++end;
    auto f = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) { rhs(h, y, dy); };
    auto emit = [&](double, const Eigen::VectorXcd& y) {
      if (out) out->push_back(y);
    };
    total += ode::integrate(f, a, b, state, samples.subspan(next, end - next), emit, options);
    next = end;
  }
  if (t1 == t0) {
    while (next < samples.size() && samples[next] == t0) {
      if (out) out->push_back(state);
      ++next;
    }
  }
  return total;
}

std::unique_ptr<Propagator> make_unitary(int levels) { return std::make_unique<UnitaryPropagator>(levels); }

std::unique_ptr<Propagator> make_lindblad(int levels, const LindbladRates& rates) {
  return std::make_unique<LindbladPropagator>(levels, rates);
}

std::unique_ptr<Propagator> make_heom(int levels, const HeomConfig& heom, const std::vector<double>& coupling_diag) {
  return std::make_unique<HeomPropagator>(levels, heom, coupling_diag);
}

Eigen::MatrixXcd basis_state(int levels, int k) {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(levels, levels);
  rho(k, k) = 1.0;
  return rho;
}

Eigen::MatrixXcd ground_state(int levels) { return basis_state(levels, 0); }

void append_observables(SimTrace& trace, const Eigen::MatrixXcd& rho) {
  for (Eigen::Index k = 0; k < rho.rows(); ++k) trace.observables["pop" + std::to_string(k)].push_back(rho(k, k).real());
  const cplx c = rho.rows() > 1 ? rho(0, 1) : cplx(0.0);
  trace.observables["coh01_re"].push_back(c.real());
  trace.observables["coh01_im"].push_back(c.imag());
}

SimTrace evolve(const Propagator& prop, const HamiltonianPlan& plan, const Eigen::MatrixXcd& rho0,
                std::span<const double> times, std::span<const double> probes) {
  plan.validate();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0) || (i > 0 && !(times[i] > times[i - 1]))) {
      throw IntegrationError("sample times must be non-negative and strictly increasing");
    }
  }
  std::vector<double> all(times.begin(), times.end());
  all.insert(all.end(), probes.begin(), probes.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  if (!all.empty() && all.front() < 0.0) throw IntegrationError("probe times must be non-negative");

  Eigen::VectorXcd state = prop.prepare(rho0);
  std::vector<Eigen::VectorXcd> states;
  states.reserve(all.size());
  SimTrace tr;
  tr.backend = std::string(to_string(prop.backend()));
  tr.times.assign(times.begin(), times.end());
  const double t_end = all.empty() ? 0.0 : all.back();
  tr.stats = prop.advance(plan, state, 0.0, t_end, all, &states);

  auto state_at = [&](double t) -> const Eigen::VectorXcd& {
    const auto it = std::lower_bound(all.begin(), all.end(), t);
    return states[static_cast<std::size_t>(it - all.begin())];
  };
  for (double t : times) {
    const Eigen::MatrixXcd rho = prop.density(state_at(t));
    const double tr_err = std::abs(rho.trace() - 1.0);
    if (tr_err > 1e-6) {
      throw IntegrationError("trace drifted by " + std::to_string(tr_err) + " at t = " + std::to_string(t) + " ns");
    }
    append_observables(tr, rho);
  }
  for (double t : probes) tr.full_state_probe.push_back({t, prop.density(state_at(t))});
  return tr;
}

SimTrace evolve_unitary(const HamiltonianPlan& plan, const Eigen::VectorXcd& psi0, std::span<const double> times,
                        const ode::Options& opt) {
  const double norm = psi0.norm();
  if (std::abs(norm - 1.0) > 1e-10) throw IntegrationError("psi0 must be normalized");
  auto prop = make_unitary(plan.levels());
  prop->options = opt;
  return evolve(*prop, plan, psi0 * psi0.adjoint(), times);
}

SimTrace evolve_lindblad(const HamiltonianPlan& plan, const LindbladRates& rates, const Eigen::MatrixXcd& rho0,
                         std::span<const double> times, const ode::Options& opt) {
  auto prop = make_lindblad(plan.levels(), rates);
  prop->options = opt;
  return evolve(*prop, plan, rho0, times);
}

SimTrace evolve_heom(const HamiltonianPlan& plan, const HeomConfig& heom, const std::vector<double>& coupling_diag,
                     const Eigen::MatrixXcd& rho0, std::span<const double> times, std::span<const double> probes,
                     const ode::Options& opt) {
  auto prop = make_heom(plan.levels(), heom, coupling_diag);
  prop->options = opt;
  return evolve(*prop, plan, rho0, times, probes);
}

double trace_residual(const SimTrace& a, const SimTrace& b, const std::string& observable) {
  if (a.times != b.times) throw Error("dynamics-backends", "trace_residual: time grids differ");
  const auto& x = a.observable(observable);
  const auto& y = b.observable(observable);
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

}  // namespace heomcal::dynamics
