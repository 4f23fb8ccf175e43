#include "heomcal/bath.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>

#include "heomcal/error.hpp"
#include "heomcal/optim.hpp"
#include "heomcal/units.hpp"

namespace heomcal::bath {

namespace {

constexpr double kPi = std::numbers::pi;

// S(w) for w >= 0 written without the 1/w singularity.
double density_nonneg(const BathSpec& b, double w) {
  const double a2 = b.low_cutoff * b.low_cutoff;
  const double x = w / b.high_cutoff;
  return 2.0 * kPi * b.amplitude_a0 * w / ((w * w + a2) * (1.0 + x * x));
}

// S(w) coth(w / 2kT), finite at w = 0.
double thermal_density(const BathSpec& b, double w, double kt) {
  const double a2 = b.low_cutoff * b.low_cutoff;
  const double x = w / b.high_cutoff;
  const double arg = w / (2.0 * kt);
  const double w_coth = arg < 1e-8 ? 2.0 * kt : w / std::tanh(arg);
  return 2.0 * kPi * b.amplitude_a0 * w_coth / ((w * w + a2) * (1.0 + x * x));
}

// Breakpoints at which the integrand changes scale.
std::vector<double> breakpoints(const BathSpec& b, double kt) {
  std::vector<double> pts{0.0};
  const double top = 200.0 * std::max({b.high_cutoff, kt, b.low_cutoff});
  for (double w = b.low_cutoff / 64.0; w < top; w *= 4.0) pts.push_back(w);
  for (double w : {b.low_cutoff, b.high_cutoff, kt}) pts.push_back(w);
  pts.push_back(top);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

struct Quad {
  double value = 0.0;
  double error = 0.0;
};

template <typename F>
Quad integrate_pieces(F&& f, const std::vector<double>& pts, double rel_tol) {
  using boost::math::quadrature::gauss_kronrod;
  Quad q;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double err = 0.0;
    q.value += gauss_kronrod<double, 31>::integrate(f, pts[i], pts[i + 1], 18, rel_tol, &err);
    q.error += std::abs(err);
  }
  double err = 0.0;
  q.value += gauss_kronrod<double, 31>::integrate(f, pts.back(), std::numeric_limits<double>::infinity(), 18,
                                                  rel_tol, &err);
  q.error += std::abs(err);
  return q;
}

// Uniform resampling by linear interpolation; samples beyond the grid are dropped.
std::vector<cplx> resample(std::span<const double> t, std::span<const cplx> y, double dt, std::size_t n) {
  std::vector<cplx> out;
  out.reserve(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = dt * static_cast<double>(i);
    if (ti > t.back()) break;
    while (j + 1 < t.size() && t[j + 1] < ti) ++j;
    if (j + 1 >= t.size()) {
      out.push_back(y.back());
      continue;
    }
    const double w = (ti - t[j]) / (t[j + 1] - t[j]);
    out.push_back((1.0 - w) * y[j] + w * y[j + 1]);
  }
  return out;
}

double residual_for(std::span<const double> t, std::span<const cplx> y, std::span<const cplx> decays,
                    std::vector<cplx>* coeffs_out = nullptr) {
  const auto c = fit_coefficients(t, y, decays);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    cplx m = 0.0;
    for (std::size_t k = 0; k < decays.size(); ++k) m += c[k] * std::exp(-decays[k] * t[i]);
    num += std::norm(m - y[i]);
    den += std::norm(y[i]);
  }
  if (coeffs_out) *coeffs_out = c;
  return den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? 1.0 : 0.0);
}

}  // namespace

cplx ExpDecomposition::evaluate(double t) const {
  cplx s = 0.0;
  for (const auto& m : modes) s += m.coeff * std::exp(-m.decay * t);
  return s;
}

ExpDecomposition ExpDecomposition::scaled(double factor) const {
  ExpDecomposition out = *this;
  for (auto& m : out.modes) m.coeff *= factor;
  return out;
}

double cutoff_window(const BathSpec& b, double omega) {
  const double w = std::abs(omega);
  if (w == 0.0) return 0.0;
  const double lo = b.low_cutoff / w;
  const double hi = w / b.high_cutoff;
  return 1.0 / ((1.0 + lo * lo) * (1.0 + hi * hi));
}

double spectral_density(const BathSpec& b, double omega) { return density_nonneg(b, std::abs(omega)); }

SpectralGrid spectral_grid(const BathSpec& b, std::size_t points) {
  if (points < 2) throw Error("bath-correlation", "spectral grid needs at least 2 points");
  SpectralGrid g;
  const double lo = std::log(b.low_cutoff);
  const double hi = std::log(b.high_cutoff);
  for (std::size_t i = 0; i < points; ++i) {
    const double w = std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
    g.omegas.push_back(w);
    g.values.push_back(spectral_density(b, w));
  }
  g.omegas.front() = b.low_cutoff;
  g.omegas.back() = b.high_cutoff;
  return g;
}

std::vector<double> default_correlation_grid(std::size_t points, double t_max) {
  if (points < 4) throw Error("bath-correlation", "correlation grid needs at least 4 points");
  const std::size_t n_log = points / 2 - 1;
  const std::size_t n_lin = points - 1 - n_log;
  const double t_switch = std::min(20.0, t_max / 2.0);
  std::vector<double> t{0.0};
  const double l0 = std::log(1e-3);
  const double l1 = std::log(t_switch);
  for (std::size_t i = 0; i < n_log; ++i) {
    t.push_back(std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(n_log - 1)));
  }
  t.back() = t_switch;
  for (std::size_t i = 1; i <= n_lin; ++i) {
    t.push_back(t_switch + (t_max - t_switch) * static_cast<double>(i) / static_cast<double>(n_lin));
  }
  t.back() = t_max;
  return t;
}

CorrelationTrace correlation_function(const BathSpec& b, std::span<const double> times, double rel_tol) {
  if (times.empty() || times.front() != 0.0) throw Error("bath-correlation", "correlation grid must start at t = 0");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw Error("bath-correlation", "correlation grid must be strictly increasing");
  }
  const double kt = units::thermal_frequency(b.temperature);
  const auto pts = breakpoints(b, kt);
  auto re_f = [&](double w) { return thermal_density(b, w, kt); };
  auto im_f = [&](double w) { return density_nonneg(b, w); };

  CorrelationTrace out;
  out.times.assign(times.begin(), times.end());
  out.values.reserve(times.size());

  // Plain Gauss-Kronrod below this time, Ooura double-exponential Fourier
  // quadrature above it (the oscillation outpaces the integrand structure).
  const double t_switch = 2.0 / std::max(b.high_cutoff, kt);
  using boost::math::quadrature::ooura_fourier_cos;
  using boost::math::quadrature::ooura_fourier_sin;
  std::optional<ooura_fourier_cos<double>> cos_int;
  std::optional<ooura_fourier_sin<double>> sin_int;

  const Quad c0 = integrate_pieces(re_f, pts, rel_tol);
  const double scale = std::abs(c0.value);

  for (double t : times) {
    Quad re;
    Quad im;
    if (t == 0.0) {
      re = c0;
    } else if (t < t_switch) {
      re = integrate_pieces([&](double w) { return re_f(w) * std::cos(w * t); }, pts, rel_tol);
      im = integrate_pieces([&](double w) { return im_f(w) * std::sin(w * t); }, pts, rel_tol);
    } else {
      if (!cos_int) {
        cos_int.emplace(std::max(rel_tol, 1e-14), 8);
        sin_int.emplace(std::max(rel_tol, 1e-14), 8);
      }
      const auto [rv, rerr] = cos_int->integrate(re_f, t);
      const auto [iv, ierr] = sin_int->integrate(im_f, t);
      // Ooura reports a relative error; anchor it to C(0) so tails that
      // underflow do not inflate the estimate.
      re = {rv, std::abs(rerr) * std::max(std::abs(rv), 1e-16 * scale)};
      im = {iv, std::abs(ierr) * std::max(std::abs(iv), 1e-16 * scale)};
    }
    if (!std::isfinite(re.value) || !std::isfinite(im.value)) {
      throw Error("bath-correlation", "quadrature did not converge at t = " + std::to_string(t));
    }
    out.values.emplace_back(re.value / kPi, -im.value / kPi);
    out.quad_error = std::max(out.quad_error, (re.error + im.error) / kPi);
  }
  return out;
}

std::vector<cplx> fit_coefficients(std::span<const double> t, std::span<const cplx> y, std::span<const cplx> decays) {
  const auto n = static_cast<Eigen::Index>(t.size());
  const auto k = static_cast<Eigen::Index>(decays.size());
  if (k == 0) return {};
  Eigen::MatrixXcd a(n, k);
  Eigen::VectorXcd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = std::exp(-decays[static_cast<std::size_t>(j)] * t[static_cast<std::size_t>(i)]);
    rhs[i] = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXcd c = a.completeOrthogonalDecomposition().solve(rhs);
  return {c.data(), c.data() + c.size()};
}

std::vector<cplx> matrix_pencil_decays(std::span<const cplx> y, double dt, int k) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (k < 1 || n < 2 * k + 2) return {};
  const Eigen::Index pencil = n / 3;
  const Eigen::Index rows = n - pencil;
  Eigen::MatrixXcd hankel(rows, pencil + 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j <= pencil; ++j) hankel(i, j) = y[static_cast<std::size_t>(i + j)];
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(hankel, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return {};
  Eigen::Index rank = 0;
  while (rank < std::min<Eigen::Index>(k, sv.size()) && sv[rank] > 1e-12 * sv[0]) ++rank;
  if (rank == 0) return {};
  const Eigen::MatrixXcd v = svd.matrixV().leftCols(rank);
  const Eigen::MatrixXcd v1 = v.topRows(pencil);
  const Eigen::MatrixXcd v2 = v.bottomRows(pencil);
  const Eigen::MatrixXcd pencil_op = v1.completeOrthogonalDecomposition().solve(v2);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(pencil_op.transpose());
  std::vector<cplx> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const cplx z = es.eigenvalues()[i];
    if (std::abs(z) == 0.0) continue;
    out.push_back(-std::log(z) / dt);
  }
  return out;
}

double decomposition_residual(const ExpDecomposition& d, const CorrelationTrace& corr) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < corr.times.size(); ++i) {
    num += std::norm(d.evaluate(corr.times[i]) - corr.values[i]);
    den += std::norm(corr.values[i]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : 1.0;
  return std::sqrt(num / den);
}

ExpDecomposition exp_decompose(const CorrelationTrace& corr, int k, bool real_decays) {
  if (k < 1) throw Error("bath-correlation", "exp_decompose needs k >= 1");
  if (corr.times.size() < static_cast<std::size_t>(10 * k)) {
    throw Error("bath-correlation", "correlation trace too short for the requested mode count");
  }
  const std::span<const double> t(corr.times);
  const std::span<const cplx> y(corr.values);
  const double t_max = t.back();

  // 1. Candidate rates from matrix pencils on uniform windows of geometric length.
  std::vector<cplx> pool;
  constexpr std::size_t kSamples = 240;
  const double t_min_window = std::max(t[1] * 20.0, t_max * 1e-6);
  for (double window = t_max; window >= t_min_window; window /= 4.0) {
    const double dt = window / static_cast<double>(kSamples - 1);
    const auto samples = resample(t, y, dt, kSamples);
    for (cplx nu : matrix_pencil_decays(samples, dt, k)) {
      if (real_decays) nu = nu.real();
      if (!(nu.real() > 0.0) || !std::isfinite(nu.real()) || !std::isfinite(nu.imag())) continue;
      if (nu.real() * dt > 4.0 || nu.real() * window < 1e-3) continue;
      pool.push_back(nu);
    }
  }
  if (pool.empty()) pool.push_back(1.0 / t_max);

  // 2. Greedy forward selection on the full grid.
  std::vector<cplx> chosen;
  double best_res = 1.0;
  bool deficient = false;
  for (int m = 0; m < k; ++m) {
    double cand_res = std::numeric_limits<double>::infinity();
    std::optional<cplx> cand;
    for (const cplx nu : pool) {
      bool dup = false;
      for (const cplx c : chosen) dup |= std::abs(c - nu) <= 1e-6 * std::abs(nu);
      if (dup) continue;
      auto trial = chosen;
      trial.push_back(nu);
      const double r = residual_for(t, y, trial);
      if (r < cand_res) {
        cand_res = r;
        cand = nu;
      }
    }
    if (!cand || (m > 0 && (best_res <= 1e-13 || cand_res > best_res * (1.0 - 1e-9)))) {
      deficient = true;
      break;
    }
    chosen.push_back(*cand);
    best_res = cand_res;
  }

  // 3. Variable-projection refinement of the rates (log-parametrized).
  const auto m = static_cast<Eigen::Index>(chosen.size());
  const Eigen::Index per = real_decays ? 1 : 2;
  Eigen::VectorXd p(m * per);
  for (Eigen::Index i = 0; i < m; ++i) {
    p[i * per] = std::log(chosen[static_cast<std::size_t>(i)].real());
    if (!real_decays) p[i * per + 1] = chosen[static_cast<std::size_t>(i)].imag();
  }
  auto unpack = [&](const Eigen::VectorXd& q) {
    std::vector<cplx> nus(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
      nus[static_cast<std::size_t>(i)] = cplx(std::exp(q[i * per]), real_decays ? 0.0 : q[i * per + 1]);
    }
    return nus;
  };
  double ynorm = 0.0;
  for (const cplx v : y) ynorm += std::norm(v);
  ynorm = std::sqrt(ynorm);
  if (ynorm == 0.0) ynorm = 1.0;
  const auto n = static_cast<Eigen::Index>(t.size());
  optim::ResidualFn res = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r) {
    const auto nus = unpack(q);
    const auto c = fit_coefficients(t, y, nus);
    r.resize(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      cplx mdl = 0.0;
      for (std::size_t j = 0; j < nus.size(); ++j) mdl += c[j] * std::exp(-nus[j] * t[static_cast<std::size_t>(i)]);
      const cplx d = (mdl - y[static_cast<std::size_t>(i)]) / ynorm;
      r[2 * i] = d.real();
      r[2 * i + 1] = d.imag();
    }
  };
  if (m > 0) {
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(p.size(), -std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(p.size(), std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < m; ++i) hi[i * per] = std::log(1e6);
    optim::LmOptions opt;
    opt.max_iterations = 200;
    opt.fd_step = 1e-6;
    const auto lm = optim::levenberg_marquardt(res, {}, p, lo, hi, opt);
    if (std::isfinite(lm.cost) && std::sqrt(2.0 * lm.cost) <= best_res) p = lm.x;
  }

  ExpDecomposition out;
  const auto nus = unpack(p);
  const auto coeffs = fit_coefficients(t, y, nus);
  for (std::size_t i = 0; i < nus.size(); ++i) out.modes.push_back({coeffs[i], nus[i]});
  std::sort(out.modes.begin(), out.modes.end(),
            [](const ExpMode& a, const ExpMode& b) { return a.decay.real() < b.decay.real(); });
  out.rank_deficient = deficient;
  out.method_tag = real_decays ? "matrix-pencil+varpro(real)" : "matrix-pencil+varpro(complex)";
  out.rel_rms_residual = decomposition_residual(out, corr);
  for (const auto& mode : out.modes) {
    if (!(mode.decay.real() > 0.0)) throw Error("bath-correlation", "decomposition produced a non-decaying mode");
  }
  return out;
}

}  // namespace heomcal::bath
