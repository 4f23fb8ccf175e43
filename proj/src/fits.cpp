#include "heomcal/fits.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

#include "heomcal/error.hpp"
#include "heomcal/optim.hpp"

namespace heomcal::fits {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Model {
  std::vector<std::string> names;
  // Writes f(x) and, when grad != nullptr, df/dp.
  std::function<double(double x, const Eigen::VectorXd& p, double* grad)> eval;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct Best {
  Eigen::VectorXd p;
  double cost = kInf;
  bool converged = false;
  int index = -1;
  int tried = 0;
};

Best run_starts(const Model& m, std::span<const double> x, std::span<const double> y,
                const std::vector<Eigen::VectorXd>& seeds, int max_iterations = 300) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto np = static_cast<Eigen::Index>(m.names.size());
  optim::ResidualFn res = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    r.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = m.eval(x[i], p, nullptr) - y[i];
  };
  std::vector<double> g(static_cast<std::size_t>(np));
  optim::JacobianFn jac = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
    j.resize(n, np);
    for (Eigen::Index i = 0; i < n; ++i) {
      m.eval(x[i], p, g.data());
      for (Eigen::Index k = 0; k < np; ++k) j(i, k) = g[k];
    }
  };
  optim::LmOptions opt;
  opt.max_iterations = max_iterations;
  opt.ftol = 1e-12;
  opt.xtol = 1e-12;
  opt.gtol = 1e-10;
  Best best;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    ++best.tried;
    const auto lm = optim::levenberg_marquardt(res, jac, seeds[s], m.lower, m.upper, opt);
    if (!std::isfinite(lm.cost) || !lm.x.allFinite()) continue;
    if (lm.cost < best.cost * (1.0 - 1e-12) || best.index < 0) {
      best.p = lm.x;
      best.cost = lm.cost;
      best.converged = lm.converged;
      best.index = static_cast<int>(s);
    }
  }
  return best;
}

void check_input(std::span<const double> x, std::span<const double> y, std::size_t min_len, const char* who) {
  if (x.size() != y.size()) throw FitError(std::string(who) + ": x and y lengths differ");
  if (x.size() < min_len) {
    throw FitError(std::string(who) + ": needs at least " + std::to_string(min_len) + " points");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw FitError(std::string(who) + ": non-finite input");
  }
}

double span_of(std::span<const double> x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

double min_spacing(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  double m = kInf;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] > s[i - 1]) m = std::min(m, s[i] - s[i - 1]);
  }
  return std::isfinite(m) ? m : 1.0;
}

double median(std::span<const double> y) {
  std::vector<double> s(y.begin(), y.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

// Least-squares line through (x, log z) for z above a floor; returns the
// decay time -1/slope or `fallback` when no decay is visible.
double log_linear_time(std::span<const double> x, std::span<const double> z, double fallback) {
  const double zmax = *std::max_element(z.begin(), z.end());
  if (!(zmax > 0.0)) return fallback;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (z[i] > 0.05 * zmax) {
      const double ly = std::log(z[i]);
      sx += x[i];
      sy += ly;
      sxx += x[i] * x[i];
      sxy += x[i] * ly;
      ++n;
    }
  }
  if (n < 2) return fallback;
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) return fallback;
  const double slope = (n * sxy - sx * sy) / den;
  if (!(slope < 0.0)) return fallback;
  return -1.0 / slope;
}

// Frequency of the largest periodogram peak of (x, y - mean) on (0, f_max].
double dominant_frequency(std::span<const double> x, std::span<const double> y, double f_max, int bins = 512) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double best_f = 0.0;
  double best_p = -1.0;
  for (int k = 1; k <= bins; ++k) {
    const double f = f_max * k / bins;
    std::complex<double> s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (y[i] - mean) * std::polar(1.0, -2.0 * kPi * f * x[i]);
    const double p = std::norm(s);
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  return best_f;
}

FitResult finish(Family fam, const Model& m, const Best& b, std::span<const double> x, std::span<const double> y) {
  FitResult r;
  r.family = fam;
  for (std::size_t k = 0; k < m.names.size(); ++k) r.params[m.names[k]] = b.p[static_cast<Eigen::Index>(k)];
  std::vector<double> pred(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) pred[i] = m.eval(x[i], b.p, nullptr);
  r.r_squared = r_squared(y, pred);
  r.converged = b.converged;
  r.starts_tried = b.tried;
  r.best_start = b.index;
  r.cost = b.cost;
  return r;
}

Model exp_model(double t_lo, double t_hi) {
  Model m;
  m.names = {"c", "a", "T"};
  m.eval = [](double t, const Eigen::VectorXd& p, double* g) {
    const double e = std::exp(-t / p[2]);
    if (g) {
      g[0] = 1.0;
      g[1] = e;
      g[2] = p[1] * e * t / (p[2] * p[2]);
    }
    return p[0] + p[1] * e;
  };
  m.lower = Eigen::Vector3d(-kInf, -kInf, t_lo);
  m.upper = Eigen::Vector3d(kInf, kInf, t_hi);
  return m;
}

// Envelope-times-cosine with `k` exponential modes: (c, a1, t1, ..., ak, tk, f, phi).
Model revival_model(int k, double t_lo, double t_hi, double f_hi) {
  Model m;
  m.names = {"c"};
  for (int i = 1; i <= k; ++i) {
    m.names.push_back("a" + std::to_string(i));
    m.names.push_back("t" + std::to_string(i));
  }
  m.names.push_back("f");
  m.names.push_back("phi");
  const int np = 2 * k + 3;
  m.eval = [k](double t, const Eigen::VectorXd& p, double* g) {
    const double th = 2.0 * kPi * p[2 * k + 1] * t + p[2 * k + 2];
    const double cs = std::cos(th);
    double env = 0.0;
    for (int i = 0; i < k; ++i) {
      const double a = p[1 + 2 * i];
      const double tc = p[2 + 2 * i];
      const double e = std::exp(-t / tc);
      env += a * e;
      if (g) {
        g[1 + 2 * i] = e * cs;
        g[2 + 2 * i] = a * e * t / (tc * tc) * cs;
      }
    }
    if (g) {
      const double sn = std::sin(th);
      g[0] = 1.0;
      g[2 * k + 1] = -env * sn * 2.0 * kPi * t;
      g[2 * k + 2] = -env * sn;
    }
    return p[0] + env * cs;
  };
  m.lower = Eigen::VectorXd::Constant(np, -kInf);
  m.upper = Eigen::VectorXd::Constant(np, kInf);
  for (int i = 0; i < k; ++i) {
    m.lower[2 + 2 * i] = t_lo;
    m.upper[2 + 2 * i] = t_hi;
  }
  m.lower[2 * k + 1] = 0.0;
  m.upper[2 * k + 1] = f_hi;
  m.lower[2 * k + 2] = -2.0 * kPi;
  m.upper[2 * k + 2] = 2.0 * kPi;
  return m;
}

}  // namespace

std::string_view to_string(Family f) {
  switch (f) {
    case Family::exp_ceiling: return "exp_ceiling";
    case Family::damped_cosine: return "damped_cosine";
    case Family::biexp_revival: return "biexp_revival";
    case Family::stretched: return "stretched";
    case Family::triexp: return "triexp";
    case Family::t1_constrained: return "t1_constrained";
    case Family::t1_free_beta: return "t1_free_beta";
    case Family::rabi_cosine: return "rabi_cosine";
  }
  return "unknown";
}

std::string_view to_string(T1Mode m) {
  switch (m) {
    case T1Mode::constrained_a_free: return "constrained_a_free";
    case T1Mode::constrained_a_pinned: return "constrained_a_pinned";
    case T1Mode::free_beta_a_pinned: return "free_beta_a_pinned";
  }
  return "unknown";
}

T1Mode t1_mode_from_string(std::string_view s) {
  if (s == "constrained_a_free") return T1Mode::constrained_a_free;
  if (s == "constrained_a_pinned") return T1Mode::constrained_a_pinned;
  if (s == "free_beta_a_pinned") return T1Mode::free_beta_a_pinned;
  throw FitError("unknown T1 fit mode '" + std::string(s) + "'");
}

GuardOutcome evaluate_guard(double a1, double t1, double a2, double t2, const GuardThresholds& th) {
  GuardOutcome g;
  g.amp_ratio = a1 != 0.0 ? std::abs(a2 / a1) : kInf;
  g.tc_ratio = t2 / t1;
  g.passed = g.amp_ratio >= th.amp_ratio && g.tc_ratio <= th.tc_ratio;
  return g;
}

double FitResult::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw FitError("fit has no parameter '" + name + "'");
  return it->second;
}

double FitResult::value(const std::string& name) const {
  auto it = derived.find(name);
  if (it == derived.end()) throw FitError("fit has no derived value '" + name + "'");
  return it->second;
}

double r_squared(std::span<const double> y, std::span<const double> model) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - model[i]) * (y[i] - model[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

double tau_aw(std::span<const double> a, std::span<const double> t) {
  if (a.size() != t.size() || a.empty()) throw FitError("tau_aw: amplitude and timescale lists must match");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::abs(a[i]) * std::abs(t[i]);
    den += std::abs(a[i]);
  }
  if (!(den > 0.0)) throw FitError("tau_aw: all amplitudes are zero");
  return num / den;
}

FitResult fit_exp_ceiling(std::span<const double> x, std::span<const double> y, double ceiling_factor) {
  check_input(x, y, 4, "fit_exp_ceiling");
  const double span = span_of(x);
  if (!(span > 0.0)) throw FitError("fit_exp_ceiling: x has zero span");
  const double ceiling = ceiling_factor * span;
  const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
  const double range = *yhi - *ylo;
  const double scale = std::max(1.0, std::abs(median(y)));

  FitResult r;
  if (range <= 1e-14 * scale) {
    // Unidentifiable amplitude: no decay is visible at all.
    r.family = Family::exp_ceiling;
    r.params = {{"c", median(y)}, {"a", 0.0}, {"T", ceiling}};
    r.r_squared = 1.0;
    r.converged = true;
    r.ceiling_hit = true;
    r.flags["degenerate_amplitude"] = true;
    r.derived["t2_star"] = ceiling;
    r.derived["tau_aw"] = ceiling;
    r.derived["ceiling"] = ceiling;
    return r;
  }

  const Model m = exp_model(1e-6 * span, ceiling);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  const double y_first = y[order.front()];
  const double y_last = y[order.back()];
  std::vector<Eigen::VectorXd> seeds;
  for (double tf : {0.1, 0.3, 1.0, 4.9}) {
    const double T = tf * span;
    const double e = std::exp(-span / T);
    // Choose (c, a) so the seed passes through the first and last points.
    const double a = (y_first - y_last) / (1.0 - e) * std::exp(x[order.front()] / T);
    const double c = y_last - a * std::exp(-x[order.back()] / T);
    seeds.push_back(Eigen::Vector3d(c, a, T));
  }
  const Best b = run_starts(m, x, y, seeds);
  if (b.index < 0) throw FitError("fit_exp_ceiling: no start converged");
  r = finish(Family::exp_ceiling, m, b, x, y);
  const double T = std::min(r.params["T"], ceiling);
  r.params["T"] = T;
  if (std::abs(r.params["a"]) <= 1e-9 * scale) {
    r.flags["degenerate_amplitude"] = true;
    r.params["T"] = ceiling;
  }
  r.ceiling_hit = r.params["T"] >= 0.995 * ceiling;
  r.derived["t2_star"] = r.params["T"];
  r.derived["tau_aw"] = r.params["T"];  // single mode
  r.derived["ceiling"] = ceiling;
  return r;
}

FitResult fit_biexp_revival(std::span<const double> x, std::span<const double> y, const GuardThresholds& th,
                            const FitResult* warm, int max_starts) {
  check_input(x, y, 9, "fit_biexp_revival");
  const double span = span_of(x);
  if (!(span > 0.0)) throw FitError("fit_biexp_revival: x has zero span");
  const double dx = min_spacing(x);
  const double f_hi = 0.5 / dx;
  const Model m = revival_model(2, 0.1 * dx, 5.0 * span, f_hi);

  // Deterministic seed schedule.
  const double med = median(y);
  std::vector<double> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) z[i] = std::abs(y[i] - med);
  const double t1s = std::clamp(log_linear_time(x, z, 0.2 * span), dx, span);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  const std::size_t tail_n = std::max<std::size_t>(1, x.size() / 4);
  double c0 = 0.0;
  for (std::size_t i = x.size() - tail_n; i < x.size(); ++i) c0 += y[order[i]];
  c0 /= static_cast<double>(tail_n);
  const double x0 = x[order.front()];
  const double amp = (y[order.front()] - c0) * std::exp(x0 / t1s);
  const double f0 = dominant_frequency(x, y, f_hi);

  std::vector<Eigen::VectorXd> seeds;
  if (warm && warm->family == Family::biexp_revival) {
    Eigen::VectorXd p(7);
    for (std::size_t k = 0; k < m.names.size(); ++k) p[static_cast<Eigen::Index>(k)] = warm->param(m.names[k]);
    seeds.push_back(p.cwiseMax(m.lower).cwiseMin(m.upper));
  }
  for (double ratio : {3.0, 1.0 / 3.0, 10.0, 0.5}) {
    for (double f : {f0, 0.0}) {
      for (double split : {0.6, 1.5}) {
        Eigen::VectorXd p(7);
        const double t2 = std::clamp(ratio * t1s, m.lower[4], m.upper[4]);
        p << c0, split * amp, t1s, (1.0 - split) * amp, t2, f, 0.0;
        seeds.push_back(p);
      }
    }
  }
  if (max_starts > 0 && seeds.size() > static_cast<std::size_t>(max_starts)) seeds.resize(max_starts);
  const Best b = run_starts(m, x, y, seeds);
  if (b.index < 0) throw FitError("fit_biexp_revival: no start converged");
  FitResult r = finish(Family::biexp_revival, m, b, x, y);
  // The model is symmetric under swapping the two envelope modes, so equal-cost
  // optima come in both labelings. The primary mode is the one with the larger
  // |amplitude|; this keeps the guard a function of the fitted curve.
  r.flags["relabeled"] = std::abs(r.params["a2"]) > std::abs(r.params["a1"]);
  if (r.flags["relabeled"]) {
    std::swap(r.params["a1"], r.params["a2"]);
    std::swap(r.params["t1"], r.params["t2"]);
  }
  const double a1 = r.params["a1"], t1 = r.params["t1"], a2 = r.params["a2"], t2 = r.params["t2"];
  r.guard = evaluate_guard(a1, t1, a2, t2, th);
  r.derived["t2_star"] = t1;
  const double amps[2] = {a1, a2};
  const double taus[2] = {t1, t2};
  if (a1 != 0.0 || a2 != 0.0) r.derived["tau_aw"] = tau_aw(amps, taus);
  return r;
}

FitResult fit_stretched(std::span<const double> x, std::span<const double> y) {
  check_input(x, y, 5, "fit_stretched");
  const double span = span_of(x);
  if (!(span > 0.0)) throw FitError("fit_stretched: x has zero span");
  Model m;
  m.names = {"c", "a", "T", "beta"};
  m.eval = [](double t, const Eigen::VectorXd& p, double* g) {
    const double ratio = t / p[2];
    const double u = ratio > 0.0 ? std::pow(ratio, p[3]) : 0.0;
    const double e = std::exp(-u);
    if (g) {
      g[0] = 1.0;
      g[1] = e;
      g[2] = p[1] * e * u * p[3] / p[2];
      g[3] = ratio > 0.0 ? -p[1] * e * u * std::log(ratio) : 0.0;
    }
    return p[0] + p[1] * e;
  };
  m.lower = Eigen::Vector4d(-kInf, -kInf, 1e-6 * span, 1e-3);
  m.upper = Eigen::Vector4d(kInf, kInf, 100.0 * span, 3.0);

  const double med = median(y);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  const std::size_t tail_n = std::max<std::size_t>(1, x.size() / 4);
  double c0 = 0.0;
  for (std::size_t i = x.size() - tail_n; i < x.size(); ++i) c0 += y[order[i]];
  c0 /= static_cast<double>(tail_n);
  std::vector<double> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) z[i] = std::abs(y[i] - c0);
  (void)med;
  const double ts = std::clamp(log_linear_time(x, z, 0.2 * span), min_spacing(x), span);
  std::vector<Eigen::VectorXd> seeds;
  for (double beta : {1.0, 0.5, 2.0}) {
    for (double tf : {1.0, 0.3, 3.0}) {
      const double T = tf * ts;
      const double a = (y[order.front()] - c0) * std::exp(std::pow(x[order.front()] / T, beta));
      seeds.push_back(Eigen::Vector4d(c0, std::isfinite(a) ? a : y[order.front()] - c0, T, beta));
    }
  }
  const Best b = run_starts(m, x, y, seeds);
  if (b.index < 0) throw FitError("fit_stretched: no start converged");
  FitResult r = finish(Family::stretched, m, b, x, y);
  r.derived["beta"] = r.params["beta"];
  r.derived["tau"] = r.params["T"];
  // A decay time below the first sample is not resolved by the data.
  r.flags["unresolved_T"] = r.params["T"] < x[order.front()];
  return r;
}

FitResult fit_triexp_sanity(std::span<const double> x, std::span<const double> y, const FitResult& base,
                            double ghost_threshold) {
  check_input(x, y, 11, "fit_triexp_sanity");
  if (base.family != Family::biexp_revival || !base.converged) {
    throw FitError("fit_triexp_sanity: base must be a converged biexp fit");
  }
  const double span = span_of(x);
  const double dx = min_spacing(x);
  const Model m = revival_model(3, 0.1 * dx, 5.0 * span, 0.5 / dx);
  const double c = base.param("c"), a1 = base.param("a1"), t1 = base.param("t1"), a2 = base.param("a2"),
               t2 = base.param("t2"), f = base.param("f"), phi = base.param("phi");
  const double amax = std::max(std::abs(a1), std::abs(a2));
  std::vector<Eigen::VectorXd> seeds;
  for (double t3f : {1.0 / 3.0, 3.0}) {
    for (double a3f : {0.05, -0.05}) {
      const double t3 = std::clamp(t3f < 1.0 ? t3f * std::min(t1, t2) : t3f * std::max(t1, t2), m.lower[6], m.upper[6]);
      Eigen::VectorXd p(9);
      p << c, a1, t1, a2, t2, a3f * amax, t3, f, phi;
      seeds.push_back(p.cwiseMax(m.lower).cwiseMin(m.upper));
    }
  }
  const Best b = run_starts(m, x, y, seeds);
  FitResult r;
  const double base_cost = base.cost;
  if (b.index < 0 || !(b.cost <= base_cost)) {
    // The nested family can always reproduce the base; keep it with a3 = 0.
    r = base;
    r.family = Family::triexp;
    r.params["a3"] = 0.0;
    r.params["t3"] = std::sqrt(t1 * t2);
    r.flags["fallback"] = true;
  } else {
    r = finish(Family::triexp, m, b, x, y);
    r.flags["fallback"] = false;
  }
  r.guard.reset();
  const double amps[3] = {r.params["a1"], r.params["a2"], r.params["a3"]};
  const double taus[3] = {r.params["t1"], r.params["t2"], r.params["t3"]};
  const double top = std::max(std::abs(amps[0]), std::abs(amps[1]));
  const double ratio = top > 0.0 ? std::abs(amps[2]) / top : kInf;
  r.derived["a3_ratio"] = ratio;
  r.derived["delta_r_squared"] = r.r_squared - base.r_squared;
  const bool ghost = ratio < ghost_threshold;
  r.flags["third_mode_ghost"] = ghost;
  r.derived["tau_aw"] = ghost ? tau_aw(std::span<const double>(amps, 2), std::span<const double>(taus, 2))
                              : tau_aw(amps, taus);
  r.derived["t2_star"] = r.params["t1"];
  return r;
}

FitResult fit_t1(std::span<const double> x, std::span<const double> y, T1Mode mode) {
  check_input(x, y, 4, "fit_t1");
  const double span = span_of(x);
  if (!(span > 0.0)) throw FitError("fit_t1: x has zero span");
  const bool a_free = mode == T1Mode::constrained_a_free;
  const bool beta_free = mode == T1Mode::free_beta_a_pinned;
  Model m;
  m.names = {"T1"};
  if (a_free) m.names.insert(m.names.begin(), "A");
  if (beta_free) m.names.push_back("beta");
  const int ia = a_free ? 0 : -1;
  const int it = a_free ? 1 : 0;
  const int ib = beta_free ? it + 1 : -1;
  m.eval = [=](double t, const Eigen::VectorXd& p, double* g) {
    const double A = ia >= 0 ? p[ia] : 1.0;
    const double T = p[it];
    const double beta = ib >= 0 ? p[ib] : 1.0;
    const double ratio = t / T;
    const double u = ratio > 0.0 ? std::pow(ratio, beta) : 0.0;
    const double e = std::exp(-u);
    if (g) {
      if (ia >= 0) g[ia] = e;
      g[it] = A * e * u * beta / T;
      if (ib >= 0) g[ib] = ratio > 0.0 ? -A * e * u * std::log(ratio) : 0.0;
    }
    return A * e;
  };
  const auto np = static_cast<Eigen::Index>(m.names.size());
  m.lower = Eigen::VectorXd::Constant(np, -kInf);
  m.upper = Eigen::VectorXd::Constant(np, kInf);
  m.lower[it] = 1e-6 * span;
  m.upper[it] = 1e6 * span;
  if (ib >= 0) {
    m.lower[ib] = 1e-3;
    m.upper[ib] = 3.0;
  }

  std::vector<double> pos;
  for (double v : y) pos.push_back(std::max(v, 1e-300));
  double t_seed = log_linear_time(x, pos, 10.0 * span);
  t_seed = std::clamp(t_seed, m.lower[it], m.upper[it]);
  std::vector<Eigen::VectorXd> seeds;
  for (double tf : {1.0, 0.1, 10.0}) {
    for (double beta : beta_free ? std::vector<double>{1.0, 0.5} : std::vector<double>{1.0}) {
      Eigen::VectorXd p(np);
      const double T = std::clamp(tf * t_seed, m.lower[it], m.upper[it]);
      if (ia >= 0) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double e = std::exp(-x[i] / T);
          num += e * y[i];
          den += e * e;
        }
        p[ia] = den > 0.0 ? num / den : 1.0;
      }
      p[it] = T;
      if (ib >= 0) p[ib] = beta;
      seeds.push_back(p);
    }
  }
  const Best b = run_starts(m, x, y, seeds);
  if (b.index < 0) throw FitError("fit_t1: no start converged");
  FitResult r = finish(beta_free ? Family::t1_free_beta : Family::t1_constrained, m, b, x, y);
  if (!a_free) r.params["A"] = 1.0;
  if (!beta_free) r.params["beta"] = 1.0;
  r.params["B"] = 0.0;
  r.flags[std::string(to_string(mode))] = true;
  r.derived["t1"] = r.params["T1"];
  r.derived["a"] = r.params["A"];
  r.derived["beta"] = r.params["beta"];
  return r;
}

FitResult fit_rabi_cosine(std::span<const double> a, std::span<const double> y) {
  check_input(a, y, 8, "fit_rabi_cosine");
  const auto [alo_it, ahi_it] = std::minmax_element(a.begin(), a.end());
  const double alo = *alo_it, ahi = *ahi_it;
  const double span = ahi - alo;
  if (!(span > 0.0)) throw FitError("fit_rabi_cosine: amplitudes have zero span");
  const auto [ylo, yhi] = std::minmax_element(y.begin(), y.end());
  const double range = *yhi - *ylo;
  if (!(range > 1e-12)) throw FitError("fit_rabi_cosine: no interior maximum (flat response)");

  const double da = min_spacing(a);
  Model m;
  m.names = {"c", "v", "f", "phi"};
  m.eval = [](double x, const Eigen::VectorXd& p, double* g) {
    const double th = 2.0 * kPi * p[2] * x + p[3];
    const double cs = std::cos(th);
    if (g) {
      const double sn = std::sin(th);
      g[0] = 1.0;
      g[1] = cs;
      g[2] = -p[1] * sn * 2.0 * kPi * x;
      g[3] = -p[1] * sn;
    }
    return p[0] + p[1] * cs;
  };
  m.lower = Eigen::Vector4d(-kInf, -kInf, 0.0, -2.0 * kPi);
  m.upper = Eigen::Vector4d(kInf, kInf, 0.5 / da, 2.0 * kPi);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const double f0 = dominant_frequency(a, y, 0.5 / da);
  std::vector<Eigen::VectorXd> seeds;
  for (double ff : {1.0, 0.5, 2.0}) {
    for (double phi : {kPi, 0.0, 0.5 * kPi, -0.5 * kPi}) {
      seeds.push_back(Eigen::Vector4d(mean, 0.5 * range, std::min(ff * f0, 0.5 / da), phi));
    }
  }
  const Best b = run_starts(m, a, y, seeds);
  if (b.index < 0) throw FitError("fit_rabi_cosine: no start converged");
  FitResult r = finish(Family::rabi_cosine, m, b, a, y);
  double v = r.params["v"];
  double phi = r.params["phi"];
  const double f = r.params["f"];
  if (v < 0.0) {
    v = -v;
    phi += kPi;
  }
  phi = std::remainder(phi, 2.0 * kPi);
  r.params["v"] = v;
  r.params["phi"] = phi;
  if (!(v > 1e-9) || !(f > 0.0)) throw FitError("fit_rabi_cosine: no interior maximum (degenerate fit)");
  // Maxima at 2 pi f a + phi = 2 pi k.
  const double k0 = std::ceil((2.0 * kPi * f * alo + phi) / (2.0 * kPi) - 1e-12);
  const double a_max = (2.0 * kPi * k0 - phi) / (2.0 * kPi * f);
  if (a_max > ahi) throw FitError("fit_rabi_cosine: no interior maximum in the sampled range");
  r.derived["pi_amp"] = a_max;
  r.derived["p_max"] = std::clamp(r.params["c"] + v, *ylo, *yhi);
  return r;
}

double evaluate(const FitResult& fit, double t) {
  const auto& p = fit.params;
  auto get = [&](const char* k) { return p.at(k); };
  switch (fit.family) {
    case Family::exp_ceiling: return get("c") + get("a") * std::exp(-t / get("T"));
    case Family::stretched: {
      const double u = t > 0.0 ? std::pow(t / get("T"), get("beta")) : 0.0;
      return get("c") + get("a") * std::exp(-u);
    }
    case Family::biexp_revival:
    case Family::triexp: {
      double env = get("a1") * std::exp(-t / get("t1")) + get("a2") * std::exp(-t / get("t2"));
      if (fit.family == Family::triexp) env += get("a3") * std::exp(-t / get("t3"));
      return get("c") + env * std::cos(2.0 * kPi * get("f") * t + get("phi"));
    }
    case Family::t1_constrained:
    case Family::t1_free_beta: {
      const double u = t > 0.0 ? std::pow(t / get("T1"), get("beta")) : 0.0;
      return get("A") * std::exp(-u) + get("B");
    }
    case Family::rabi_cosine: return get("c") + get("v") * std::cos(2.0 * kPi * get("f") * t + get("phi"));
    case Family::damped_cosine: break;
  }
  throw FitError("evaluate: unsupported family");
}

}  // namespace heomcal::fits
