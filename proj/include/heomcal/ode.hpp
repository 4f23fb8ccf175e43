#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "heomcal/error.hpp"

namespace heomcal::ode {

struct Options {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_init = 0.0;  // 0 selects an automatic first step
  double h_max = 0.0;   // 0 means unbounded
  std::int64_t max_steps = 50'000'000;
};

struct Stats {
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t rhs_evals = 0;

  Stats& operator+=(const Stats& o) {
    accepted += o.accepted;
    rejected += o.rejected;
    rhs_evals += o.rhs_evals;
    return *this;
  }
};

// Dormand-Prince 5(4) with the 4th-order continuous extension of Hairer,
// Norsett & Wanner. Complex state vectors. The step-size controller is the
// PI variant from DOPRI5 (beta = 0.04).
//
// `f(t, y, dy)` must write dy = f(t, y). `emit(t, y)` receives the dense
// solution at each requested time in `outputs` (sorted, inside [t0, t1]).
// On return `y` holds the state at t1 and `h_hint` a suggested next step.
template <typename F, typename Emit>
Stats integrate(F&& f, double t0, double t1, Eigen::VectorXcd& y, std::span<const double> outputs, Emit&& emit,
                const Options& opt, double* h_hint = nullptr) {
  using V = Eigen::VectorXcd;
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                   a76 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                   d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                   d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  Stats st;
  std::size_t next_out = 0;
  while (next_out < outputs.size() && outputs[next_out] < t0) ++next_out;
  while (next_out < outputs.size() && outputs[next_out] == t0) {
    emit(t0, std::as_const(y));
    ++next_out;
  }
  if (t1 <= t0) {
    if (h_hint) *h_hint = opt.h_init;
    return st;
  }

  const Eigen::Index n = y.size();
  V k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), y1(n), err(n);
  V r1(n), r2(n), r3(n), r4(n), r5(n), yd(n);

  auto err_norm = [&](const V& e, const V& ya, const V& yb) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(ya[i]), std::abs(yb[i]));
      const double q = std::abs(e[i]) / sc;
      s += q * q;
    }
    return n > 0 ? std::sqrt(s / static_cast<double>(n)) : 0.0;
  };

  double t = t0;
  f(t, y, k1);
  ++st.rhs_evals;

  const double span = t1 - t0;
  const double h_max = opt.h_max > 0.0 ? std::min(opt.h_max, span) : span;
  double h = opt.h_init;
  if (!(h > 0.0)) {
    // Hairer's starting-step heuristic.
    double d0 = 0.0, d1n = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = opt.atol + opt.rtol * std::abs(y[i]);
      d0 += std::norm(y[i]) / (sc * sc);
      d1n += std::norm(k1[i]) / (sc * sc);
    }
    d0 = std::sqrt(d0 / std::max<Eigen::Index>(n, 1));
    d1n = std::sqrt(d1n / std::max<Eigen::Index>(n, 1));
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h0 = std::min(h0, h_max);
    yt = y + h0 * k1;
    f(t + h0, yt, k2);
    ++st.rhs_evals;
    double d2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = opt.atol + opt.rtol * std::abs(y[i]);
      d2 += std::norm(k2[i] - k1[i]) / (sc * sc);
    }
    d2 = std::sqrt(d2 / std::max<Eigen::Index>(n, 1)) / h0;
    const double dm = std::max(d1n, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, h_max});
  }

  double err_old = 1e-4;
  bool last_rejected = false;
  while (t < t1) {
    if (st.accepted + st.rejected >= opt.max_steps) {
      throw IntegrationError("step budget exhausted at t = " + std::to_string(t) + " ns");
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      throw IntegrationError("step size underflow at t = " + std::to_string(t) + " ns");
    }
    bool final_step = false;
    if (t + h >= t1 || t + 1.01 * h >= t1) {
      h = t1 - t;
      final_step = true;
    }

    yt = y + h * (a21 * k1);
    f(t + c2 * h, yt, k2);
    yt = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, yt, k3);
    yt = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, yt, k4);
    yt = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, yt, k5);
    yt = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    const double t_new = final_step ? t1 : t + h;
    f(t_new, yt, k6);
    y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t_new, y1, k7);
    st.rhs_evals += 6;
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = err_norm(err, y, y1);

    if (!std::isfinite(en)) {
      h *= 0.1;
      ++st.rejected;
      last_rejected = true;
      continue;
    }

    if (en <= 1.0) {
      // Dense output coefficients for this step.
      const bool need_dense = next_out < outputs.size() && outputs[next_out] <= t_new;
      if (need_dense) {
        yd = y1 - y;
        r1 = y;
        r2 = yd;
        r3 = h * k1 - yd;
        r4 = yd - h * k7 - r3;
        r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (next_out < outputs.size() && outputs[next_out] <= t_new) {
          const double to = outputs[next_out];
          if (to == t_new) {
            emit(to, std::as_const(y1));
          } else {
            const double th = (to - t) / h;
            const double th1 = 1.0 - th;
            yt = r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
            emit(to, std::as_const(yt));
          }
          ++next_out;
        }
      }
      ++st.accepted;
      y.swap(y1);
      k1.swap(k7);
      t = t_new;
      double fac = std::pow(std::max(en, 1e-10), 0.2 - 0.04 * 0.75) / std::pow(err_old, 0.04);
      fac = std::clamp(fac / 0.9, 0.1, 5.0);
      double h_new = h / fac;
      if (last_rejected) h_new = std::min(h_new, h);
      err_old = std::max(en, 1e-4);
      last_rejected = false;
      if (!final_step) h = std::min(h_new, h_max);
      else h = h_new;
    } else {
      const double fac = std::clamp(std::pow(en, 0.2) / 0.9, 1.0, 5.0);
      h /= fac;
      ++st.rejected;
      last_rejected = true;
    }
  }
  if (h_hint) *h_hint = h;
  return st;
}

}  // namespace heomcal::ode
