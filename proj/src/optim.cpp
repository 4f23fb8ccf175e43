#include "heomcal/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace heomcal::optim {

namespace {

Eigen::VectorXd project(Eigen::VectorXd x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

bool finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

void numeric_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x, const Eigen::VectorXd& r0,
                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double step,
                      Eigen::MatrixXd& jac) {
  const Eigen::Index n = x.size();
  jac.resize(r0.size(), n);
  Eigen::VectorXd xp = x;
  Eigen::VectorXd rp(r0.size());
  Eigen::VectorXd rm(r0.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = step * std::max(1.0, std::abs(x[j]));
    const bool up_ok = x[j] + h <= upper[j];
    const bool down_ok = x[j] - h >= lower[j];
    if (up_ok && down_ok) {
      xp[j] = x[j] + h;
      residual(xp, rp);
      xp[j] = x[j] - h;
      residual(xp, rm);
      jac.col(j) = (rp - rm) / (2.0 * h);
    } else if (up_ok) {
      xp[j] = x[j] + h;
      residual(xp, rp);
      jac.col(j) = (rp - r0) / h;
    } else {
      xp[j] = x[j] - h;
      residual(xp, rm);
      jac.col(j) = (r0 - rm) / h;
    }
    xp[j] = x[j];
  }
}

LmResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian, Eigen::VectorXd x0,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const LmOptions& opt) {
  LmResult out;
  Eigen::VectorXd x = project(std::move(x0), lower, upper);
  Eigen::VectorXd r;
  residual(x, r);
  ++out.evaluations;
  if (!finite(r)) {
    out.x = x;
    out.cost = std::numeric_limits<double>::infinity();
    out.reason = "non-finite residual at start";
    return out;
  }
  double cost = 0.5 * r.squaredNorm();
  const Eigen::Index n = x.size();

  Eigen::MatrixXd jac;
  auto eval_jac = [&] {
    if (jacobian) {
      jacobian(x, jac);
    } else {
      numeric_jacobian(residual, x, r, lower, upper, opt.fd_step, jac);
      out.evaluations += static_cast<int>(2 * n);
    }
  };
  eval_jac();

  double lambda = opt.initial_lambda;
  double nu = 2.0;
  Eigen::VectorXd r_new;
  for (int it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-30);

    // Projected gradient: components pushing against an active bound vanish.
    Eigen::VectorXd pg = grad;
    for (Eigen::Index j = 0; j < n; ++j) {
      if ((x[j] <= lower[j] && grad[j] > 0.0) || (x[j] >= upper[j] && grad[j] < 0.0)) pg[j] = 0.0;
    }
    if ((pg.array().abs() / diag.array().sqrt()).maxCoeff() <= opt.gtol * std::max(1.0, std::sqrt(2.0 * cost))) {
      out.converged = true;
      out.reason = "gradient";
      break;
    }

    bool accepted = false;
    for (int inner = 0; inner < 40 && !accepted; ++inner) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * diag;
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd x_new = project(x + step, lower, upper);
      const Eigen::VectorXd actual_step = x_new - x;
      if (actual_step.norm() <= opt.xtol * (x.norm() + opt.xtol)) {
        out.converged = true;
        out.reason = "step";
        break;
      }
      residual(x_new, r_new);
      ++out.evaluations;
      const double cost_new = finite(r_new) ? 0.5 * r_new.squaredNorm() : std::numeric_limits<double>::infinity();
      const double predicted =
          -(grad.dot(actual_step) + 0.5 * actual_step.dot(jtj * actual_step));
      const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
      if (cost_new < cost && rho > 0.0) {
        const double rel = (cost - cost_new) / std::max(cost, 1e-300);
        x = x_new;
        r = r_new;
        cost = cost_new;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        if (rel <= opt.ftol || cost <= 1e-300) {
          out.converged = true;
          out.reason = "cost";
        }
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (!std::isfinite(lambda) || lambda > 1e30) break;
      }
    }
    if (out.converged) break;
    if (!accepted) {
      // No descent direction left at machine precision.
      out.converged = true;
      out.reason = "stalled";
      break;
    }
    eval_jac();
  }
  if (!out.converged && out.reason.empty()) out.reason = "max_iterations";
  out.x = x;
  out.cost = cost;
  return out;
}

}  // namespace heomcal::optim
