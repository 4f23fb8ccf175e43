#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace heomcal::optim {

using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r)>;
using JacobianFn = std::function<void(const Eigen::VectorXd& x, Eigen::MatrixXd& jac)>;

struct LmOptions {
  int max_iterations = 400;
  double ftol = 1e-14;  // relative reduction of the cost
  double xtol = 1e-13;  // relative step size
  double gtol = 1e-14;  // scaled gradient inf-norm
  double initial_lambda = 1e-3;
  double fd_step = 1e-7;
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = 0.0;  // 0.5 * ||r||^2
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;
};

/// Box-constrained Levenberg-Marquardt with Marquardt diagonal scaling.
/// Steps are projected onto [lower, upper]; the damping parameter acts as an
/// inverse trust-region radius and is updated from the gain ratio. When
/// `jacobian` is empty a central-difference Jacobian is used.
LmResult levenberg_marquardt(const ResidualFn& residual, const JacobianFn& jacobian, Eigen::VectorXd x0,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const LmOptions& options = {});

/// Finite-difference Jacobian that respects the bounds (one-sided at a face).
void numeric_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x, const Eigen::VectorXd& r0,
                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double step,
                      Eigen::MatrixXd& jac);

}  // namespace heomcal::optim
