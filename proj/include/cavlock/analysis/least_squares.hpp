#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace cavlock::analysis {

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& params)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd& params)>;

struct LeastSquaresOptions {
  int max_iterations = 200;
  double relative_tolerance = 1e-9; // on the sum of squared residuals
  double absolute_tolerance = 0.0;  // stop once the sum of squares is at or below this
  double initial_lambda = 1e-3;
};

struct LeastSquaresResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance; // s^2 (J^T J)^-1, s^2 = SSR / (m - n)
  double residual_norm = 0.0; // sqrt(SSR)
  int iterations = 0;
  bool converged = false;
  std::string status;

  double standard_error(Eigen::Index i) const;
};

// Levenberg-Marquardt with Marquardt's diagonal scaling. Stops when an
// accepted step changes the sum of squares by less than relative_tolerance
// (relative), or after max_iterations. Without an analytic Jacobian, central
// differences are used.
LeastSquaresResult levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd initial,
                                       const LeastSquaresOptions& options = {},
                                       const JacobianFn& jacobian = nullptr);

} // namespace cavlock::analysis
