#include "cavlock/analysis/least_squares.hpp"

#include "cavlock/error.hpp"

#include <cmath>
#include <limits>

namespace cavlock::analysis {

double LeastSquaresResult::standard_error(Eigen::Index i) const {
  if (covariance.rows() <= i) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(std::max(0.0, covariance(i, i)));
}

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& p, Eigen::Index m) {
  Eigen::MatrixXd J(m, p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = 1e-6 * std::max(std::abs(p[j]), 1e-8);
    Eigen::VectorXd hi = p, lo = p;
    hi[j] += h;
    lo[j] -= h;
    J.col(j) = (f(hi) - f(lo)) / (hi[j] - lo[j]);
  }
  return J;
}

} // namespace

LeastSquaresResult levenberg_marquardt(const ResidualFn& residuals, Eigen::VectorXd p,
                                       const LeastSquaresOptions& options, const JacobianFn& jacobian) {
  const Eigen::Index n = p.size();
  Eigen::VectorXd r = residuals(p);
  const Eigen::Index m = r.size();
  if (m < n) throw AnalysisError("least squares: fewer residuals (" + std::to_string(m) + ") than parameters (" +
                                 std::to_string(n) + ")");
  if (!r.allFinite()) throw AnalysisError("least squares: non-finite residuals at the initial guess");

  auto jac = [&](const Eigen::VectorXd& x) { return jacobian ? jacobian(x) : numeric_jacobian(residuals, x, m); };

  LeastSquaresResult out;
  double cost = r.squaredNorm();
  double lambda = options.initial_lambda;
  Eigen::MatrixXd J = jac(p);
  out.status = "max_iterations";

  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() == 0.0) {
      out.converged = true;
      out.status = "zero_gradient";
      break;
    }
    Eigen::VectorXd diag = JtJ.diagonal();
    for (Eigen::Index i = 0; i < n; ++i)
      if (diag[i] <= 0.0) diag[i] = 1e-30;

    bool accepted = false;
    double new_cost = cost;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * diag;
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      const Eigen::VectorXd trial = p + step;
      const Eigen::VectorXd rt = residuals(trial);
      const double ct = rt.allFinite() ? rt.squaredNorm() : std::numeric_limits<double>::infinity();
      if (ct < cost) {
        p = trial;
        r = rt;
        new_cost = ct;
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      // No downhill step at any damping: a (local) minimum to rounding.
      out.converged = true;
      out.status = "no_improvement";
      break;
    }
    const double change = (cost - new_cost) / std::max(cost, std::numeric_limits<double>::min());
    cost = new_cost;
    J = jac(p);
    if (cost <= options.absolute_tolerance) {
      out.converged = true;
      out.status = "absolute_tolerance";
      break;
    }
    if (change < options.relative_tolerance) {
      out.converged = true;
      out.status = "relative_tolerance";
      break;
    }
  }

  out.params = p;
  out.residual_norm = std::sqrt(cost);
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(JtJ);
  out.covariance = cod.pseudoInverse() * (cost / dof);
  return out;
}

} // namespace cavlock::analysis
