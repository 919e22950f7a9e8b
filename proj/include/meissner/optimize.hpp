#pragma once

#include <Eigen/Dense>

#include <functional>

namespace meissner {

using VectorX = Eigen::VectorXd;
using MatrixX = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Nelder-Mead simplex minimization

struct NelderMeadOptions {
  double initial_step = 1e-5;
  double x_tol = 1e-9;    // simplex diameter
  double f_tol = 1e-24;   // spread of vertex values
  // Below this diameter the simplex is treated as converged even if f_tol is
  // not met; objective noise then dominates the vertex spread.
  double stagnation_diameter = 1e-11;
  int max_evaluations = 20000;
};

struct NelderMeadResult {
  VectorX x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const VectorX&)>& f, const VectorX& x0,
                             const NelderMeadOptions& options = {});

// ---------------------------------------------------------------------------
// Levenberg-Marquardt nonlinear least squares

struct LeastSquaresProblem {
  Eigen::Index n_residuals = 0;
  std::function<void(const VectorX& params, VectorX& residuals)> residuals;
  // Optional analytic Jacobian (n_residuals x n_params). Central differences
  // are used when empty.
  std::function<void(const VectorX& params, MatrixX& jacobian)> jacobian;
};

struct LevenbergMarquardtOptions {
  int max_iterations = 200;
  double rel_cost_tol = 1e-10;
  double initial_lambda = 1e-3;
  // Absolute finite-difference step per parameter; zero entries fall back to
  // 1e-7 * max(|p|, 1e-8).
  VectorX fd_step;
};

struct LeastSquaresResult {
  VectorX params;
  VectorX std_errors;    // sqrt(diag(covariance))
  MatrixX covariance;    // s^2 (J^T J)^-1 with s^2 = sum(r^2) / (n - p)
  VectorX residuals;
  double cost = 0.0;     // 0.5 * sum(r^2)
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton with Marquardt diagonal scaling. Stops when an accepted
// step changes the cost by less than rel_cost_tol relative, when the damping
// saturates (no further descent possible), or after max_iterations; the last
// case leaves `converged` false.
LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem, const VectorX& p0,
                                       const LevenbergMarquardtOptions& options = {});

}  // namespace meissner
