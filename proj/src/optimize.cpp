#include "meissner/optimize.hpp"

#include "meissner/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace meissner {

NelderMeadResult nelder_mead(const std::function<double(const VectorX&)>& f, const VectorX& x0,
                             const NelderMeadOptions& options) {
  const Eigen::Index n = x0.size();
  std::vector<VectorX> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  int evals = 0;
  auto eval = [&](const VectorX& x) {
    ++evals;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (Eigen::Index i = 0; i < n; ++i) simplex[i + 1](i) += options.initial_step;
  for (Eigen::Index i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  NelderMeadResult out;
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double diameter = 0.0;
    for (const auto& v : simplex) diameter = std::max(diameter, (v - simplex[best]).norm());
    const double spread = values[worst] - values[best];
    if (diameter < options.x_tol &&
        (spread < options.f_tol || diameter < options.stagnation_diameter)) {
      out.converged = std::isfinite(values[best]);
      break;
    }
    if (evals >= options.max_evaluations) break;

    VectorX centroid = VectorX::Zero(n);
    for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(n);

    const VectorX reflected = centroid + (centroid - simplex[worst]);
    const double f_reflected = eval(reflected);
    if (f_reflected < values[best]) {
      const VectorX expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const VectorX contracted = outside ? VectorX(centroid + 0.5 * (reflected - centroid))
                                       : VectorX(centroid + 0.5 * (simplex[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < std::min(f_reflected, values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i) {
      if (i == best) continue;
      simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
      values[i] = eval(simplex[i]);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  out.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  out.value = *best_it;
  out.evaluations = evals;
  return out;
}

namespace {

void numeric_jacobian(const LeastSquaresProblem& problem, const VectorX& p, const VectorX& fd_step,
                      MatrixX& jac) {
  const Eigen::Index m = problem.n_residuals;
  jac.resize(m, p.size());
  VectorX plus(m);
  VectorX minus(m);
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    double h = (fd_step.size() == p.size() && fd_step(j) > 0.0)
                   ? fd_step(j)
                   : 1e-7 * std::max(std::abs(p(j)), 1e-8);
    VectorX q = p;
    q(j) = p(j) + h;
    problem.residuals(q, plus);
    q(j) = p(j) - h;
    problem.residuals(q, minus);
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
}

}  // namespace

LeastSquaresResult levenberg_marquardt(const LeastSquaresProblem& problem, const VectorX& p0,
                                       const LevenbergMarquardtOptions& options) {
  const Eigen::Index m = problem.n_residuals;
  const Eigen::Index n = p0.size();
  if (m < n) throw InvalidArgument("least squares needs at least as many residuals as parameters");

  auto jacobian = [&](const VectorX& p, MatrixX& jac) {
    if (problem.jacobian) {
      jac.resize(m, n);
      problem.jacobian(p, jac);
    } else {
      numeric_jacobian(problem, p, options.fd_step, jac);
    }
  };

  LeastSquaresResult out;
  VectorX p = p0;
  VectorX r(m);
  problem.residuals(p, r);
  double cost = 0.5 * r.squaredNorm();
  if (!std::isfinite(cost)) throw FitError("initial residuals are not finite");

  MatrixX jac;
  double lambda = options.initial_lambda;
  int iter = 0;
  bool converged = false;
  jacobian(p, jac);
  while (iter < options.max_iterations) {
    ++iter;
    const MatrixX jtj = jac.transpose() * jac;
    const VectorX grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() == 0.0) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      MatrixX a = jtj;
      for (Eigen::Index i = 0; i < n; ++i) a(i, i) += lambda * std::max(jtj(i, i), 1e-300);
      const VectorX step = a.ldlt().solve(-grad);
      VectorX trial = p + step;
      VectorX r_trial(m);
      problem.residuals(trial, r_trial);
      const double trial_cost = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double rel_change = (cost - trial_cost) / std::max(cost, 1e-300);
        p = trial;
        r = r_trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel_change < options.rel_cost_tol) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left at working precision.
          converged = true;
          break;
        }
      }
    }
    if (converged) break;
    jacobian(p, jac);
  }

  jacobian(p, jac);
  out.params = p;
  out.residuals = r;
  out.cost = cost;
  out.iterations = iter;
  out.converged = converged;
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = r.squaredNorm() / dof;
  const MatrixX jtj = jac.transpose() * jac;
  Eigen::CompleteOrthogonalDecomposition<MatrixX> cod(jtj);
  out.covariance = s2 * cod.pseudoInverse();
  out.std_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace meissner
