#include "regimeswitch/optimize.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "regimeswitch/errors.hpp"

namespace regimeswitch {

namespace {

Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

OptimizeResult minimize_box(const Objective& f, const Eigen::VectorXd& x0,
                            const OptimizeOptions& options) {
  const Eigen::Index n = x0.size();
  const double inf = std::numeric_limits<double>::infinity();
  const Eigen::VectorXd lo = options.lower.size() ? options.lower : Eigen::VectorXd::Constant(n, -inf);
  const Eigen::VectorXd hi = options.upper.size() ? options.upper : Eigen::VectorXd::Constant(n, inf);
  if (lo.size() != n || hi.size() != n) throw DimensionError("bounds must match the start point");

  OptimizeResult res;
  res.x = clamp(x0, lo, hi);
  res.gradient = Eigen::VectorXd::Zero(n);
  res.value = f(res.x, &res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.value)) {
    res.message = "objective is not finite at the start point";
    return res;
  }

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(n, n);
  bool identity = true;
  Eigen::VectorXd grad_new(n);
  std::vector<Eigen::Index> free;

  auto projected_norm = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    free.clear();
    double norm = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool pinned = (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0);
      if (pinned) continue;
      free.push_back(i);
      norm = std::max(norm, std::abs(g[i]));
    }
    return norm;
  };

  int small_steps = 0;
  int resets = 0;
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    res.projected_gradient_norm = projected_norm(res.x, res.gradient);
    if (res.projected_gradient_norm <= options.gradient_tolerance) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    const Eigen::Index k = static_cast<Eigen::Index>(free.size());
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd gf(k);
    for (Eigen::Index a = 0; a < k; ++a) gf[a] = res.gradient[free[a]];
    Eigen::MatrixXd hf(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) hf(a, b) = hinv(free[a], free[b]);
    Eigen::VectorXd df = -hf * gf;
    double slope = gf.dot(df);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      identity = true;
      df = -gf;
      slope = -gf.squaredNorm();
    }
    for (Eigen::Index a = 0; a < k; ++a) d[free[a]] = df[a];

    double alpha = std::min(1.0, 10.0 / d.cwiseAbs().maxCoeff());
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = inf;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = clamp(res.x + alpha * d, lo, hi);
      const Eigen::VectorXd step = x_new - res.x;
      if (step.cwiseAbs().maxCoeff() == 0.0) break;
      f_new = f(x_new, &grad_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * res.gradient.dot(step)) {
        accepted = true;
        break;
      }
      alpha *= std::isfinite(f_new) ? 0.5 : 0.2;
    }

    if (!accepted) {
      if (!identity) {
        hinv.setIdentity();
        identity = true;
        continue;
      }
      // No further progress is possible at working precision.
      res.converged = res.projected_gradient_norm <= 1e-5 * (1.0 + std::abs(res.value));
      res.message = res.converged ? "stalled within the relative gradient tolerance"
                                  : "line search failed";
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = grad_new - res.gradient;
    const double decrease = res.value - f_new;
    res.x = x_new;
    res.value = f_new;
    res.gradient = grad_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity) {
        hinv *= sy / y.squaredNorm();
        identity = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      hinv = left * hinv * left.transpose() + rho * s * s.transpose();
    }

    small_steps = decrease <= 1e-14 * (1.0 + std::abs(res.value)) ? small_steps + 1 : 0;
    if (small_steps >= 5) {
      res.projected_gradient_norm = projected_norm(res.x, res.gradient);
      const bool near = res.projected_gradient_norm <= 1e-5 * (1.0 + std::abs(res.value));
      if (!near && !identity && resets < 3) {
        // stale curvature can freeze progress along nearly flat directions
        hinv.setIdentity();
        identity = true;
        small_steps = 0;
        ++resets;
        continue;
      }
      res.converged = res.projected_gradient_norm <= 1e-5 * (1.0 + std::abs(res.value));
      res.message = res.converged ? "stalled within the relative gradient tolerance"
                                  : "objective stopped decreasing";
      return res;
    }
  }
  res.projected_gradient_norm = projected_norm(res.x, res.gradient);
  res.converged = res.projected_gradient_norm <= options.gradient_tolerance;
  res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

}  // namespace regimeswitch
