#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace regimeswitch {

// Objective to minimize. Writes the gradient when `grad` is non-null and
// returns +inf for points where the objective cannot be evaluated.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimizeOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // on the projected gradient, l-infinity
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct OptimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

// Projected BFGS with Armijo backtracking on a box.
OptimizeResult minimize_box(const Objective& f, const Eigen::VectorXd& x0,
                            const OptimizeOptions& options);

}  // namespace regimeswitch
