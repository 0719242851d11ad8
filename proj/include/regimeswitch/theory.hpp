#pragma once

#include <vector>

#include <Eigen/Dense>

#include "regimeswitch/chain.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/model.hpp"

namespace regimeswitch {

enum class ThetaMode { fixed, grid };

// Minorization coefficient of one block. `window` holds the s conditioning
// lags followed by the p - 1 observations inside the block, where p is the
// chain's minorization order. Infima and suprema of the density product run
// over states in the stationary support.
double omega_window(const ModelSpec& spec, const Theta& theta, const Eigen::VectorXd& window);
// Same over a finite grid of parameter values: sigma_- and the density
// infimum are minimized and sigma_+ and the supremum maximized over the grid,
// with the largest minorization order of the grid.
double omega_window(const ModelSpec& spec, const std::vector<Theta>& grid,
                    const Eigen::VectorXd& window);

struct OmegaSeries {
  std::vector<double> values;  // one per block start along the series
  int order = 1;
  ThetaMode mode = ThetaMode::fixed;
};

OmegaSeries omega_series(const ModelSpec& spec, const Theta& theta, const SeriesData& data);
OmegaSeries omega_series(const ModelSpec& spec, const std::vector<Theta>& grid,
                         const SeriesData& data);

// Row t holds P(X_{t+1} | X_0 ~ init, Y_1..Y_{t+1}).
RowMatrix conditional_filter_exact(const ModelSpec& spec, const Theta& theta,
                                   const SeriesData& data, const InitialCondition& init);

// Distribution of X_steps (steps transitions after the initial state) given
// X_0 = x for each x weighted by mu, conditioning on the first `horizon`
// observations (horizon >= steps).
Eigen::VectorXd mixed_conditional(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                                  const Eigen::VectorXd& mu, int steps, int horizon);

double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct MixingCheck {
  double tv_distance = 0.0;
  double bound = 1.0;
  double margin = 1.0;
  bool passed = true;
  std::vector<double> omegas;  // one per complete block
};

// Time -m is the initial state and the first scored observation is at time
// -m + 1; k ranges over [-m, -m + n]. `horizon` is the number of observations
// conditioned on (default: all of them).
MixingCheck check_mixing_bound(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                               int k, int m, const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2,
                               int horizon = -1);

struct ForgettingPoint {
  int k = 0;
  double tv_distance = 0.0;
  double bound = 1.0;
};

struct ForgettingCurve {
  std::vector<ForgettingPoint> points;
  bool bound_holds = true;
  bool monotone = true;  // tv non-increasing in k
};

ForgettingCurve forgetting_curve(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                                 int m, const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2);

}  // namespace regimeswitch
