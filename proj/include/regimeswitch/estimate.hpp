#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "regimeswitch/inference.hpp"
#include "regimeswitch/model.hpp"

namespace regimeswitch {

struct EstimateXi {};
using InitSpec = std::variant<PointMass, Distribution, EstimateXi>;

// Regime ordering applied after fitting, by mu (mean families) or sigma
// (SWARCH).
enum class LabelOrder { ascending, descending, as_is };

struct FitOptions {
  int n_starts = 10;  // total starts, including the default and extra starts
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  std::uint64_t seed = 0;
  bool estimate_xi = false;  // overrides the init argument of fit
  LabelOrder label_order = LabelOrder::ascending;
  std::vector<Theta> extra_starts;  // tried right after the default start
  bool compute_opg = true;
  bool compute_hessian = true;
};

struct StartSummary {
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

struct FitResult {
  ModelSpec spec{HamiltonAR{}, 1};
  SeriesData data;
  Theta theta_hat;
  double loglik = 0.0;
  double score_norm = 0.0;  // l-infinity norm of the unconstrained score
  std::optional<CovarianceEstimate> opg;
  std::optional<CovarianceEstimate> hessian;
  std::map<std::string, std::string> covariance_errors;  // kind -> error code: message
  std::vector<StartSummary> starts;
  int best_start = -1;
  bool converged = false;
  InitialCondition init_used = PointMass{0};
  bool xi_estimated = false;
  std::vector<std::string> fixed;  // parameters held by profile_refit
  std::vector<std::string> warnings;

  // The preferred covariance: OPG when available, else Hessian.
  const CovarianceEstimate* covariance() const;
};

FitResult fit(const ModelSpec& spec, const SeriesData& data, const InitSpec& init,
              const FitOptions& opts = {});

// Re-optimizes with the named parameters held fixed. Fixing a transition
// entry at 0 turns it into a structural zero; fixing a positive p_ij holds its
// whole row, with the other entries rescaled from the fitted row.
FitResult profile_refit(const FitResult& result, const std::map<std::string, double>& fixed,
                        const FitOptions& opts = {});

std::vector<Interval> confidence_intervals(const FitResult& fit, double level);

// Starting value used as the first start of every fit.
Theta default_start(const ModelSpec& spec, const SeriesData& data);

// Permutation (old -> new label) that orders the regimes, identity when the
// family or mask does not allow relabeling.
std::vector<int> canonical_permutation(const ModelSpec& spec, const Theta& theta, LabelOrder order);

}  // namespace regimeswitch
