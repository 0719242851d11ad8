#pragma once

#include <vector>

#include <Eigen/Dense>

#include "regimeswitch/chain.hpp"
#include "regimeswitch/model.hpp"

namespace regimeswitch {

struct FilterOutput {
  RowMatrix predicted;  // n x states, P(X_k | Y_1..Y_{k-1})
  RowMatrix filtered;   // n x states, P(X_k | Y_1..Y_k)
  Eigen::VectorXd obs_loglik; // log p(Y_k | Y_1..Y_{k-1})
  double total = 0.0;         // left-to-right sum of obs_loglik
};

struct SmoothOutput {
  RowMatrix marginal;                    // n x states
  std::vector<Eigen::MatrixXd> pairwise; // n-1 slices, P(X_{k-1}=i, X_k=j | all)
  Eigen::MatrixXd regime_marginal;       // n x M
  Eigen::VectorXd initial;               // P(X_0 | all)
  // Expected regime transition counts over all n transitions, including the
  // move from X_0 to X_1.
  Eigen::MatrixXd transition_counts;
  FilterOutput forward;
};

// Initial predicted distribution of X_1 implied by the initial condition.
Eigen::VectorXd initial_prediction(const ExpandedChain& chain, const InitialCondition& init);

// Scaled forward recursion on a precomputed log-density matrix (n x states).
FilterOutput forward_filter(const ExpandedChain& chain, const RowMatrix& log_density,
                            const InitialCondition& init);

FilterOutput filter(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                    const InitialCondition& init);

double loglik(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
              const InitialCondition& init);

// Forward-backward on a precomputed log-density matrix. Pairwise slices are
// only stored when requested.
SmoothOutput forward_backward(const ExpandedChain& chain, const RowMatrix& log_density,
                              const InitialCondition& init, bool keep_pairwise = true);

SmoothOutput smooth(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                    const InitialCondition& init);

// Sum of regime-state probabilities over the lagged coordinates.
Eigen::MatrixXd regime_marginals(const ExpandedChain& chain, const RowMatrix& state_probs);

// Distribution over expanded states uniform over the lagged regimes given the
// current regime at time 0.
Distribution uniform_over_lags(const ModelSpec& spec, int regime);

}  // namespace regimeswitch
