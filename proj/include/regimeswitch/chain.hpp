#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "regimeswitch/model.hpp"

namespace regimeswitch {

// Markov chain on the expanded state X_k = (r_k, r_{k-1}, ..., r_{k-p+1}).
// State indices are lexicographic in that tuple with the current regime as the
// most significant base-M digit. States unreachable under a mask are kept.
struct ExpandedChain {
  int regimes = 0;
  int memory = 1;
  int states = 0;
  Eigen::MatrixXd base;        // M x M regime transition matrix
  Eigen::MatrixXd transition;  // states x states

  // State reached from `state` when the next regime is `regime`.
  int successor(int state, int regime) const {
    return regime * block() + state / regimes;
  }
  // State that moves to `state`, given the regime dropped off the tail.
  int predecessor(int state, int dropped) const {
    return (state % block()) * regimes + dropped;
  }
  int current_regime(int state) const { return state / block(); }
  int block() const { return states / regimes; }

  std::vector<int> tuple(int state) const;
  int index(std::span<const int> tuple) const;
};

ExpandedChain expand(const Eigen::MatrixXd& base, int memory);
ExpandedChain expand(const Eigen::MatrixXd& base, const TransitionMask& allowed, int memory);
ExpandedChain expand(const ModelSpec& spec, const Theta& theta);

// Unique invariant distribution; throws ReducibleChainError when the unit
// eigenvalue is not simple.
Eigen::VectorXd stationary(const ExpandedChain& chain);

// r-step kernel by repeated multiplication.
Eigen::MatrixXd kernel_power(const ExpandedChain& chain, int steps);

struct MinorizationConstants {
  int order = 0;  // smallest r with every r-step probability on the support positive
  double sigma_minus = 0.0;
  double sigma_plus = 0.0;
  std::vector<int> support;  // states carrying stationary mass
};

MinorizationConstants minorization(const ExpandedChain& chain);

}  // namespace regimeswitch
