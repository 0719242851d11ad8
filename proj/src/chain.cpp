#include "regimeswitch/chain.hpp"

#include <algorithm>
#include <cmath>

#include "regimeswitch/errors.hpp"

namespace regimeswitch {

namespace {

constexpr double kZero = 1e-14;

void check_stochastic(const Eigen::MatrixXd& base) {
  if (base.rows() != base.cols() || base.rows() < 1)
    throw DimensionError("transition matrix must be square and non-empty");
  for (Eigen::Index i = 0; i < base.rows(); ++i) {
    if ((base.row(i).array() < 0.0).any())
      throw DomainError("transition matrix has a negative entry");
    if (std::abs(base.row(i).sum() - 1.0) > 1e-10)
      throw DomainError("transition matrix rows must sum to one");
  }
}

}  // namespace

std::vector<int> ExpandedChain::tuple(int state) const {
  std::vector<int> out(memory);
  for (int l = memory - 1; l >= 0; --l) {
    out[l] = state % regimes;
    state /= regimes;
  }
  return out;
}

int ExpandedChain::index(std::span<const int> tup) const {
  if (static_cast<int>(tup.size()) != memory) throw DimensionError("tuple length must equal p");
  int out = 0;
  for (int r : tup) {
    if (r < 0 || r >= regimes) throw DimensionError("regime index out of range");
    out = out * regimes + r;
  }
  return out;
}

ExpandedChain expand(const Eigen::MatrixXd& base, int memory) {
  check_stochastic(base);
  if (memory < 1) throw InvalidArgument("memory depth must be at least 1");
  ExpandedChain chain;
  chain.regimes = static_cast<int>(base.rows());
  chain.memory = memory;
  long long states = 1;
  for (int l = 0; l < memory; ++l) {
    states *= chain.regimes;
    if (states > 1024) throw ScaleError("expanded chain exceeds 1024 states");
  }
  chain.states = static_cast<int>(states);
  chain.base = base;
  chain.transition = Eigen::MatrixXd::Zero(chain.states, chain.states);
  for (int s = 0; s < chain.states; ++s) {
    const int cur = chain.current_regime(s);
    for (int j = 0; j < chain.regimes; ++j) chain.transition(s, chain.successor(s, j)) = base(cur, j);
  }
  return chain;
}

ExpandedChain expand(const Eigen::MatrixXd& base, const TransitionMask& allowed, int memory) {
  if (allowed.rows() != base.rows() || allowed.cols() != base.cols())
    throw DimensionError("mask shape must match the transition matrix");
  for (Eigen::Index i = 0; i < base.rows(); ++i)
    for (Eigen::Index j = 0; j < base.cols(); ++j)
      if (!allowed(i, j) && base(i, j) != 0.0)
        throw DomainError("masked transition entries must be exactly zero");
  return expand(base, memory);
}

ExpandedChain expand(const ModelSpec& spec, const Theta& theta) {
  return expand(theta.transition, spec.allowed(), spec.memory());
}

Eigen::VectorXd stationary(const ExpandedChain& chain) {
  const int n = chain.states;
  const Eigen::MatrixXd a = chain.transition.transpose() - Eigen::MatrixXd::Identity(n, n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(1e-10);
  if (lu.rank() != n - 1)
    throw ReducibleChainError("unit eigenvalue of the transition matrix is not simple");
  // Replace the balance equations by (T' - I) pi = 0 plus sum(pi) = 1.
  Eigen::MatrixXd sys(n + 1, n);
  sys.topRows(n) = a;
  sys.row(n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs[n] = 1.0;
  Eigen::VectorXd pi = sys.colPivHouseholderQr().solve(rhs);
  for (int i = 0; i < n; ++i)
    if (pi[i] < 0.0 && pi[i] > -1e-12) pi[i] = 0.0;
  if ((pi.array() < 0.0).any())
    throw ReducibleChainError("stationary solve produced negative mass");
  pi /= pi.sum();
  return pi;
}

Eigen::MatrixXd kernel_power(const ExpandedChain& chain, int steps) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(chain.states, chain.states);
  for (int r = 0; r < steps; ++r) out = out * chain.transition;
  return out;
}

MinorizationConstants minorization(const ExpandedChain& chain) {
  Eigen::VectorXd pi;
  try {
    pi = stationary(chain);
  } catch (const ReducibleChainError& e) {
    throw NoMinorizationError(std::string("chain is reducible: ") + e.what());
  }
  MinorizationConstants out;
  for (int s = 0; s < chain.states; ++s)
    if (pi[s] > 1e-12) out.support.push_back(s);
  const int k = static_cast<int>(out.support.size());
  // Wielandt's bound on the exponent of a primitive matrix, or the regime
  // count times the state count, whichever is larger.
  const int bound = std::max(chain.regimes * chain.states, (k - 1) * (k - 1) + 1);

  Eigen::MatrixXd sub(k, k);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) sub(a, b) = chain.transition(out.support[a], out.support[b]);
  Eigen::MatrixXd power = sub;
  for (int r = 1; r <= bound; ++r) {
    if (r > 1) power = power * sub;
    if (power.minCoeff() > kZero) {
      out.order = r;
      out.sigma_minus = power.minCoeff();
      out.sigma_plus = power.maxCoeff();
      return out;
    }
  }
  throw NoMinorizationError("no power of the transition kernel is strictly positive on the support");
}

}  // namespace regimeswitch
