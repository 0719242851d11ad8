#include "regimeswitch/filter.hpp"

#include <cmath>
#include <limits>

#include "regimeswitch/errors.hpp"

namespace regimeswitch {

namespace {

// out = T' * prob using the expanded-chain structure (M successors per state).
void propagate(const ExpandedChain& chain, const double* prob, double* out) {
  const int ns = chain.states;
  const int m = chain.regimes;
  const int block = chain.block();
  std::fill(out, out + ns, 0.0);
  for (int s = 0; s < ns; ++s) {
    const double ps = prob[s];
    if (ps == 0.0) continue;
    const int cur = s / block;
    const int tail = s / m;
    for (int j = 0; j < m; ++j) out[j * block + tail] += ps * chain.base(cur, j);
  }
}

Eigen::VectorXd prior_of(const ExpandedChain& chain, const InitialCondition& init) {
  Eigen::VectorXd prior = Eigen::VectorXd::Zero(chain.states);
  if (const auto* pm = std::get_if<PointMass>(&init)) {
    if (pm->state < 0 || pm->state >= chain.states)
      throw DimensionError("initial state index out of range");
    prior[pm->state] = 1.0;
  } else {
    const auto& xi = std::get<Distribution>(init).xi;
    if (xi.size() != chain.states) throw DimensionError("xi must cover every expanded state");
    prior = xi;
  }
  return prior;
}

struct ForwardPass {
  FilterOutput out;
  Eigen::VectorXd shift;       // per-step max log density used for scaling
  Eigen::VectorXd normalizer;  // sum_j pred_j exp(logd_j - shift)
};

ForwardPass run_forward(const ExpandedChain& chain, const RowMatrix& logd,
                        const InitialCondition& init) {
  const int n = static_cast<int>(logd.rows());
  const int ns = chain.states;
  if (logd.cols() != ns) throw DimensionError("log-density matrix must have one column per state");
  ForwardPass fp;
  fp.out.predicted.resize(n, ns);
  fp.out.filtered.resize(n, ns);
  fp.out.obs_loglik.resize(n);
  fp.shift.resize(n);
  fp.normalizer.resize(n);

  Eigen::VectorXd pred = initial_prediction(chain, init);
  double total = 0.0;
  for (int t = 0; t < n; ++t) {
    if (t > 0) propagate(chain, fp.out.filtered.row(t - 1).data(), pred.data());
    fp.out.predicted.row(t) = pred.transpose();
    double top = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < ns; ++s) {
      const double l = logd(t, s);
      if (std::isnan(l)) throw NonFiniteError("log density is NaN at observation " + std::to_string(t + 1));
      if (pred[s] > 0.0 && l > top) top = l;
    }
    if (!std::isfinite(top))
      throw NumericalUnderflowError("observation " + std::to_string(t + 1) +
                                    " has zero likelihood under every reachable state");
    double c = 0.0;
    double* row = fp.out.filtered.row(t).data();
    for (int s = 0; s < ns; ++s) {
      row[s] = pred[s] > 0.0 ? pred[s] * std::exp(logd(t, s) - top) : 0.0;
      c += row[s];
    }
    if (!(c > 0.0) || !std::isfinite(c))
      throw NumericalUnderflowError("normalizer vanished at observation " + std::to_string(t + 1));
    for (int s = 0; s < ns; ++s) row[s] /= c;
    fp.shift[t] = top;
    fp.normalizer[t] = c;
    fp.out.obs_loglik[t] = top + std::log(c);
    total += fp.out.obs_loglik[t];
  }
  fp.out.total = total;
  return fp;
}

}  // namespace

Eigen::VectorXd initial_prediction(const ExpandedChain& chain, const InitialCondition& init) {
  const Eigen::VectorXd prior = prior_of(chain, init);
  Eigen::VectorXd pred(chain.states);
  propagate(chain, prior.data(), pred.data());
  return pred;
}

FilterOutput forward_filter(const ExpandedChain& chain, const RowMatrix& log_density,
                            const InitialCondition& init) {
  return run_forward(chain, log_density, init).out;
}

FilterOutput filter(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                    const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  return forward_filter(expand(spec, theta), log_density_matrix(spec, theta, data), init);
}

double loglik(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
              const InitialCondition& init) {
  return filter(spec, theta, data, init).total;
}

SmoothOutput forward_backward(const ExpandedChain& chain, const RowMatrix& logd,
                              const InitialCondition& init, bool keep_pairwise) {
  ForwardPass fp = run_forward(chain, logd, init);
  const int n = static_cast<int>(logd.rows());
  const int ns = chain.states;
  const int m = chain.regimes;
  const int block = chain.block();

  SmoothOutput out;
  out.marginal.resize(n, ns);
  out.transition_counts = Eigen::MatrixXd::Zero(m, m);
  if (keep_pairwise) out.pairwise.assign(std::max(n - 1, 0), Eigen::MatrixXd::Zero(ns, ns));

  // Scaled backward variables: beta_t(i) = p(Y_{t+1..n} | X_t = i) / prod c.
  Eigen::VectorXd beta = Eigen::VectorXd::Ones(ns);
  Eigen::VectorXd scaled(ns);  // exp(logd_t - shift_t) * beta_t / c_t
  Eigen::VectorXd prev_beta(ns);

  auto pair_step = [&](int t, const double* left, Eigen::MatrixXd* slice) {
    // Pairs (X_{t-1}, X_t), where `left` is the filtered (or prior) row for X_{t-1}.
    for (int j = 0; j < ns; ++j) {
      const double l = logd(t, j);
      scaled[j] = std::isfinite(l) ? std::exp(l - fp.shift[t]) * beta[j] / fp.normalizer[t] : 0.0;
    }
    for (int s = 0; s < ns; ++s) {
      const int cur = s / block;
      const int tail = s / m;
      double acc = 0.0;
      for (int j = 0; j < m; ++j) {
        const int next = j * block + tail;
        const double w = chain.base(cur, j) * scaled[next];
        acc += w;
        if (left[s] > 0.0 && w > 0.0) {
          const double joint = left[s] * w;
          out.transition_counts(cur, j) += joint;
          if (slice) (*slice)(s, next) = joint;
        }
      }
      prev_beta[s] = acc;
    }
  };

  for (int t = n - 1; t >= 0; --t) {
    out.marginal.row(t) = fp.out.filtered.row(t).cwiseProduct(beta.transpose());
    const double norm = out.marginal.row(t).sum();
    out.marginal.row(t) /= norm;
    if (t > 0) {
      pair_step(t, fp.out.filtered.row(t - 1).data(), keep_pairwise ? &out.pairwise[t - 1] : nullptr);
    } else {
      const Eigen::VectorXd prior = prior_of(chain, init);
      pair_step(0, prior.data(), nullptr);
      out.initial = prior.cwiseProduct(prev_beta);
      out.initial /= out.initial.sum();
    }
    beta = prev_beta;
  }
  out.regime_marginal = regime_marginals(chain, out.marginal);
  out.forward = std::move(fp.out);
  return out;
}

SmoothOutput smooth(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                    const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  return forward_backward(expand(spec, theta), log_density_matrix(spec, theta, data), init, true);
}

Eigen::MatrixXd regime_marginals(const ExpandedChain& chain, const RowMatrix& state_probs) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(state_probs.rows(), chain.regimes);
  for (Eigen::Index t = 0; t < state_probs.rows(); ++t)
    for (int s = 0; s < chain.states; ++s) out(t, chain.current_regime(s)) += state_probs(t, s);
  return out;
}

Distribution uniform_over_lags(const ModelSpec& spec, int regime) {
  if (regime < 0 || regime >= spec.regimes()) throw DimensionError("regime index out of range");
  Distribution d;
  d.xi = Eigen::VectorXd::Zero(spec.states());
  int count = 0;
  for (int s = 0; s < spec.states(); ++s)
    if (spec.regime_of(s, 0) == regime) ++count;
  for (int s = 0; s < spec.states(); ++s)
    if (spec.regime_of(s, 0) == regime) d.xi[s] = 1.0 / count;
  return d;
}

}  // namespace regimeswitch
