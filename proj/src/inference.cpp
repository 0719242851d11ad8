#include "regimeswitch/inference.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "regimeswitch/chain.hpp"
#include "regimeswitch/errors.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/parallel.hpp"

namespace regimeswitch {

namespace {

const double kEps = std::numeric_limits<double>::epsilon();

double grad_step(double x) { return std::cbrt(kEps) * (1.0 + std::abs(x)); }
double hess_step(double x) { return std::pow(kEps, 0.25) * (1.0 + std::abs(x)); }

Eigen::VectorXd obs_loglik_at(const ModelSpec& spec, const Eigen::VectorXd& v,
                              const SeriesData& data, const InitialCondition& init) {
  const Theta th = from_unconstrained(spec, v);
  return forward_filter(expand(spec, th), log_density_matrix(spec, th, data), init).obs_loglik;
}

double total_at(const ModelSpec& spec, const Eigen::VectorXd& v, const SeriesData& data,
                const InitialCondition& init) {
  const Theta th = from_unconstrained(spec, v);
  return forward_filter(expand(spec, th), log_density_matrix(spec, th, data), init).total;
}

// n x q per-observation scores in unconstrained coordinates.
Eigen::MatrixXd per_obs_scores_v(const ModelSpec& spec, const Eigen::VectorXd& v0,
                                 const SeriesData& data, const InitialCondition& init) {
  const int q = static_cast<int>(v0.size());
  Eigen::MatrixXd out(data.observations(), q);
  parallel_for(q, [&](std::size_t i) {
    const double h = grad_step(v0[i]);
    Eigen::VectorXd vp = v0, vm = v0;
    vp[i] += h;
    vm[i] -= h;
    out.col(i) = (obs_loglik_at(spec, vp, data, init) - obs_loglik_at(spec, vm, data, init)) / (2.0 * h);
  });
  return out;
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

void finish(CovarianceEstimate& est, const ModelSpec& spec, const Eigen::VectorXd& v) {
  const Eigen::MatrixXd jac = transform_jacobian(spec, v);
  const Eigen::MatrixXd jinv = jac.inverse();
  est.information_unconstrained = symmetrize(est.information_unconstrained);
  est.information = symmetrize(jinv.transpose() * est.information_unconstrained * jinv);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(est.information);
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double lo = ev.cwiseAbs().minCoeff();
  const double hi = ev.cwiseAbs().maxCoeff();
  est.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (est.kind == "hessian" && ev.minCoeff() < 1e-10) {
    std::ostringstream msg;
    msg << "negative Hessian is not positive definite; eigenvalues:";
    for (Eigen::Index i = 0; i < ev.size(); ++i) msg << ' ' << ev[i];
    throw NonPositiveDefiniteError(msg.str());
  }
  if (!(est.condition_number <= 1e12))
    throw SingularInformationError("information matrix condition number " +
                                   std::to_string(est.condition_number) + " exceeds 1e12");
  // cov = J I_v^{-1} J' / n, identical to I^{-1} / n in reported coordinates.
  const Eigen::MatrixXd inv_v = est.information_unconstrained.ldlt().solve(
      Eigen::MatrixXd::Identity(v.size(), v.size()));
  est.cov = symmetrize(jac * inv_v * jac.transpose()) / est.observations;
  est.se = est.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

Eigen::VectorXd to_reported_gradient(const ModelSpec& spec, const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& grad_v) {
  const Eigen::MatrixXd jac = transform_jacobian(spec, v);
  return jac.transpose().partialPivLu().solve(grad_v);
}

Eigen::VectorXd louis_gradient(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                               const InitialCondition& init, bool xi_logits, double* loglik) {
  const ExpandedChain chain = expand(spec, theta);
  const SmoothOutput sm =
      forward_backward(chain, log_density_matrix(spec, theta, data), init, false);
  if (loglik) *loglik = sm.forward.total;
  const int qd = spec.density_count();
  const int q = spec.parameter_count();
  const int extra = xi_logits ? spec.states() - 1 : 0;
  Eigen::VectorXd grad(q + extra);

  const Eigen::VectorXd gd = weighted_density_gradient(spec, theta, data, sm.marginal);
  const Eigen::VectorXd v = to_unconstrained(spec, theta);
  const Eigen::MatrixXd jac = transform_jacobian(spec, v);
  for (int i = 0; i < qd; ++i) grad[i] = gd[i] * jac(i, i);

  const auto& counts = sm.transition_counts;
  int k = qd;
  for (const auto& e : spec.free_transitions())
    grad[k++] = counts(e.row, e.col) - counts.row(e.row).sum() * theta.transition(e.row, e.col);

  if (xi_logits) {
    const auto* dist = std::get_if<Distribution>(&init);
    if (!dist) throw InvalidArgument("xi gradient requires a distribution initial condition");
    for (int j = 0; j < extra; ++j) grad[q + j] = sm.initial[j] - dist->xi[j];
  }
  return grad;
}

ScoreReport score_louis(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                        const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  ScoreReport out;
  out.method = ScoreMethod::louis;
  out.total_unconstrained = louis_gradient(spec, theta, data, init);
  out.total = to_reported_gradient(spec, to_unconstrained(spec, theta), out.total_unconstrained);
  return out;
}

ScoreReport score_fd(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                     const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  const Eigen::VectorXd v = to_unconstrained(spec, theta);
  const Eigen::MatrixXd pv = per_obs_scores_v(spec, v, data, init);
  const Eigen::MatrixXd jac = transform_jacobian(spec, v);
  ScoreReport out;
  out.method = ScoreMethod::finite_difference;
  out.total_unconstrained = pv.colwise().sum().transpose();
  // Row-wise s_theta' = s_v' J^{-1}.
  out.per_obs = jac.transpose().partialPivLu().solve(pv.transpose()).transpose();
  out.total = out.per_obs.colwise().sum().transpose();
  return out;
}

CovarianceEstimate opg(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                       const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  const Eigen::VectorXd v = to_unconstrained(spec, theta);
  const Eigen::MatrixXd pv = per_obs_scores_v(spec, v, data, init);
  CovarianceEstimate est;
  est.kind = "opg";
  est.observations = data.observations();
  est.information_unconstrained = pv.transpose() * pv / static_cast<double>(est.observations);
  finish(est, spec, v);
  return est;
}

Eigen::MatrixXd loglik_hessian_unconstrained(const ModelSpec& spec, const Theta& theta,
                                             const SeriesData& data,
                                             const InitialCondition& init) {
  const Eigen::VectorXd v = to_unconstrained(spec, theta);
  return central_hessian([&](const Eigen::VectorXd& x) { return total_at(spec, x, data, init); }, v);
}

CovarianceEstimate hessian_fd(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                              const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  const Eigen::VectorXd v = to_unconstrained(spec, theta);
  CovarianceEstimate est;
  est.kind = "hessian";
  est.observations = data.observations();
  est.information_unconstrained =
      -loglik_hessian_unconstrained(spec, theta, data, init) / static_cast<double>(est.observations);
  finish(est, spec, v);
  return est;
}

Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  parallel_for(x.size(), [&](std::size_t i) {
    const double h = grad_step(x[i]);
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  });
  return g;
}

Eigen::MatrixXd central_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& x) {
  const Eigen::Index q = x.size();
  Eigen::VectorXd h(q);
  for (Eigen::Index i = 0; i < q; ++i) h[i] = hess_step(x[i]);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) pairs.emplace_back(i, j);
  const double f0 = f(x);
  Eigen::MatrixXd hess(q, q);
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    auto at = [&](double si, double sj) {
      Eigen::VectorXd z = x;
      z[i] += si * h[i];
      z[j] += sj * h[j];
      return f(z);
    };
    double value;
    if (i == j) {
      Eigen::VectorXd zp = x, zm = x;
      zp[i] += h[i];
      zm[i] -= h[i];
      value = (f(zp) - 2.0 * f0 + f(zm)) / (h[i] * h[i]);
    } else {
      value = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
    }
    hess(i, j) = value;
    hess(j, i) = value;
  });
  return hess;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), p);
}

std::vector<Interval> confidence_intervals(const std::vector<std::string>& names,
                                           const Eigen::VectorXd& estimate,
                                           const CovarianceEstimate& cov, double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  if (static_cast<Eigen::Index>(names.size()) != estimate.size() || cov.se.size() != estimate.size())
    throw DimensionError("names, estimates and standard errors must align");
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::vector<Interval> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    Interval iv;
    iv.name = names[i];
    iv.estimate = estimate[i];
    iv.se = cov.se[i];
    iv.lower = iv.estimate - z * iv.se;
    iv.upper = iv.estimate + z * iv.se;
    iv.degenerate = iv.se == 0.0;
    out.push_back(iv);
  }
  return out;
}

LouisHessian louis_hessian_small(const ModelSpec& spec, const Theta& theta,
                                 const SeriesData& data, const InitialCondition& init) {
  validate(spec, theta);
  validate(spec, data);
  validate(spec, init);
  const ExpandedChain chain = expand(spec, theta);
  const int n = data.observations();
  const int ns = chain.states;
  const int m = chain.regimes;
  const int qd = spec.density_count();
  const int q = spec.parameter_count();

  Eigen::VectorXd prior = Eigen::VectorXd::Zero(ns);
  if (const auto* pm = std::get_if<PointMass>(&init))
    prior[pm->state] = 1.0;
  else
    prior = std::get<Distribution>(init).xi;
  int starts = 0;
  for (int s = 0; s < ns; ++s) starts += prior[s] > 0.0 ? 1 : 0;
  double bound = starts;
  for (int t = 0; t < n; ++t) bound *= m;
  if (bound > 1e7) throw ScaleError("path enumeration would exceed 1e7 paths");

  const Eigen::VectorXd v0 = to_unconstrained(spec, theta);
  auto ldm = [&](const Eigen::VectorXd& v) {
    return log_density_matrix(spec, from_unconstrained(spec, v), data);
  };
  const RowMatrix l0 = ldm(v0);

  // Per-cell first and second derivatives of log g in the density coordinates.
  std::vector<RowMatrix> dg(qd);
  std::vector<std::vector<RowMatrix>> d2g(qd, std::vector<RowMatrix>(qd));
  for (int i = 0; i < qd; ++i) {
    const double hg = grad_step(v0[i]);
    Eigen::VectorXd vp = v0, vm = v0;
    vp[i] += hg;
    vm[i] -= hg;
    dg[i] = (ldm(vp) - ldm(vm)) / (2.0 * hg);
    const double hi = hess_step(v0[i]);
    vp = v0;
    vm = v0;
    vp[i] += hi;
    vm[i] -= hi;
    d2g[i][i] = (ldm(vp) - 2.0 * l0 + ldm(vm)) / (hi * hi);
    for (int j = 0; j < i; ++j) {
      const double hj = hess_step(v0[j]);
      auto at = [&](double si, double sj) {
        Eigen::VectorXd z = v0;
        z[i] += si * hi;
        z[j] += sj * hj;
        return ldm(z);
      };
      d2g[i][j] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
      d2g[j][i] = d2g[i][j];
    }
  }

  // Transition logit derivatives: index of each free entry by (row, col).
  Eigen::MatrixXi slot = Eigen::MatrixXi::Constant(m, m, -1);
  {
    int k = qd;
    for (const auto& e : spec.free_transitions()) slot(e.row, e.col) = k++;
  }
  const Eigen::MatrixXd& P = theta.transition;

  const double log_total = forward_filter(chain, l0, init).total;

  LouisHessian out;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd sh = Eigen::MatrixXd::Zero(q, q);

  std::vector<Eigen::VectorXd> g(n + 1, Eigen::VectorXd::Zero(q));
  std::vector<Eigen::MatrixXd> H(n + 1, Eigen::MatrixXd::Zero(q, q));
  std::vector<double> lw(n + 1, 0.0);

  std::function<void(int, int)> descend = [&](int depth, int state) {
    if (depth == n) {
      const double w = std::exp(lw[n] - log_total);
      s1 += w * g[n];
      s2 += w * g[n] * g[n].transpose();
      sh += w * H[n];
      ++out.paths;
      return;
    }
    const int cur = chain.current_regime(state);
    for (int j = 0; j < m; ++j) {
      const double pij = P(cur, j);
      if (pij <= 0.0) continue;
      const int next = chain.successor(state, j);
      const double lg = l0(depth, next);
      if (!std::isfinite(lg)) continue;
      lw[depth + 1] = lw[depth] + std::log(pij) + lg;
      Eigen::VectorXd& gn = g[depth + 1];
      Eigen::MatrixXd& hn = H[depth + 1];
      gn = g[depth];
      hn = H[depth];
      for (int a = 0; a < qd; ++a) {
        gn[a] += dg[a](depth, next);
        for (int b = 0; b < qd; ++b) hn(a, b) += d2g[a][b](depth, next);
      }
      for (int k = 0; k < m; ++k) {
        const int ik = slot(cur, k);
        if (ik < 0) continue;
        gn[ik] += (j == k ? 1.0 : 0.0) - P(cur, k);
        for (int l = 0; l < m; ++l) {
          const int il = slot(cur, l);
          if (il < 0) continue;
          hn(ik, il) -= P(cur, k) * ((k == l ? 1.0 : 0.0) - P(cur, l));
        }
      }
      descend(depth + 1, next);
    }
  };

  for (int s = 0; s < ns; ++s) {
    if (prior[s] <= 0.0) continue;
    lw[0] = std::log(prior[s]);
    g[0].setZero();
    H[0].setZero();
    descend(0, s);
  }
  out.expected = sh;
  out.variance = s2 - s1 * s1.transpose();
  out.hessian = out.expected + out.variance;
  return out;
}

}  // namespace regimeswitch
