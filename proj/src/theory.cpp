#include "regimeswitch/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "regimeswitch/errors.hpp"

namespace regimeswitch {

namespace {

// log g for the p - 1 block observations of a window, over support states.
void density_extremes(const ModelSpec& spec, const Theta& theta, const Eigen::VectorXd& window,
                      const std::vector<int>& support, double& log_inf, double& log_sup) {
  SeriesData seg;
  seg.y = window;
  seg.w.resize(window.size(), 0);
  seg.presample = spec.lags();
  log_inf = 0.0;
  log_sup = 0.0;
  if (seg.observations() <= 0) return;
  const RowMatrix logd = log_density_matrix(spec, theta, seg);
  for (Eigen::Index t = 0; t < logd.rows(); ++t) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int s : support) {
      lo = std::min(lo, logd(t, s));
      hi = std::max(hi, logd(t, s));
    }
    log_inf += lo;
    log_sup += hi;
  }
}

double combine(double sigma_minus, double sigma_plus, double log_inf, double log_sup) {
  const double w = sigma_minus / sigma_plus * std::exp(2.0 * (log_inf - log_sup));
  return std::clamp(w, 0.0, 1.0);
}

std::vector<int> support_of(const ExpandedChain& chain) {
  return minorization(chain).support;
}

void check_window(const ModelSpec& spec, int order, const Eigen::VectorXd& window) {
  if (window.size() != spec.lags() + order - 1)
    throw DimensionError("omega window needs s + p - 1 = " +
                         std::to_string(spec.lags() + order - 1) + " observations");
}

}  // namespace

double omega_window(const ModelSpec& spec, const Theta& theta, const Eigen::VectorXd& window) {
  validate(spec, theta);
  const ExpandedChain chain = expand(spec, theta);
  const MinorizationConstants mc = minorization(chain);
  check_window(spec, mc.order, window);
  if (mc.order == 1) return mc.sigma_minus / mc.sigma_plus;
  double lo = 0.0, hi = 0.0;
  density_extremes(spec, theta, window, mc.support, lo, hi);
  return combine(mc.sigma_minus, mc.sigma_plus, lo, hi);
}

double omega_window(const ModelSpec& spec, const std::vector<Theta>& grid,
                    const Eigen::VectorXd& window) {
  if (grid.empty()) throw InvalidArgument("parameter grid is empty");
  std::vector<ExpandedChain> chains;
  int order = 1;
  for (const auto& th : grid) {
    validate(spec, th);
    chains.push_back(expand(spec, th));
    order = std::max(order, minorization(chains.back()).order);
  }
  check_window(spec, order, window);
  double smin = std::numeric_limits<double>::infinity(), smax = 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const std::vector<int> support = support_of(chains[g]);
    const Eigen::MatrixXd power = kernel_power(chains[g], order);
    for (int a : support)
      for (int b : support) {
        smin = std::min(smin, power(a, b));
        smax = std::max(smax, power(a, b));
      }
    double l = 0.0, h = 0.0;
    density_extremes(spec, grid[g], window, support, l, h);
    lo = std::min(lo, l);
    hi = std::max(hi, h);
  }
  if (!(smin > 0.0)) throw NoMinorizationError("grid point without a positive minorization kernel");
  if (order == 1) return smin / smax;
  return combine(smin, smax, lo, hi);
}

OmegaSeries omega_series(const ModelSpec& spec, const Theta& theta, const SeriesData& data) {
  return omega_series(spec, std::vector<Theta>{theta}, data);
}

OmegaSeries omega_series(const ModelSpec& spec, const std::vector<Theta>& grid,
                         const SeriesData& data) {
  validate(spec, data);
  if (grid.empty()) throw InvalidArgument("parameter grid is empty");
  OmegaSeries out;
  out.mode = grid.size() == 1 ? ThetaMode::fixed : ThetaMode::grid;
  for (const auto& th : grid) out.order = std::max(out.order, minorization(expand(spec, th)).order);
  const int len = spec.lags() + out.order - 1;
  for (Eigen::Index start = 0; start + len <= data.y.size(); ++start) {
    const Eigen::VectorXd window = data.y.segment(start, len);
    out.values.push_back(grid.size() == 1 ? omega_window(spec, grid[0], window)
                                          : omega_window(spec, grid, window));
  }
  return out;
}

RowMatrix conditional_filter_exact(const ModelSpec& spec, const Theta& theta,
                                   const SeriesData& data, const InitialCondition& init) {
  return filter(spec, theta, data, init).filtered;
}

double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("distributions differ in size");
  return 0.5 * (a - b).cwiseAbs().sum();
}

Eigen::VectorXd mixed_conditional(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                                  const Eigen::VectorXd& mu, int steps, int horizon) {
  const int n = data.observations();
  if (horizon < 0) horizon = n;
  if (steps < 0 || steps > horizon || horizon > n)
    throw DimensionError("need 0 <= steps <= horizon <= n");
  if (mu.size() != spec.states()) throw DimensionError("initial measure must cover every state");
  if (steps == 0) return mu;  // X_0 given X_0 = x is a point mass

  const ExpandedChain chain = expand(spec, theta);
  SeriesData seg;
  seg.y = data.y.head(data.presample + horizon);
  seg.w = data.w.topRows(data.presample + horizon);
  seg.presample = data.presample;
  const RowMatrix logd = log_density_matrix(spec, theta, seg);

  Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.states());
  for (int x = 0; x < spec.states(); ++x) {
    if (mu[x] <= 0.0) continue;
    const SmoothOutput sm = forward_backward(chain, logd, PointMass{x}, false);
    out += mu[x] * sm.marginal.row(steps - 1).transpose();
  }
  return out;
}

MixingCheck check_mixing_bound(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                               int k, int m, const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2,
                               int horizon) {
  validate(spec, theta);
  validate(spec, data);
  const int n = data.observations();
  const int steps = k + m;
  if (steps < 0 || steps > n) throw DimensionError("k must lie in [-m, -m + n]");
  if (horizon < 0) horizon = n;
  if (horizon < steps || horizon > n) throw DimensionError("horizon must lie in [k + m, n]");
  for (const auto* mu : {&mu1, &mu2}) {
    if (mu->size() != spec.states()) throw DimensionError("initial measure must cover every state");
    if ((mu->array() < 0.0).any() || std::abs(mu->sum() - 1.0) > 1e-10)
      throw DomainError("initial measures must be probability vectors");
  }

  const ExpandedChain chain = expand(spec, theta);
  const MinorizationConstants mc = minorization(chain);
  std::vector<bool> in_support(spec.states(), false);
  for (int s : mc.support) in_support[s] = true;
  for (int x = 0; x < spec.states(); ++x)
    if (!in_support[x] && (mu1[x] > 0.0 || mu2[x] > 0.0))
      throw DomainError("initial measures must live on the stationary support");

  MixingCheck out;
  out.tv_distance = total_variation(mixed_conditional(spec, theta, data, mu1, steps, horizon),
                                    mixed_conditional(spec, theta, data, mu2, steps, horizon));
  const int p = mc.order;
  const int s = spec.lags();
  out.bound = 1.0;
  for (int i = 1; i <= steps / p; ++i) {
    const Eigen::VectorXd window = data.y.segment(p * (i - 1), s + p - 1);
    double w = mc.sigma_minus / mc.sigma_plus;
    if (p > 1) {
      double lo = 0.0, hi = 0.0;
      density_extremes(spec, theta, window, mc.support, lo, hi);
      w = combine(mc.sigma_minus, mc.sigma_plus, lo, hi);
    }
    out.omegas.push_back(w);
    out.bound *= 1.0 - w;
  }
  out.margin = out.bound - out.tv_distance;
  out.passed = out.margin >= -1e-12;
  return out;
}

ForgettingCurve forgetting_curve(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                                 int m, const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2) {
  // Validates the inputs and yields the k = -m point.
  const MixingCheck first = check_mixing_bound(spec, theta, data, -m, m, mu1, mu2);
  const int n = data.observations();
  const ExpandedChain chain = expand(spec, theta);
  const MinorizationConstants mc = minorization(chain);
  const RowMatrix logd = log_density_matrix(spec, theta, data);

  // Smoothed marginals given X_0 = x, computed once per state in use.
  RowMatrix mix1 = RowMatrix::Zero(n, spec.states());
  RowMatrix mix2 = RowMatrix::Zero(n, spec.states());
  for (int x = 0; x < spec.states(); ++x) {
    if (mu1[x] <= 0.0 && mu2[x] <= 0.0) continue;
    const SmoothOutput sm = forward_backward(chain, logd, PointMass{x}, false);
    if (mu1[x] > 0.0) mix1 += mu1[x] * sm.marginal;
    if (mu2[x] > 0.0) mix2 += mu2[x] * sm.marginal;
  }

  ForgettingCurve curve;
  curve.points.push_back({-m, first.tv_distance, first.bound});
  curve.bound_holds = first.passed;
  const int p = mc.order;
  const int s = spec.lags();
  double bound = 1.0;
  for (int steps = 1; steps <= n; ++steps) {
    if (steps % p == 0) {
      const int i = steps / p;
      double w = mc.sigma_minus / mc.sigma_plus;
      if (p > 1) {
        double lo = 0.0, hi = 0.0;
        density_extremes(spec, theta, data.y.segment(p * (i - 1), s + p - 1), mc.support, lo, hi);
        w = combine(mc.sigma_minus, mc.sigma_plus, lo, hi);
      }
      bound *= 1.0 - w;
    }
    const double tv = 0.5 * (mix1.row(steps - 1) - mix2.row(steps - 1)).cwiseAbs().sum();
    if (tv > curve.points.back().tv_distance + 1e-12) curve.monotone = false;
    if (bound - tv < -1e-12) curve.bound_holds = false;
    curve.points.push_back({steps - m, tv, bound});
  }
  return curve;
}

}  // namespace regimeswitch
