#include "regimeswitch/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "regimeswitch/errors.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/optimize.hpp"
#include "regimeswitch/parallel.hpp"

namespace regimeswitch {

namespace {

constexpr double kLogitBox = 15.0;

// Optimization over a subset of the unconstrained parameters, optionally with
// the initial distribution's logits appended.
struct Problem {
  const ModelSpec& spec;
  const SeriesData& data;
  Eigen::VectorXd base_v;
  std::vector<int> free;
  bool xi = false;
  InitialCondition fixed_init = PointMass{0};

  int xi_dim() const { return xi ? spec.states() - 1 : 0; }
  int dim() const { return static_cast<int>(free.size()) + xi_dim(); }

  Eigen::VectorXd full_v(const Eigen::VectorXd& x) const {
    Eigen::VectorXd v = base_v;
    for (std::size_t i = 0; i < free.size(); ++i) v[free[i]] = x[i];
    return v;
  }

  InitialCondition init_of(const Eigen::VectorXd& x) const {
    if (!xi) return fixed_init;
    return Distribution{logits_to_simplex(x.tail(xi_dim()))};
  }

  double operator()(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
    try {
      const Theta theta = from_unconstrained(spec, full_v(x));
      const InitialCondition init = init_of(x);
      double ll = 0.0;
      const Eigen::VectorXd g = louis_gradient(spec, theta, data, init, xi, &ll);
      if (!std::isfinite(ll) || !g.allFinite()) return std::numeric_limits<double>::infinity();
      if (grad) {
        grad->resize(dim());
        for (std::size_t i = 0; i < free.size(); ++i) (*grad)[i] = -g[free[i]];
        for (int j = 0; j < xi_dim(); ++j) (*grad)[free.size() + j] = -g[spec.parameter_count() + j];
      }
      return -ll;
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  void bounds(Eigen::VectorXd& lo, Eigen::VectorXd& hi) const {
    lo.resize(dim());
    hi.resize(dim());
    const auto& params = spec.density_parameters();
    for (std::size_t i = 0; i < free.size(); ++i) {
      const int k = free[i];
      if (k < spec.density_count()) {
        lo[i] = params[k].lower;
        hi[i] = params[k].upper;
      } else {
        lo[i] = -kLogitBox;
        hi[i] = kLogitBox;
      }
    }
    for (int j = 0; j < xi_dim(); ++j) {
      lo[free.size() + j] = -kLogitBox;
      hi[free.size() + j] = kLogitBox;
    }
  }
};

struct StartOutcome {
  StartSummary summary;
  Eigen::VectorXd x;
  bool usable = false;
};

double stddev(const Eigen::VectorXd& y) {
  const double mean = y.mean();
  return std::sqrt((y.array() - mean).square().mean());
}

// Equal-count groups of the sorted values.
std::vector<Eigen::VectorXd> quantile_groups(Eigen::VectorXd values, int groups) {
  std::sort(values.data(), values.data() + values.size());
  std::vector<Eigen::VectorXd> out;
  const Eigen::Index n = values.size();
  for (int g = 0; g < groups; ++g) {
    const Eigen::Index a = g * n / groups;
    const Eigen::Index b = std::max<Eigen::Index>((g + 1) * n / groups, a + 1);
    out.push_back(values.segment(std::min(a, n - 1), std::min(b, n) - std::min(a, n - 1)));
  }
  return out;
}

Eigen::MatrixXd default_transition(const ModelSpec& spec) {
  const int m = spec.regimes();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    int off = 0;
    for (int j = 0; j < m; ++j) off += (j != i && spec.allowed()(i, j)) ? 1 : 0;
    const bool diag = spec.allowed()(i, i);
    for (int j = 0; j < m; ++j) {
      if (!spec.allowed()(i, j)) continue;
      if (j == i)
        p(i, j) = off ? 0.9 : 1.0;
      else
        p(i, j) = diag ? 0.1 / off : 1.0 / off;
    }
  }
  return p;
}

Eigen::VectorXd clamp_to(const Problem& prob, const Eigen::VectorXd& x) {
  Eigen::VectorXd lo, hi;
  prob.bounds(lo, hi);
  return x.cwiseMax(lo).cwiseMin(hi);
}

std::vector<StartOutcome> run_starts(const Problem& prob, const std::vector<Eigen::VectorXd>& starts,
                                     const FitOptions& opts) {
  OptimizeOptions oo;
  oo.max_iterations = opts.max_iterations;
  oo.gradient_tolerance = opts.gradient_tolerance;
  prob.bounds(oo.lower, oo.upper);
  std::vector<StartOutcome> out(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    const OptimizeResult r = minimize_box(std::cref(prob), starts[i], oo);
    out[i].x = r.x;
    out[i].summary.loglik = -r.value;
    out[i].summary.converged = r.converged;
    out[i].summary.iterations = r.iterations;
    out[i].summary.message = r.message;
    out[i].usable = std::isfinite(r.value);
  });
  return out;
}

std::string start_report(const std::vector<StartOutcome>& outcomes) {
  std::string out = "no start converged";
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    out += (i ? "; " : " (") + std::to_string(i) + ": " +
           (outcomes[i].summary.message.empty() ? "unusable" : outcomes[i].summary.message);
  return outcomes.empty() ? out : out + ")";
}

// Best converged start; ties go to the lowest index.
int pick_best(const std::vector<StartOutcome>& outcomes) {
  int best = -1;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].usable || !outcomes[i].summary.converged) continue;
    if (best < 0 || outcomes[i].summary.loglik > outcomes[best].summary.loglik) best = static_cast<int>(i);
  }
  return best;
}

void boundary_warnings(const ModelSpec& spec, const Theta& theta, std::vector<std::string>& warnings) {
  const Eigen::VectorXd v = to_unconstrained(spec, theta);
  const auto names = spec.parameter_names();
  const auto& params = spec.density_parameters();
  for (int i = 0; i < spec.density_count(); ++i)
    if (v[i] - params[i].lower < 1e-4 || params[i].upper - v[i] < 1e-4)
      warnings.push_back("boundary_warning: " + names[i] + " is at its optimization bound");
  const int m = spec.regimes();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (!spec.allowed()(i, j)) continue;
      const double p = theta.transition(i, j);
      int allowed = 0;
      for (int c = 0; c < m; ++c) allowed += spec.allowed()(i, c) ? 1 : 0;
      if (allowed > 1 && (p < 1e-4 || p > 1.0 - 1e-4))
        warnings.push_back("boundary_warning: p_" + std::to_string(i + 1) + std::to_string(j + 1) +
                           " is within 1e-4 of 0 or 1");
    }
}

void attach_covariance(FitResult& res, const FitOptions& opts) {
  auto attempt = [&](const std::string& kind, auto&& compute, std::optional<CovarianceEstimate>& slot) {
    try {
      slot = compute(res.spec, res.theta_hat, res.data, res.init_used);
    } catch (const Error& e) {
      res.covariance_errors[kind] = std::string(e.code()) + ": " + e.what();
    }
  };
  if (opts.compute_opg)
    attempt("opg", [](auto&&... a) { return opg(a...); }, res.opg);
  if (opts.compute_hessian)
    attempt("hessian", [](auto&&... a) { return hessian_fd(a...); }, res.hessian);
}

FitResult finalize(const Problem& prob, const std::vector<StartOutcome>& outcomes, int best,
                   const FitOptions& opts, LabelOrder order) {
  const ModelSpec& spec = prob.spec;
  FitResult res;
  res.spec = spec;
  res.data = prob.data;
  for (const auto& o : outcomes) res.starts.push_back(o.summary);
  res.best_start = best;
  res.converged = true;
  res.xi_estimated = prob.xi;

  const Eigen::VectorXd& x = outcomes[best].x;
  Theta theta = from_unconstrained(spec, prob.full_v(x));
  InitialCondition init = prob.init_of(x);

  const std::vector<int> perm = canonical_permutation(spec, theta, order);
  if (order != LabelOrder::as_is && relabeling_invariant(spec.family()) &&
      std::is_sorted(perm.begin(), perm.end()) == false) {
    theta = relabel(spec, theta, perm);
    if (auto* d = std::get_if<Distribution>(&init))
      d->xi = relabel_states(spec, d->xi, perm);
    else
      std::get<PointMass>(init).state = relabel_state(spec, std::get<PointMass>(init).state, perm);
  }
  res.theta_hat = theta;
  res.init_used = init;

  double ll = 0.0;
  const Eigen::VectorXd g = louis_gradient(spec, theta, prob.data, init, false, &ll);
  res.loglik = ll;
  double norm = 0.0;
  for (int i : prob.free) norm = std::max(norm, std::abs(g[i]));
  res.score_norm = norm;

  boundary_warnings(spec, theta, res.warnings);
  attach_covariance(res, opts);
  return res;
}

Eigen::VectorXd uniform_logits(int states) { return Eigen::VectorXd::Zero(states - 1); }

Eigen::VectorXd safe_logits(const Eigen::VectorXd& xi) {
  Eigen::VectorXd p = xi.cwiseMax(1e-300);
  Eigen::VectorXd out(p.size() - 1);
  for (Eigen::Index i = 0; i + 1 < p.size(); ++i)
    out[i] = std::clamp(std::log(p[i] / p[p.size() - 1]), -kLogitBox, kLogitBox);
  return out;
}

std::vector<Eigen::VectorXd> perturbed_starts(const Problem& prob, const Eigen::VectorXd& center,
                                              int count, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> out;
  for (int s = 0; s < count; ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s + 1)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 0.5);
    Eigen::VectorXd x = center;
    for (std::size_t i = 0; i < prob.free.size(); ++i) x[i] += noise(rng);
    out.push_back(clamp_to(prob, x));
  }
  return out;
}

}  // namespace

const CovarianceEstimate* FitResult::covariance() const {
  if (opg) return &*opg;
  if (hessian) return &*hessian;
  return nullptr;
}

std::vector<int> canonical_permutation(const ModelSpec& spec, const Theta& theta, LabelOrder order) {
  const int m = spec.regimes();
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  if (order == LabelOrder::as_is || !relabeling_invariant(spec.family())) return perm;
  const Eigen::VectorXd keys = regime_keys(spec, theta);
  std::vector<int> rank(m);
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
    return order == LabelOrder::ascending ? keys[a] < keys[b] : keys[a] > keys[b];
  });
  for (int r = 0; r < m; ++r) perm[rank[r]] = r;
  if (!mask_preserved(spec, perm)) std::iota(perm.begin(), perm.end(), 0);
  return perm;
}

Theta default_start(const ModelSpec& spec, const SeriesData& data) {
  const int m = spec.regimes();
  const Eigen::VectorXd y = data.y.tail(data.observations());
  const double mean = y.mean();
  const double sd = stddev(y);
  const auto groups = quantile_groups(y, m);
  double pooled = 0.0;
  for (const auto& g : groups) pooled += (g.array() - g.mean()).square().sum();
  pooled = std::max(std::sqrt(pooled / y.size()), 1e-3 * sd);

  Theta theta;
  theta.transition = default_transition(spec);
  theta.density.resize(spec.density_count());
  auto& th = theta.density;
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, HamiltonAR>) {
          for (int i = 0; i < m; ++i) th[i] = groups[i].mean();
          for (int l = 0; l < f.ar_order; ++l) th[m + l] = 0.0;
          th[m + f.ar_order] = pooled;
        } else if constexpr (std::is_same_v<F, SwitchingARCH>) {
          th[0] = mean;
          th[1] = 0.0;
          const auto spread = quantile_groups((y.array() - mean).abs().matrix(), m);
          for (int i = 0; i < m; ++i)
            th[2 + i] = std::max(std::sqrt(spread[i].array().square().mean()), 1e-3 * sd);
          for (int l = 0; l < f.arch_order; ++l) th[2 + m + l] = 0.1;
          if (f.innovation == Innovation::student_t) th[2 + m + f.arch_order] = 8.0;
        } else if constexpr (std::is_same_v<F, BounceBack>) {
          for (int i = 0; i < m; ++i) th[i] = groups[i].mean();
          th[m] = 0.0;
          th[m + 1] = pooled;
        } else {
          const double beta = 0.05;
          for (int i = 0; i < m; ++i) th[i] = std::max(groups[i].mean() - beta * mean, 0.01 * mean);
          th[m] = beta;
          th[m + 1] = 1.0;
        }
      },
      spec.family());
  return theta;
}

FitResult fit(const ModelSpec& spec, const SeriesData& data, const InitSpec& init,
              const FitOptions& opts) {
  validate(spec, data);
  if (opts.n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
  if (opts.max_iterations < 1) throw InvalidArgument("max_iterations must be positive");
  if (!(opts.gradient_tolerance > 0.0)) throw InvalidArgument("gradient_tolerance must be positive");
  if (data.y.maxCoeff() == data.y.minCoeff())
    throw DataDegeneracyError("series is constant; the scale parameters are not identified");

  const bool xi = opts.estimate_xi || std::holds_alternative<EstimateXi>(init);
  Problem prob{spec, data, Eigen::VectorXd::Zero(spec.parameter_count()), {}, xi, PointMass{0}};
  prob.free.resize(spec.parameter_count());
  std::iota(prob.free.begin(), prob.free.end(), 0);
  if (!xi) {
    if (const auto* pm = std::get_if<PointMass>(&init))
      prob.fixed_init = *pm;
    else
      prob.fixed_init = std::get<Distribution>(init);
    validate(spec, prob.fixed_init);
  }

  auto start_vector = [&](const Theta& theta) {
    Eigen::VectorXd x(prob.dim());
    x.head(spec.parameter_count()) = to_unconstrained(spec, theta);
    if (xi) x.tail(prob.xi_dim()) = uniform_logits(spec.states());
    return clamp_to(prob, x);
  };

  std::vector<Eigen::VectorXd> starts;
  const Eigen::VectorXd center = start_vector(default_start(spec, data));
  starts.push_back(center);
  for (const auto& t : opts.extra_starts) {
    if (static_cast<int>(starts.size()) >= opts.n_starts) break;
    try {
      starts.push_back(start_vector(t));
    } catch (const Error&) {
      // Extra starts outside the admissible interior are skipped.
    }
  }
  const int remaining = opts.n_starts - static_cast<int>(starts.size());
  for (auto& s : perturbed_starts(prob, center, remaining, opts.seed)) starts.push_back(s);

  const auto outcomes = run_starts(prob, starts, opts);
  const int best = pick_best(outcomes);
  if (best < 0) throw NoConvergenceError(start_report(outcomes));
  return finalize(prob, outcomes, best, opts, opts.label_order);
}

FitResult profile_refit(const FitResult& result, const std::map<std::string, double>& fixed,
                        const FitOptions& opts) {
  const ModelSpec& spec0 = result.spec;
  const int m = spec0.regimes();
  Theta theta = result.theta_hat;
  TransitionMask mask = spec0.allowed();
  std::vector<int> fixed_density;
  std::vector<bool> held_row(m, false);
  bool value_fixed = false;

  for (const auto& [name, value] : fixed) {
    int d = -1;
    for (int i = 0; i < spec0.density_count(); ++i)
      if (spec0.density_parameters()[i].name == name) d = i;
    if (d >= 0) {
      theta.density[d] = value;
      fixed_density.push_back(d);
      value_fixed = true;
      continue;
    }
    if (name.size() != 4 || !name.starts_with("p_"))
      throw InvalidArgument("unknown parameter " + name);
    const int i = name[2] - '1';
    const int j = name[3] - '1';
    if (i < 0 || i >= m || j < 0 || j >= m) throw InvalidArgument("unknown parameter " + name);
    if (!(value >= 0.0 && value <= 1.0)) throw DomainError(name + " must lie in [0, 1]");
    if (value == 0.0) {
      mask(i, j) = false;
      theta.transition(i, j) = 0.0;
      const double rest = theta.transition.row(i).sum();
      if (!(rest > 0.0)) throw DomainError("fixing " + name + " at 0 leaves an empty row");
      theta.transition.row(i) /= rest;
      continue;
    }
    if (!mask(i, j)) throw DomainError(name + " is a structural zero");
    double others = theta.transition.row(i).sum() - theta.transition(i, j);
    int count = 0;
    for (int c = 0; c < m; ++c) count += (c != j && mask(i, c)) ? 1 : 0;
    for (int c = 0; c < m; ++c) {
      if (c == j || !mask(i, c)) continue;
      theta.transition(i, c) = others > 0.0 ? theta.transition(i, c) / others * (1.0 - value)
                                            : (1.0 - value) / count;
    }
    theta.transition(i, j) = value;
    held_row[i] = true;
    value_fixed = true;
  }

  const ModelSpec spec(spec0.family(), m, mask);
  validate(spec, theta);
  Problem prob{spec, result.data, to_unconstrained(spec, theta), {}, result.xi_estimated, result.init_used};
  for (int i = 0; i < spec.density_count(); ++i)
    if (std::find(fixed_density.begin(), fixed_density.end(), i) == fixed_density.end())
      prob.free.push_back(i);
  {
    int k = spec.density_count();
    for (const auto& e : spec.free_transitions()) {
      if (!held_row[e.row]) prob.free.push_back(k);
      ++k;
    }
  }

  Eigen::VectorXd center(prob.dim());
  for (std::size_t i = 0; i < prob.free.size(); ++i) center[i] = prob.base_v[prob.free[i]];
  if (prob.xi) center.tail(prob.xi_dim()) = safe_logits(std::get<Distribution>(result.init_used).xi);
  center = clamp_to(prob, center);

  std::vector<Eigen::VectorXd> starts{center};
  for (auto& s : perturbed_starts(prob, center, std::max(opts.n_starts - 1, 0), opts.seed))
    starts.push_back(s);
  const auto outcomes = run_starts(prob, starts, opts);
  const int best = pick_best(outcomes);
  if (best < 0) throw NoConvergenceError(start_report(outcomes));

  FitOptions post = opts;
  if (value_fixed) {
    post.compute_opg = false;
    post.compute_hessian = false;
  }
  FitResult res = finalize(prob, outcomes, best, post, LabelOrder::as_is);
  for (const auto& kv : fixed) res.fixed.push_back(kv.first);
  if (value_fixed)
    res.warnings.push_back("covariance not computed: parameters held at fixed values");
  return res;
}

std::vector<Interval> confidence_intervals(const FitResult& fit, double level) {
  const CovarianceEstimate* cov = fit.covariance();
  if (!cov) throw SingularInformationError("fit has no covariance estimate");
  return confidence_intervals(fit.spec.parameter_names(), reported(fit.spec, fit.theta_hat), *cov, level);
}

}  // namespace regimeswitch
