#include "regimeswitch/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "regimeswitch/chain.hpp"
#include "regimeswitch/errors.hpp"

namespace regimeswitch {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string idx(int i) { return std::to_string(i + 1); }

int ipow(int base, int exp) {
  long long out = 1;
  for (int i = 0; i < exp; ++i) {
    out *= base;
    if (out > 1024) throw ScaleError("expanded state space exceeds 1024 states");
  }
  return static_cast<int>(out);
}

double apply_transform(Transform t, double v) {
  switch (t) {
    case Transform::identity: return v;
    case Transform::log: return std::exp(v);
    case Transform::log_minus_two: return 2.0 + std::exp(v);
  }
  return v;
}

double invert_transform(Transform t, double value, const std::string& name) {
  switch (t) {
    case Transform::identity: return value;
    case Transform::log:
      if (!(value > 0.0)) throw DomainError(name + " must be strictly positive");
      return std::log(value);
    case Transform::log_minus_two:
      if (!(value > 2.0)) throw DomainError(name + " must exceed 2");
      return std::log(value - 2.0);
  }
  return value;
}

double transform_derivative(Transform t, double v) {
  switch (t) {
    case Transform::identity: return 1.0;
    case Transform::log:
    case Transform::log_minus_two: return std::exp(v);
  }
  return 1.0;
}

// Offset of the first regime-specific density parameter.
int regime_offset(const DensityFamily& family) {
  return std::holds_alternative<SwitchingARCH>(family) ? 2 : 0;
}

double gaussian_logpdf(double z, double scale) {
  return -kHalfLog2Pi - std::log(scale) - 0.5 * z * z;
}

// log density of a unit-variance Student t at z.
double std_t_logpdf(double z, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(std::numbers::pi * (nu - 2.0)) -
         0.5 * (nu + 1.0) * std::log1p(z * z / (nu - 2.0));
}

// Precomputed regime digits of every expanded state: digits(state, lag).
Eigen::MatrixXi state_digits(const ModelSpec& spec) {
  Eigen::MatrixXi digits(spec.states(), spec.memory());
  for (int s = 0; s < spec.states(); ++s)
    for (int l = 0; l < spec.memory(); ++l) digits(s, l) = spec.regime_of(s, l);
  return digits;
}

double weibull_logpdf(double y, double log_scale, double shape) {
  const double log_ratio = std::log(y) - log_scale;
  return std::log(shape) - log_scale + (shape - 1.0) * log_ratio - std::exp(shape * log_ratio);
}

}  // namespace

int lag_count(const DensityFamily& family) {
  return std::visit(overloaded{
                        [](const HamiltonAR& f) { return f.ar_order; },
                        [](const SwitchingARCH& f) { return f.arch_order + 1; },
                        [](const BounceBack&) { return 0; },
                        [](const MSCDWeibull&) { return 1; },
                    },
                    family);
}

int regime_memory(const DensityFamily& family) {
  return std::visit(overloaded{
                        [](const HamiltonAR& f) { return f.ar_order + 1; },
                        [](const SwitchingARCH& f) { return f.arch_order + 1; },
                        [](const BounceBack& f) { return f.memory + 1; },
                        [](const MSCDWeibull&) { return 1; },
                    },
                    family);
}

std::string family_name(const DensityFamily& family) {
  return std::visit(overloaded{
                        [](const HamiltonAR&) { return std::string("hamilton_ar"); },
                        [](const SwitchingARCH&) { return std::string("switching_arch"); },
                        [](const BounceBack&) { return std::string("bounce_back"); },
                        [](const MSCDWeibull&) { return std::string("mscd_weibull"); },
                    },
                    family);
}

bool has_analytic_gradient(const DensityFamily& family) {
  return std::holds_alternative<HamiltonAR>(family) || std::holds_alternative<MSCDWeibull>(family);
}

bool relabeling_invariant(const DensityFamily& family) {
  return !std::holds_alternative<BounceBack>(family);
}

// ---------------------------------------------------------------------------
// ModelSpec
// ---------------------------------------------------------------------------

ModelSpec::ModelSpec(DensityFamily family, int regimes)
    : ModelSpec(std::move(family), regimes, TransitionMask::Constant(regimes, regimes, true)) {}

ModelSpec::ModelSpec(DensityFamily family, int regimes, TransitionMask allowed)
    : family_(std::move(family)), regimes_(regimes), states_(0), allowed_(std::move(allowed)) {
  if (regimes_ < 1) throw InvalidArgument("regime count must be at least 1");
  if (allowed_.rows() != regimes_ || allowed_.cols() != regimes_)
    throw DimensionError("transition mask must be M x M");
  std::visit(overloaded{
                 [](const HamiltonAR& f) {
                   if (f.ar_order < 0) throw InvalidArgument("ar_order must be >= 0");
                 },
                 [](const SwitchingARCH& f) {
                   if (f.arch_order < 1) throw InvalidArgument("arch_order must be >= 1");
                 },
                 [](const BounceBack& f) {
                   if (f.memory < 1) throw InvalidArgument("memory must be >= 1");
                 },
                 [](const MSCDWeibull&) {},
             },
             family_);
  states_ = ipow(regimes_, memory());

  const int m = regimes_;
  auto add = [&](std::string name, Transform t, double lower = -15.0) {
    density_params_.push_back({std::move(name), t, lower, 15.0});
  };
  std::visit(overloaded{
                 [&](const HamiltonAR& f) {
                   for (int i = 0; i < m; ++i) add("mu_" + idx(i), Transform::identity);
                   for (int l = 0; l < f.ar_order; ++l) add("gamma_" + idx(l), Transform::identity);
                   add("sigma", Transform::log);
                 },
                 [&](const SwitchingARCH& f) {
                   add("mu", Transform::identity);
                   add("gamma_y", Transform::identity);
                   for (int i = 0; i < m; ++i) add("sigma_" + idx(i), Transform::log);
                   for (int l = 0; l < f.arch_order; ++l) add("arch_" + idx(l), Transform::log);
                   if (f.innovation == Innovation::student_t) add("nu", Transform::log_minus_two);
                 },
                 [&](const BounceBack&) {
                   for (int i = 0; i < m; ++i) add("mu_" + idx(i), Transform::identity);
                   add("lambda", Transform::identity);
                   add("sigma", Transform::log);
                 },
                 [&](const MSCDWeibull&) {
                   for (int i = 0; i < m; ++i) add("mu_" + idx(i), Transform::log);
                   add("beta", Transform::log);
                   add("gamma", Transform::log, std::log(0.1));
                 },
             },
             family_);

  reference_.assign(m, -1);
  for (int i = 0; i < m; ++i) {
    int count = 0;
    for (int j = 0; j < m; ++j) count += allowed_(i, j) ? 1 : 0;
    if (count == 0) throw InvalidArgument("transition row " + idx(i) + " has no allowed entry");
    if (count == 1) continue;
    for (int j = m - 1; j >= 0; --j) {
      if (j != i && allowed_(i, j)) {
        reference_[i] = j;
        break;
      }
    }
    for (int j = 0; j < m; ++j)
      if (allowed_(i, j) && j != reference_[i]) free_transitions_.push_back({i, j});
  }
}

std::vector<std::string> ModelSpec::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& p : density_params_) names.push_back(p.name);
  for (const auto& e : free_transitions_) names.push_back("p_" + idx(e.row) + idx(e.col));
  return names;
}

int ModelSpec::parameter_index(std::string_view name) const {
  const auto names = parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

int ModelSpec::regime_of(int state, int lag) const {
  int divisor = 1;
  for (int l = lag + 1; l < memory(); ++l) divisor *= regimes_;
  return (state / divisor) % regimes_;
}

// ---------------------------------------------------------------------------
// Validation and parameter maps
// ---------------------------------------------------------------------------

SeriesData make_series(const ModelSpec& spec, Eigen::VectorXd y, Eigen::MatrixXd w) {
  SeriesData data;
  data.y = std::move(y);
  if (w.size() == 0) w.resize(data.y.size(), 0);
  data.w = std::move(w);
  data.presample = spec.lags();
  validate(spec, data);
  return data;
}

void validate(const ModelSpec& spec, const SeriesData& data) {
  if (data.presample != spec.lags())
    throw DimensionError("series presample must equal the family lag count " +
                         std::to_string(spec.lags()));
  if (data.y.size() <= data.presample)
    throw DimensionError("series must be longer than its presample");
  if (data.w.rows() != data.y.size())
    throw DimensionError("covariate rows must match the series length");
  for (Eigen::Index i = 0; i < data.y.size(); ++i)
    if (!std::isfinite(data.y[i])) throw DomainError("series contains a non-finite value");
  if (std::holds_alternative<MSCDWeibull>(spec.family()))
    for (Eigen::Index i = 0; i < data.y.size(); ++i)
      if (!(data.y[i] > 0.0)) throw DomainError("durations must be strictly positive");
}

void validate(const ModelSpec& spec, const Theta& theta) {
  const int m = spec.regimes();
  if (theta.density.size() != spec.density_count())
    throw DimensionError("density parameter vector has length " +
                         std::to_string(theta.density.size()) + ", expected " +
                         std::to_string(spec.density_count()));
  if (theta.transition.rows() != m || theta.transition.cols() != m)
    throw DimensionError("transition matrix must be M x M");
  const auto& params = spec.density_parameters();
  for (int i = 0; i < spec.density_count(); ++i) {
    const double v = theta.density[i];
    if (!std::isfinite(v)) throw DomainError(params[i].name + " is not finite");
    const bool nonneg_ok = params[i].name == "beta" || params[i].name.starts_with("arch_");
    if (params[i].transform == Transform::log && !(v > 0.0 || (nonneg_ok && v == 0.0)))
      throw DomainError(params[i].name + " must be positive");
    if (params[i].transform == Transform::log_minus_two && !(v > 2.0))
      throw DomainError(params[i].name + " must exceed 2");
  }
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      const double p = theta.transition(i, j);
      if (!spec.allowed()(i, j) && p != 0.0)
        throw DomainError("masked transition entry p_" + idx(i) + idx(j) + " must be zero");
      if (!(p >= 0.0 && p <= 1.0)) throw DomainError("transition entries must lie in [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw DomainError("transition row " + idx(i) + " does not sum to one");
  }
}

void validate(const ModelSpec& spec, const InitialCondition& init) {
  if (const auto* pm = std::get_if<PointMass>(&init)) {
    if (pm->state < 0 || pm->state >= spec.states())
      throw DimensionError("initial state index out of range");
    return;
  }
  const auto& xi = std::get<Distribution>(init).xi;
  if (xi.size() != spec.states()) throw DimensionError("xi must cover every expanded state");
  if ((xi.array() < 0.0).any()) throw DomainError("xi entries must be non-negative");
  if (std::abs(xi.sum() - 1.0) > 1e-10) throw DomainError("xi must sum to one");
}

double parameter(const ModelSpec& spec, const Theta& theta, std::string_view name) {
  const int i = spec.parameter_index(name);
  if (i < 0) throw InvalidArgument("unknown parameter " + std::string(name));
  return reported(spec, theta)[i];
}

Eigen::VectorXd reported(const ModelSpec& spec, const Theta& theta) {
  Eigen::VectorXd out(spec.parameter_count());
  out.head(spec.density_count()) = theta.density;
  int k = spec.density_count();
  for (const auto& e : spec.free_transitions()) out[k++] = theta.transition(e.row, e.col);
  return out;
}

Theta from_reported(const ModelSpec& spec, const Eigen::VectorXd& values) {
  if (values.size() != spec.parameter_count())
    throw DimensionError("reported parameter vector has wrong length");
  const int m = spec.regimes();
  Theta theta;
  theta.density = values.head(spec.density_count());
  theta.transition = Eigen::MatrixXd::Zero(m, m);
  int k = spec.density_count();
  for (const auto& e : spec.free_transitions()) theta.transition(e.row, e.col) = values[k++];
  for (int i = 0; i < m; ++i) {
    const int ref = spec.reference_columns()[i];
    if (ref < 0) {
      for (int j = 0; j < m; ++j)
        if (spec.allowed()(i, j)) theta.transition(i, j) = 1.0;
    } else {
      theta.transition(i, ref) = 1.0 - theta.transition.row(i).sum();
    }
  }
  return theta;
}

Eigen::VectorXd simplex_to_logits(const Eigen::VectorXd& probs) {
  const Eigen::Index k = probs.size();
  if (k < 1) throw DimensionError("empty probability vector");
  const double ref = probs[k - 1];
  if (!(ref > 0.0)) throw DomainError("reference probability must be positive");
  Eigen::VectorXd v(k - 1);
  for (Eigen::Index i = 0; i + 1 < k; ++i) {
    if (!(probs[i] > 0.0)) throw DomainError("probabilities must be strictly positive");
    v[i] = std::log(probs[i] / ref);
  }
  return v;
}

Eigen::VectorXd logits_to_simplex(const Eigen::VectorXd& logits) {
  const Eigen::Index k = logits.size() + 1;
  Eigen::VectorXd p(k);
  const double top = std::max(0.0, logits.size() ? logits.maxCoeff() : 0.0);
  double total = std::exp(-top);
  for (Eigen::Index i = 0; i + 1 < k; ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  p[k - 1] = std::exp(-top);
  return p / total;
}

Eigen::VectorXd to_unconstrained(const ModelSpec& spec, const Theta& theta) {
  validate(spec, theta);
  Eigen::VectorXd v(spec.parameter_count());
  const auto& params = spec.density_parameters();
  for (int i = 0; i < spec.density_count(); ++i)
    v[i] = invert_transform(params[i].transform, theta.density[i], params[i].name);
  int k = spec.density_count();
  for (const auto& e : spec.free_transitions()) {
    const double ref = theta.transition(e.row, spec.reference_columns()[e.row]);
    const double p = theta.transition(e.row, e.col);
    if (!(p > 0.0) || !(ref > 0.0))
      throw DomainError("free transition probabilities must be strictly positive");
    v[k++] = std::log(p / ref);
  }
  return v;
}

Theta from_unconstrained(const ModelSpec& spec, const Eigen::VectorXd& v) {
  if (v.size() != spec.parameter_count())
    throw DimensionError("unconstrained vector has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(spec.parameter_count()));
  const int m = spec.regimes();
  Theta theta;
  theta.density.resize(spec.density_count());
  const auto& params = spec.density_parameters();
  for (int i = 0; i < spec.density_count(); ++i)
    theta.density[i] = apply_transform(params[i].transform, v[i]);
  theta.transition = Eigen::MatrixXd::Zero(m, m);
  // Row-wise softmax over the free logits with the reference logit fixed at 0.
  Eigen::MatrixXd logit = Eigen::MatrixXd::Constant(m, m, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < m; ++i)
    if (spec.reference_columns()[i] >= 0) logit(i, spec.reference_columns()[i]) = 0.0;
  int k = spec.density_count();
  for (const auto& e : spec.free_transitions()) logit(e.row, e.col) = v[k++];
  for (int i = 0; i < m; ++i) {
    if (spec.reference_columns()[i] < 0) {
      for (int j = 0; j < m; ++j)
        if (spec.allowed()(i, j)) theta.transition(i, j) = 1.0;
      continue;
    }
    const double top = logit.row(i).maxCoeff();
    double total = 0.0;
    for (int j = 0; j < m; ++j) {
      if (!spec.allowed()(i, j)) continue;
      theta.transition(i, j) = std::exp(logit(i, j) - top);
      total += theta.transition(i, j);
    }
    theta.transition.row(i) /= total;
  }
  return theta;
}

Eigen::MatrixXd transform_jacobian(const ModelSpec& spec, const Eigen::VectorXd& v) {
  const int q = spec.parameter_count();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(q, q);
  const auto& params = spec.density_parameters();
  for (int i = 0; i < spec.density_count(); ++i)
    jac(i, i) = transform_derivative(params[i].transform, v[i]);
  const Theta theta = from_unconstrained(spec, v);
  const auto& free = spec.free_transitions();
  const int d = spec.density_count();
  for (std::size_t a = 0; a < free.size(); ++a) {
    for (std::size_t b = 0; b < free.size(); ++b) {
      if (free[a].row != free[b].row) continue;
      const double pa = theta.transition(free[a].row, free[a].col);
      const double pb = theta.transition(free[b].row, free[b].col);
      jac(d + a, d + b) = pa * ((a == b ? 1.0 : 0.0) - pb);
    }
  }
  return jac;
}

// ---------------------------------------------------------------------------
// Conditional densities
// ---------------------------------------------------------------------------

double log_g(const ModelSpec& spec, const Theta& theta, double y, std::span<const double> ylags,
             std::span<const int> regimes, std::span<const double> /*w*/) {
  if (static_cast<int>(ylags.size()) != spec.lags())
    throw DimensionError("log_g needs " + std::to_string(spec.lags()) + " lagged observations");
  if (static_cast<int>(regimes.size()) != spec.memory())
    throw DimensionError("log_g needs a regime tuple of length " + std::to_string(spec.memory()));
  for (int r : regimes)
    if (r < 0 || r >= spec.regimes()) throw DimensionError("regime index out of range");
  const auto& th = theta.density;
  const int m = spec.regimes();

  return std::visit(
      overloaded{
          [&](const HamiltonAR& f) {
            const double sigma = th[m + f.ar_order];
            double e = y - th[regimes[0]];
            for (int l = 1; l <= f.ar_order; ++l)
              e -= th[m + l - 1] * (ylags[l - 1] - th[regimes[l]]);
            return gaussian_logpdf(e / sigma, sigma);
          },
          [&](const SwitchingARCH& f) {
            const double mu = th[0];
            const double gy = th[1];
            auto residual = [&](int j) {
              const double cur = j == 0 ? y : ylags[j - 1];
              return cur - mu - gy * ylags[j];
            };
            double h2 = 1.0;
            for (int l = 1; l <= f.arch_order; ++l) {
              const double u = residual(l) / th[2 + regimes[l]];
              h2 += th[2 + m + l - 1] * u * u;
            }
            if (!(h2 > 0.0) || !std::isfinite(h2))
              throw NonFiniteError("ARCH variance is not positive and finite");
            const double scale = th[2 + regimes[0]] * std::sqrt(h2);
            const double z = residual(0) / scale;
            if (f.innovation == Innovation::gaussian) return gaussian_logpdf(z, scale);
            return std_t_logpdf(z, th[2 + m + f.arch_order]) - std::log(scale);
          },
          [&](const BounceBack& f) {
            const double sigma = th[m + 1];
            double mean = th[regimes[0]];
            for (int j = 1; j <= f.memory; ++j) mean += th[m] * regimes[j];
            return gaussian_logpdf((y - mean) / sigma, sigma);
          },
          [&](const MSCDWeibull&) {
            if (!(y > 0.0)) throw DomainError("MS-CD durations must be strictly positive");
            const double shape = th[m + 1];
            const double level = th[regimes[0]] + th[m] * ylags[0];
            if (!(level > 0.0) || !std::isfinite(level))
              throw NonFiniteError("Weibull scale is not positive");
            const double log_scale = std::log(level) - std::lgamma(1.0 + 1.0 / shape);
            return weibull_logpdf(y, log_scale, shape);
          },
      },
      spec.family());
}

RowMatrix log_density_matrix(const ModelSpec& spec, const Theta& theta, const SeriesData& data) {
  const int n = data.observations();
  const int ns = spec.states();
  const int m = spec.regimes();
  const int s0 = data.presample;
  const auto& th = theta.density;
  const auto& y = data.y;
  RowMatrix out(n, ns);
  const Eigen::MatrixXi digits = state_digits(spec);

  std::visit(
      overloaded{
          [&](const HamiltonAR& f) {
            const int r = f.ar_order;
            const double sigma = th[m + r];
            const double norm = -kHalfLog2Pi - std::log(sigma);
            const double inv = 1.0 / sigma;
            // dev(k, j) = y_k - mu_j
            Eigen::MatrixXd dev(y.size(), m);
            for (Eigen::Index k = 0; k < y.size(); ++k)
              for (int j = 0; j < m; ++j) dev(k, j) = y[k] - th[j];
            for (int t = 0; t < n; ++t) {
              const int k = s0 + t;
              for (int st = 0; st < ns; ++st) {
                double e = dev(k, digits(st, 0));
                for (int l = 1; l <= r; ++l) e -= th[m + l - 1] * dev(k - l, digits(st, l));
                const double z = e * inv;
                out(t, st) = norm - 0.5 * z * z;
              }
            }
          },
          [&](const SwitchingARCH& f) {
            const int a = f.arch_order;
            Eigen::VectorXd res = Eigen::VectorXd::Zero(y.size());
            for (Eigen::Index k = 1; k < y.size(); ++k) res[k] = y[k] - th[0] - th[1] * y[k - 1];
            const bool student = f.innovation == Innovation::student_t;
            const double nu = student ? th[2 + m + a] : 0.0;
            for (int t = 0; t < n; ++t) {
              const int k = s0 + t;
              for (int st = 0; st < ns; ++st) {
                double h2 = 1.0;
                for (int l = 1; l <= a; ++l) {
                  const double u = res[k - l] / th[2 + digits(st, l)];
                  h2 += th[2 + m + l - 1] * u * u;
                }
                const double scale = th[2 + digits(st, 0)] * std::sqrt(h2);
                const double z = res[k] / scale;
                out(t, st) = student ? std_t_logpdf(z, nu) - std::log(scale)
                                     : gaussian_logpdf(z, scale);
              }
            }
          },
          [&](const BounceBack& f) {
            const double sigma = th[m + 1];
            Eigen::VectorXd mean(ns);
            for (int st = 0; st < ns; ++st) {
              mean[st] = th[digits(st, 0)];
              for (int j = 1; j <= f.memory; ++j) mean[st] += th[m] * digits(st, j);
            }
            for (int t = 0; t < n; ++t)
              for (int st = 0; st < ns; ++st)
                out(t, st) = gaussian_logpdf((y[s0 + t] - mean[st]) / sigma, sigma);
          },
          [&](const MSCDWeibull&) {
            const double shape = th[m + 1];
            const double lg = std::lgamma(1.0 + 1.0 / shape);
            for (int t = 0; t < n; ++t) {
              const int k = s0 + t;
              for (int st = 0; st < ns; ++st) {
                const double level = th[st] + th[m] * y[k - 1];
                if (!(level > 0.0)) throw NonFiniteError("Weibull scale is not positive");
                out(t, st) = weibull_logpdf(y[k], std::log(level) - lg, shape);
              }
            }
          },
      },
      spec.family());
  return out;
}

Eigen::MatrixXd log_density_gradient(const ModelSpec& spec, const Theta& theta,
                                     const SeriesData& data, int t) {
  const int ns = spec.states();
  const int m = spec.regimes();
  const int qd = spec.density_count();
  const int k = data.presample + t;
  const auto& th = theta.density;
  const auto& y = data.y;
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(ns, qd);

  if (const auto* f = std::get_if<HamiltonAR>(&spec.family())) {
    const int r = f->ar_order;
    const double sigma = th[m + r];
    const double s2 = sigma * sigma;
    for (int st = 0; st < ns; ++st) {
      double e = y[k] - th[spec.regime_of(st, 0)];
      for (int l = 1; l <= r; ++l) e -= th[m + l - 1] * (y[k - l] - th[spec.regime_of(st, l)]);
      const double de = -e / s2;  // d log g / d e
      grad(st, spec.regime_of(st, 0)) += -de;
      for (int l = 1; l <= r; ++l) {
        const int reg = spec.regime_of(st, l);
        grad(st, reg) += de * th[m + l - 1];
        grad(st, m + l - 1) = -de * (y[k - l] - th[reg]);
      }
      grad(st, m + r) = -1.0 / sigma + e * e / (s2 * sigma);
    }
    return grad;
  }
  if (std::holds_alternative<MSCDWeibull>(spec.family())) {
    const double beta = th[m];
    const double shape = th[m + 1];
    const double lg = std::lgamma(1.0 + 1.0 / shape);
    const double psi = boost::math::digamma(1.0 + 1.0 / shape);
    for (int st = 0; st < ns; ++st) {
      const double level = th[st] + beta * y[k - 1];
      const double log_scale = std::log(level) - lg;
      const double log_ratio = std::log(y[k]) - log_scale;
      const double zg = std::exp(shape * log_ratio);
      const double d_log_scale = shape * (zg - 1.0);  // d log g / d log(scale)
      grad(st, st) = d_log_scale / level;
      grad(st, m) = d_log_scale * y[k - 1] / level;
      grad(st, m + 1) = 1.0 / shape + log_ratio - zg * log_ratio +
                        d_log_scale * psi / (shape * shape);
    }
    return grad;
  }

  // Central differences in unconstrained coordinates, mapped back through the
  // diagonal transform derivative.
  const Eigen::VectorXd v0 = to_unconstrained(spec, theta);
  const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
  std::vector<double> lags(spec.lags());
  for (int l = 0; l < spec.lags(); ++l) lags[l] = y[k - 1 - l];
  std::vector<int> regs(spec.memory());
  for (int i = 0; i < qd; ++i) {
    const double h = eps * (1.0 + std::abs(v0[i]));
    Eigen::VectorXd vp = v0, vm = v0;
    vp[i] += h;
    vm[i] -= h;
    const Theta tp = from_unconstrained(spec, vp);
    const Theta tm = from_unconstrained(spec, vm);
    const double dtheta = transform_derivative(spec.density_parameters()[i].transform, v0[i]);
    for (int st = 0; st < ns; ++st) {
      for (int l = 0; l < spec.memory(); ++l) regs[l] = spec.regime_of(st, l);
      const double fp = log_g(spec, tp, y[k], lags, regs);
      const double fm = log_g(spec, tm, y[k], lags, regs);
      grad(st, i) = (fp - fm) / (2.0 * h) / dtheta;
    }
  }
  return grad;
}

Eigen::VectorXd weighted_density_gradient(const ModelSpec& spec, const Theta& theta,
                                          const SeriesData& data, const RowMatrix& weights) {
  const int n = data.observations();
  const int ns = spec.states();
  const int m = spec.regimes();
  const int qd = spec.density_count();
  if (weights.rows() != n || weights.cols() != ns)
    throw DimensionError("weight matrix must be n x states");
  const auto& th = theta.density;
  const auto& y = data.y;
  const int s0 = data.presample;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(qd);

  if (const auto* f = std::get_if<HamiltonAR>(&spec.family())) {
    const int r = f->ar_order;
    const double sigma = th[m + r];
    const double s2 = sigma * sigma;
    const Eigen::MatrixXi digits = state_digits(spec);
    for (int t = 0; t < n; ++t) {
      const int k = s0 + t;
      for (int st = 0; st < ns; ++st) {
        const double w = weights(t, st);
        if (w == 0.0) continue;
        double e = y[k] - th[digits(st, 0)];
        for (int l = 1; l <= r; ++l) e -= th[m + l - 1] * (y[k - l] - th[digits(st, l)]);
        const double de = w * e / s2;  // w * d log g / d(-e)
        grad[digits(st, 0)] += de;
        for (int l = 1; l <= r; ++l) {
          const double lagdev = y[k - l] - th[digits(st, l)];
          grad[digits(st, l)] -= de * th[m + l - 1];
          grad[m + l - 1] += de * lagdev;
        }
        grad[m + r] += w * (e * e / s2 - 1.0) / sigma;
      }
    }
    return grad;
  }
  if (std::holds_alternative<MSCDWeibull>(spec.family())) {
    const double beta = th[m];
    const double shape = th[m + 1];
    const double lg = std::lgamma(1.0 + 1.0 / shape);
    const double psi = boost::math::digamma(1.0 + 1.0 / shape);
    for (int t = 0; t < n; ++t) {
      const int k = s0 + t;
      for (int st = 0; st < ns; ++st) {
        const double w = weights(t, st);
        if (w == 0.0) continue;
        const double level = th[st] + beta * y[k - 1];
        const double log_ratio = std::log(y[k]) - std::log(level) + lg;
        const double zg = std::exp(shape * log_ratio);
        const double d_log_scale = shape * (zg - 1.0);
        grad[st] += w * d_log_scale / level;
        grad[m] += w * d_log_scale * y[k - 1] / level;
        grad[m + 1] += w * (1.0 / shape + log_ratio - zg * log_ratio +
                            d_log_scale * psi / (shape * shape));
      }
    }
    return grad;
  }

  const Eigen::VectorXd v0 = to_unconstrained(spec, theta);
  const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
  for (int i = 0; i < qd; ++i) {
    const double h = eps * (1.0 + std::abs(v0[i]));
    Eigen::VectorXd vp = v0, vm = v0;
    vp[i] += h;
    vm[i] -= h;
    const RowMatrix lp = log_density_matrix(spec, from_unconstrained(spec, vp), data);
    const RowMatrix lm = log_density_matrix(spec, from_unconstrained(spec, vm), data);
    double acc = 0.0;
    for (int t = 0; t < n; ++t)
      for (int st = 0; st < ns; ++st)
        if (weights(t, st) != 0.0) acc += weights(t, st) * (lp(t, st) - lm(t, st));
    const double dtheta = transform_derivative(spec.density_parameters()[i].transform, v0[i]);
    grad[i] = acc / (2.0 * h) / dtheta;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

Simulation simulate(const ModelSpec& spec, const Theta& theta, int n, int burn_in,
                    std::uint64_t seed) {
  validate(spec, theta);
  if (n < 1) throw InvalidArgument("simulation length must be positive");
  if (burn_in < 0) throw InvalidArgument("burn-in must be non-negative");
  const int m = spec.regimes();
  const int s = spec.lags();
  const int p = spec.memory();
  const auto& th = theta.density;

  const ExpandedChain base = expand(theta.transition, spec.allowed(), 1);
  const Eigen::VectorXd pi = stationary(base);  // throws on reducible chains

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const Eigen::VectorXd& probs) {
    const double u = unif(rng);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < probs.size(); ++j) {
      acc += probs[j];
      if (u < acc) return static_cast<int>(j);
    }
    for (Eigen::Index j = probs.size() - 1; j >= 0; --j)
      if (probs[j] > 0.0) return static_cast<int>(j);
    return 0;
  };

  // History offset so that lags of the first simulated value are defined.
  const int history = std::max(s, p) + 1;
  const int total = history + burn_in + s + n;
  std::vector<int> reg(total);
  std::vector<double> y(total, 0.0);
  std::vector<double> u(total, 0.0);  // AR innovations or ARCH standardized residuals

  reg[0] = draw(pi);
  for (int t = 1; t < total; ++t) reg[t] = draw(theta.transition.row(reg[t - 1]).transpose());

  std::visit(
      overloaded{
          [&](const HamiltonAR& f) {
            const double sigma = th[m + f.ar_order];
            for (int t = 0; t < total; ++t) {
              double ut = sigma * normal(rng);
              if (t >= history)
                for (int l = 1; l <= f.ar_order; ++l) ut += th[m + l - 1] * u[t - l];
              u[t] = ut;
              y[t] = th[reg[t]] + ut;
            }
          },
          [&](const SwitchingARCH& f) {
            const int a = f.arch_order;
            double arch_sum = 0.0;
            for (int l = 0; l < a; ++l) arch_sum += th[2 + m + l];
            const double u2_unconditional = arch_sum < 1.0 ? 1.0 / (1.0 - arch_sum) : 1.0;
            const bool student = f.innovation == Innovation::student_t;
            const double nu = student ? th[2 + m + a] : 0.0;
            std::student_t_distribution<double> tdist(student ? nu : 3.0);
            const double tscale = student ? std::sqrt((nu - 2.0) / nu) : 1.0;
            const double level = std::abs(th[1]) < 1.0 ? th[0] / (1.0 - th[1]) : th[0];
            for (int t = 0; t < total; ++t) {
              if (t < history) {
                y[t] = level;
                u[t] = std::sqrt(u2_unconditional);
                continue;
              }
              double h2 = 1.0;
              for (int l = 1; l <= a; ++l) h2 += th[2 + m + l - 1] * u[t - l] * u[t - l];
              const double eps = student ? tdist(rng) * tscale : normal(rng);
              u[t] = std::sqrt(h2) * eps;
              y[t] = th[0] + th[1] * y[t - 1] + th[2 + reg[t]] * u[t];
            }
          },
          [&](const BounceBack& f) {
            const double sigma = th[m + 1];
            for (int t = 0; t < total; ++t) {
              double mean = th[reg[t]];
              if (t >= history)
                for (int j = 1; j <= f.memory; ++j) mean += th[m] * reg[t - j];
              y[t] = mean + sigma * normal(rng);
            }
          },
          [&](const MSCDWeibull&) {
            const double shape = th[m + 1];
            const double norm = std::tgamma(1.0 + 1.0 / shape);
            std::weibull_distribution<double> weibull(shape, 1.0);
            double prev = th[reg[0]];
            for (int t = 0; t < total; ++t) {
              const double level = th[reg[t]] + th[m] * prev;
              double draw_eps = weibull(rng) / norm;
              while (!(draw_eps > 0.0)) draw_eps = weibull(rng) / norm;
              y[t] = level * draw_eps;
              prev = y[t];
            }
          },
      },
      spec.family());

  const int keep = s + n;
  Simulation sim;
  sim.data.y.resize(keep);
  sim.regimes.resize(keep);
  for (int i = 0; i < keep; ++i) {
    sim.data.y[i] = y[total - keep + i];
    sim.regimes[i] = reg[total - keep + i];
  }
  sim.data.w.resize(keep, 0);
  sim.data.presample = s;
  return sim;
}

// ---------------------------------------------------------------------------
// Relabeling
// ---------------------------------------------------------------------------

Eigen::VectorXd regime_keys(const ModelSpec& spec, const Theta& theta) {
  const int off = regime_offset(spec.family());
  return theta.density.segment(off, spec.regimes());
}

Theta relabel(const ModelSpec& spec, const Theta& theta, const std::vector<int>& perm) {
  const int m = spec.regimes();
  if (static_cast<int>(perm.size()) != m) throw DimensionError("permutation has wrong length");
  Theta out = theta;
  const int off = regime_offset(spec.family());
  for (int i = 0; i < m; ++i) out.density[off + perm[i]] = theta.density[off + i];
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out.transition(perm[i], perm[j]) = theta.transition(i, j);
  return out;
}

int relabel_state(const ModelSpec& spec, int state, const std::vector<int>& perm) {
  int out = 0;
  for (int l = 0; l < spec.memory(); ++l) out = out * spec.regimes() + perm[spec.regime_of(state, l)];
  return out;
}

Eigen::VectorXd relabel_states(const ModelSpec& spec, const Eigen::VectorXd& xi,
                               const std::vector<int>& perm) {
  Eigen::VectorXd out(xi.size());
  for (int s = 0; s < spec.states(); ++s) out[relabel_state(spec, s, perm)] = xi[s];
  return out;
}

bool mask_preserved(const ModelSpec& spec, const std::vector<int>& perm) {
  const int m = spec.regimes();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      if (spec.allowed()(i, j) != spec.allowed()(perm[i], perm[j])) return false;
  return true;
}

}  // namespace regimeswitch
