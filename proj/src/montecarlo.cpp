#include "regimeswitch/montecarlo.hpp"

#include <cmath>
#include <optional>
#include <random>

#include "regimeswitch/errors.hpp"
#include "regimeswitch/inference.hpp"
#include "regimeswitch/parallel.hpp"

namespace regimeswitch {

namespace {

struct Replication {
  bool fitted = false;
  std::string fit_error;
  Eigen::VectorXd estimate;
  std::vector<std::optional<Eigen::VectorXd>> se;  // per method
  std::vector<std::string> se_error;
};

LabelOrder order_of(const ModelSpec& spec, const Theta& theta) {
  if (!relabeling_invariant(spec.family())) return LabelOrder::as_is;
  const Eigen::VectorXd keys = regime_keys(spec, theta);
  bool asc = true, desc = true;
  for (Eigen::Index i = 1; i < keys.size(); ++i) {
    asc = asc && keys[i - 1] < keys[i];
    desc = desc && keys[i - 1] > keys[i];
  }
  if (asc) return LabelOrder::ascending;
  if (desc) return LabelOrder::descending;
  return LabelOrder::as_is;
}

}  // namespace

std::string ci_method_name(CiMethod method) {
  switch (method) {
    case CiMethod::opg_xi: return "opg_xi";
    case CiMethod::opg_x0: return "opg_x0";
    case CiMethod::hessian: return "hessian";
  }
  return "opg_xi";
}

CiMethod parse_ci_method(const std::string& name) {
  if (name == "opg_xi" || name == "opg-xi") return CiMethod::opg_xi;
  if (name == "opg_x0" || name == "opg-x0") return CiMethod::opg_x0;
  if (name == "hessian") return CiMethod::hessian;
  throw InvalidArgument("unknown CI method " + name);
}

std::uint64_t replication_seed(std::uint64_t master, int r) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(r), 0x5eedu};
  std::mt19937_64 rng(seq);
  return rng();
}

int default_x0(const ModelSpec& spec) {
  const int regime = std::min(1, spec.regimes() - 1);
  int state = 0;
  for (int l = 0; l < spec.memory(); ++l) state = state * spec.regimes() + regime;
  return state;
}

std::vector<CoverageReport> coverage_study(const ModelSpec& spec, const Theta& theta_star, int n,
                                           int replications, const std::vector<CiMethod>& methods,
                                           const CoverageOptions& opts, std::uint64_t seed) {
  validate(spec, theta_star);
  if (replications < 1) throw InvalidArgument("replication count must be at least 1");
  if (n < 1) throw InvalidArgument("sample size must be positive");
  if (methods.empty()) throw InvalidArgument("no CI method requested");

  FitOptions fo = opts.fit;
  fo.estimate_xi = true;
  fo.label_order = order_of(spec, theta_star);
  fo.compute_opg = false;
  fo.compute_hessian = false;
  for (CiMethod m : methods) {
    if (m == CiMethod::opg_xi) fo.compute_opg = true;
    if (m == CiMethod::hessian) fo.compute_hessian = true;
  }
  if (opts.start_at_truth) fo.extra_starts.insert(fo.extra_starts.begin(), theta_star);
  const int x0 = default_x0(spec);
  const std::size_t nm = methods.size();

  std::vector<Replication> reps(replications);
  parallel_for(replications, [&](std::size_t r) {
    Replication& rep = reps[r];
    rep.se.assign(nm, std::nullopt);
    rep.se_error.assign(nm, "");
    const std::uint64_t rs = replication_seed(seed, static_cast<int>(r));
    FitResult fr;
    try {
      const Simulation sim = simulate(spec, theta_star, n, opts.burn_in, rs);
      FitOptions local = fo;
      local.seed = rs;
      fr = fit(spec, sim.data, EstimateXi{}, local);
    } catch (const Error& e) {
      rep.fit_error = e.code();
      return;
    }
    rep.fitted = true;
    rep.estimate = reported(spec, fr.theta_hat);
    for (std::size_t k = 0; k < nm; ++k) {
      const std::optional<CovarianceEstimate>* slot = nullptr;
      std::optional<CovarianceEstimate> x0_cov;
      std::string err;
      switch (methods[k]) {
        case CiMethod::opg_xi: slot = &fr.opg; break;
        case CiMethod::hessian: slot = &fr.hessian; break;
        case CiMethod::opg_x0:
          try {
            x0_cov = opg(spec, fr.theta_hat, fr.data, PointMass{x0});
          } catch (const Error& e) {
            err = e.code();
          }
          slot = &x0_cov;
          break;
      }
      if (slot->has_value() && (*slot)->se.allFinite()) {
        rep.se[k] = (*slot)->se;
      } else {
        const auto it = fr.covariance_errors.find(methods[k] == CiMethod::hessian ? "hessian" : "opg");
        if (err.empty() && it != fr.covariance_errors.end())
          err = it->second.substr(0, it->second.find(':'));
        rep.se_error[k] = err.empty() ? "non_finite_error" : err;
      }
    }
  });

  const Eigen::VectorXd truth = reported(spec, theta_star);
  const auto names = spec.parameter_names();
  const double z = normal_quantile(0.975);
  const int q = spec.parameter_count();

  std::vector<CoverageReport> out;
  for (std::size_t k = 0; k < nm; ++k) {
    CoverageReport rep;
    rep.method = methods[k];
    rep.theta_star = theta_star;
    rep.n = n;
    rep.replications = replications;
    rep.seed = seed;
    std::vector<int> used;
    for (int r = 0; r < replications; ++r) {
      const Replication& x = reps[r];
      if (!x.fitted) {
        rep.failure_reasons.push_back("replication " + std::to_string(r) + ": " + x.fit_error);
        continue;
      }
      if (!x.se[k]) {
        rep.failure_reasons.push_back("replication " + std::to_string(r) + ": " + x.se_error[k]);
        continue;
      }
      used.push_back(r);
    }
    rep.effective = static_cast<int>(used.size());
    rep.failures = replications - rep.effective;
    rep.failure_flag = rep.failures > 0.02 * replications;
    rep.estimates.resize(rep.effective, q);
    for (int i = 0; i < rep.effective; ++i) rep.estimates.row(i) = reps[used[i]].estimate.transpose();

    for (int j = 0; j < q; ++j) {
      ParameterCoverage pc;
      pc.name = names[j];
      pc.truth = truth[j];
      for (int r : used) {
        const double est = reps[r].estimate[j];
        const double se = (*reps[r].se[k])[j];
        if (std::abs(est - truth[j]) <= z * se) ++pc.hits;
      }
      if (rep.effective > 0) {
        const Eigen::VectorXd col = rep.estimates.col(j);
        const double re = rep.effective;
        pc.coverage = pc.hits / re;
        pc.mc_se = std::sqrt(pc.coverage * (1.0 - pc.coverage) / re);
        pc.mean = col.mean();
        pc.bias = pc.mean - truth[j];
        pc.rmse = std::sqrt((col.array() - truth[j]).square().mean());
        const double var = rep.effective > 1 ? (col.array() - pc.mean).square().sum() / (re - 1.0) : 0.0;
        pc.bias_se = std::sqrt(var / re);
      }
      rep.parameters.push_back(pc);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

CoverageReport coverage_experiment(const ModelSpec& spec, const Theta& theta_star, int n,
                                   int replications, CiMethod method, const CoverageOptions& opts,
                                   std::uint64_t seed) {
  return coverage_study(spec, theta_star, n, replications, {method}, opts, seed).front();
}

PairedCoverage compare_ci_methods(const ModelSpec& spec, const Theta& theta_star, int n,
                                  int replications, std::uint64_t seed,
                                  const CoverageOptions& opts) {
  auto reports = coverage_study(spec, theta_star, n, replications,
                                {CiMethod::opg_xi, CiMethod::opg_x0}, opts, seed);
  PairedCoverage out;
  out.opg_xi = std::move(reports[0]);
  out.opg_x0 = std::move(reports[1]);
  for (std::size_t j = 0; j < out.opg_xi.parameters.size(); ++j)
    out.difference.push_back(out.opg_xi.parameters[j].coverage - out.opg_x0.parameters[j].coverage);
  return out;
}

}  // namespace regimeswitch
