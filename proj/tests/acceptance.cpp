// Acceptance driver: prints one PASS/FAIL line per criterion, exits nonzero if
// any criterion fails. Detail lines start with two spaces.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "regimeswitch/errors.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/inference.hpp"
#include "regimeswitch/montecarlo.hpp"
#include "regimeswitch/theory.hpp"

using namespace regimeswitch;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240601;

int failures = 0;

void verdict(int id, bool ok, const std::string& what, double seconds) {
  std::printf("[%s] %d %s (%.1fs)\n", ok ? "PASS" : "FAIL", id, what.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Theta hamilton_dgp() {
  Theta th;
  th.density.resize(7);
  th.density << 1.522, -0.3577, 0.014, -0.058, -0.247, -0.213, 0.7690;
  th.transition.resize(2, 2);
  th.transition << 0.9049, 1 - 0.9049, 1 - 0.7550, 0.7550;
  return th;
}

Theta mscd_dgp() {
  Theta th;
  th.density.resize(4);
  th.density << 0.5, 1.2, 0.05, 0.95;
  th.transition.resize(2, 2);
  th.transition << 0.95, 0.05, 0.05, 0.95;
  return th;
}

const ParameterCoverage& by_name(const CoverageReport& r, const std::string& name) {
  for (const auto& p : r.parameters)
    if (p.name == name) return p;
  throw InvalidArgument("no parameter " + name);
}

bool compare_targets(const CoverageReport& r, const std::map<std::string, double>& targets, double tol) {
  bool ok = true;
  for (const auto& [name, target] : targets) {
    const double c = by_name(r, name).coverage;
    const bool hit = std::abs(c - target) <= tol;
    std::printf("  %-8s coverage %.3f target %.3f%s\n", name.c_str(), c, target, hit ? "" : "  <-- outside");
    ok = ok && hit;
  }
  std::printf("  effective %d of %d, failures %d\n", r.effective, r.replications, r.failures);
  return ok;
}

bool paired_close(const CoverageReport& a, const CoverageReport& b, double tol) {
  bool ok = true;
  for (std::size_t j = 0; j < a.parameters.size(); ++j) {
    const double d = std::abs(a.parameters[j].coverage - b.parameters[j].coverage);
    std::printf("  %-8s |xi - x0| %.3f%s\n", a.parameters[j].name.c_str(), d, d <= tol ? "" : "  <-- too large");
    ok = ok && d <= tol;
  }
  return ok;
}

// Root mean squared error and bias statistics over the first `rows` estimates.
struct Accuracy {
  Eigen::VectorXd rmse, bias, bias_se;
};

Accuracy accuracy(const CoverageReport& r, const Eigen::VectorXd& truth, int rows) {
  const Eigen::MatrixXd e = r.estimates.topRows(rows);
  const Eigen::MatrixXd dev = e.rowwise() - truth.transpose();
  Accuracy a;
  a.rmse = (dev.array().square().colwise().sum() / rows).sqrt().transpose();
  a.bias = dev.colwise().mean().transpose();
  const Eigen::MatrixXd centered = e.rowwise() - e.colwise().mean();
  a.bias_se = (centered.array().square().colwise().sum() / (rows - 1)).sqrt().transpose() / std::sqrt(double(rows));
  return a;
}

// Random instance generator for the oracle checks.
ModelSpec random_spec(std::mt19937_64& rng, int m) {
  switch (rng() % 5) {
    case 0: return ModelSpec(HamiltonAR{0}, m);
    case 1: return ModelSpec(HamiltonAR{1}, m);
    case 2: return ModelSpec(SwitchingARCH{1}, m);
    case 3: return ModelSpec(BounceBack{1}, m);
    default: {
      if (m == 3 && rng() % 2) {
        TransitionMask mask = TransitionMask::Constant(3, 3, true);
        mask(0, 2) = false;
        mask(2, 0) = false;
        return ModelSpec(MSCDWeibull{}, 3, mask);
      }
      return ModelSpec(MSCDWeibull{}, m);
    }
  }
}

Eigen::VectorXd simplex_on(std::mt19937_64& rng, int states, const std::vector<int>& support) {
  const Eigen::VectorXd w = oracle::random_simplex(rng, static_cast<int>(support.size()));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(states);
  for (std::size_t i = 0; i < support.size(); ++i) v[support[i]] = w[static_cast<Eigen::Index>(i)];
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& args) {
  const std::string cmd = "\"" + std::string(CLI_PATH) + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

int main() {
  const ModelSpec hamilton(HamiltonAR{4}, 2);
  const ModelSpec mscd(MSCDWeibull{}, 2);
  const std::vector<CiMethod> pair{CiMethod::opg_xi, CiMethod::opg_x0};
  CoverageOptions copts;
  copts.fit.label_order = LabelOrder::descending;

  // Shared Monte Carlo runs.
  Stopwatch t_ham;
  const auto ham800 = coverage_study(hamilton, hamilton_dgp(), 800, 200, pair, copts, kSeed);
  const double s_ham = t_ham.seconds();
  Stopwatch t_ms;
  CoverageOptions mopts;
  const auto ms800 = coverage_study(mscd, mscd_dgp(), 800, 200, pair, mopts, kSeed);
  const auto ms200 = coverage_study(mscd, mscd_dgp(), 200, 200, {CiMethod::opg_xi}, mopts, kSeed);
  const double s_ms = t_ms.seconds();

  verdict(1,
          compare_targets(ham800[0],
                          {{"p_11", 0.942}, {"p_22", 0.942}, {"gamma_1", 0.945}, {"gamma_2", 0.941},
                           {"gamma_3", 0.950}, {"gamma_4", 0.956}, {"mu_1", 0.939}, {"mu_2", 0.941},
                           {"sigma", 0.930}},
                          0.05),
          "hamilton opg_xi coverage at n=800, R=200 within 0.05 of the published row", s_ham);

  {
    bool ok = compare_targets(ms800[0],
                              {{"p_11", 0.892}, {"p_22", 0.909}, {"mu_1", 0.932}, {"mu_2", 0.949}, {"beta", 0.987},
                               {"gamma", 0.952}},
                              0.06);
    for (std::size_t j = 0; j < ms800[0].parameters.size(); ++j) {
      const double c8 = ms800[0].parameters[j].coverage, c2 = ms200[0].parameters[j].coverage;
      const bool trend = c8 >= c2 - 0.02;
      std::printf("  %-8s n=200 %.3f -> n=800 %.3f%s\n", ms800[0].parameters[j].name.c_str(), c2, c8,
                  trend ? "" : "  <-- trend violated");
      ok = ok && trend;
    }
    verdict(2, ok, "duration model opg_xi coverage at n=800 within 0.06 and no worse than n=200", s_ms);
  }

  {
    std::printf("  hamilton\n");
    const bool a = paired_close(ham800[0], ham800[1], 0.02);
    std::printf("  duration model\n");
    const bool b = paired_close(ms800[0], ms800[1], 0.02);
    verdict(3, a && b, "opg_xi and opg_x0 coverage differ by at most 0.02 on both designs", 0.0);
  }

  {
    Stopwatch t;
    std::mt19937_64 rng(kSeed + 4);
    int passed = 0, total = 0;
    double worst = INFINITY;
    for (int rep = 0; rep < 500; ++rep) {
      const int m = 1 + static_cast<int>(rng() % 3);
      const ModelSpec spec = random_spec(rng, m);
      const Theta th = oracle::random_theta(rng, spec);
      const int n = 1 + static_cast<int>(rng() % 30);
      const SeriesData d = simulate(spec, th, n, 10, rng()).data;
      const int order = minorization(expand(spec, th)).order;
      const std::vector<int> support = minorization(expand(spec, th)).support;
      const int mm = static_cast<int>(rng() % (order + 1));
      const int k = -mm + static_cast<int>(rng() % (n + 1));
      const Eigen::VectorXd mu1 = simplex_on(rng, spec.states(), support);
      const Eigen::VectorXd mu2 = simplex_on(rng, spec.states(), support);
      const MixingCheck c = check_mixing_bound(spec, th, d, k, mm, mu1, mu2);
      ++total;
      if (c.margin >= -1e-12) ++passed;
      worst = std::min(worst, c.margin);
    }
    std::printf("  %d of %d instances satisfy the bound, smallest margin %.3e\n", passed, total, worst);
    verdict(4, passed == total, "forgetting bound holds on 500 random instances", t.seconds());
  }

  {
    Stopwatch t;
    std::mt19937_64 rng(kSeed + 5);
    double worst_ll = 0.0, worst_marg = 0.0;
    int instances = 0;
    for (int rep = 0; rep < 200; ++rep) {
      const int m = 1 + static_cast<int>(rng() % 3);
      const int r = static_cast<int>(rng() % 2);
      const ModelSpec spec(HamiltonAR{r}, m);
      const Theta th = oracle::random_theta(rng, spec);
      const int n = 1 + static_cast<int>(rng() % 8);
      const SeriesData d = simulate(spec, th, n, 20, rng()).data;
      const Eigen::VectorXd init = oracle::random_simplex(rng, spec.states());
      std::vector<double> mu(th.density.data(), th.density.data() + m);
      std::vector<double> gamma(th.density.data() + m, th.density.data() + m + r);
      const double sigma = th.density[m + r];
      const auto e = oracle::enumerate_paths(th.transition, spec.memory(), init, n, [&](int tt, const std::vector<int>& regs) {
        std::vector<double> lags(r);
        for (int l = 0; l < r; ++l) lags[l] = d.y[r + tt - 1 - l];
        return oracle::hamilton_logpdf(d.y[r + tt], lags, regs, mu, gamma, sigma);
      });
      const SmoothOutput sm = smooth(spec, th, d, Distribution{init});
      worst_ll = std::max(worst_ll, std::abs(sm.forward.total - e.loglik));
      worst_marg = std::max(worst_marg, (sm.marginal - e.marginal).cwiseAbs().maxCoeff());
      ++instances;
    }
    std::printf("  %d instances, max |loglik diff| %.2e, max |marginal diff| %.2e\n", instances, worst_ll, worst_marg);
    verdict(5, worst_ll <= 1e-10 && worst_marg <= 1e-10, "filter and smoother match path enumeration", t.seconds());
  }

  {
    Stopwatch t;
    std::mt19937_64 rng(kSeed + 6);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      const int m = 2 + static_cast<int>(rng() % 2);
      const ModelSpec spec = rep % 7 == 6 ? ModelSpec(SwitchingARCH{1, Innovation::student_t}, 2) : random_spec(rng, m);
      const Theta th = oracle::random_theta(rng, spec);
      const SeriesData d = simulate(spec, th, 60 + static_cast<int>(rng() % 60), 50, rng()).data;
      const InitialCondition init = rep % 2 ? InitialCondition(PointMass{static_cast<int>(rng() % spec.states())})
                                            : InitialCondition(Distribution{oracle::random_simplex(rng, spec.states())});
      const Eigen::VectorXd louis = score_louis(spec, th, d, init).total;
      const Eigen::VectorXd fd = oracle::gradient(
          [&](const Eigen::VectorXd& x) { return loglik(spec, from_reported(spec, x), d, init); }, reported(spec, th));
      worst = std::max(worst, (louis - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff());
    }
    double worst_h = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
      const ModelSpec spec = rep % 2 ? ModelSpec(MSCDWeibull{}, 2) : ModelSpec(HamiltonAR{0}, 2);
      const Theta th = oracle::random_theta(rng, spec);
      const SeriesData d = simulate(spec, th, 8, 10, rng()).data;
      const InitialCondition init = Distribution{oracle::random_simplex(rng, spec.states())};
      const LouisHessian lh = louis_hessian_small(spec, th, d, init);
      const Eigen::MatrixXd fd = oracle::hessian(
          [&](const Eigen::VectorXd& v) { return loglik(spec, from_unconstrained(spec, v), d, init); },
          to_unconstrained(spec, th));
      worst_h = std::max(worst_h, (lh.hessian - fd).cwiseAbs().maxCoeff() / std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
    std::printf("  score relative error %.2e over 50 instances, Louis Hessian error %.2e over 10\n", worst, worst_h);
    verdict(6, worst <= 1e-5 && worst_h <= 1e-4, "Louis score and Hessian agree with finite differences", t.seconds());
  }

  {
    Stopwatch t;
    double sum = 0.0;
    int used = 0;
    for (int rep = 0; rep < 20; ++rep) {
      const SeriesData d = simulate(hamilton, hamilton_dgp(), 2000, 800, replication_seed(kSeed + 7, rep)).data;
      const InitialCondition init = PointMass{default_x0(hamilton)};
      const CovarianceEstimate o = opg(hamilton, hamilton_dgp(), d, init);
      const CovarianceEstimate h = hessian_fd(hamilton, hamilton_dgp(), d, init);
      sum += (o.information - h.information).norm() / o.information.norm();
      ++used;
    }
    const double mean = sum / used;
    std::printf("  mean relative Frobenius gap %.4f over %d seeds\n", mean, used);
    verdict(7, mean <= 0.15, "OPG and Hessian information agree at the truth, n=2000", t.seconds());
  }

  {
    Stopwatch t;
    const auto ham200 = coverage_study(hamilton, hamilton_dgp(), 200, 100, {CiMethod::opg_xi}, copts, kSeed + 8);
    const int rows = std::min<int>(100, static_cast<int>(std::min(ham200[0].estimates.rows(), ham800[0].estimates.rows())));
    const Eigen::VectorXd truth = reported(hamilton, hamilton_dgp());
    const Accuracy small = accuracy(ham200[0], truth, rows);
    const Accuracy large = accuracy(ham800[0], truth, rows);
    bool ok = true;
    const auto names = hamilton.parameter_names();
    for (std::size_t j = 0; j < names.size(); ++j) {
      const bool down = large.rmse[j] < small.rmse[j];
      const bool unbiased = std::abs(large.bias[j]) <= 3.0 * large.bias_se[j];
      std::printf("  %-8s rmse %.4f -> %.4f, bias %+.4f (se %.4f)%s\n", names[j].c_str(), small.rmse[j], large.rmse[j],
                  large.bias[j], large.bias_se[j], down && unbiased ? "" : "  <-- fails");
      ok = ok && down && unbiased;
    }
    std::printf("  %d replications per sample size\n", rows);
    verdict(8, ok && rows == 100, "RMSE falls from n=200 to n=800 and n=800 bias is within 3 MC SE", t.seconds());
  }

  {
    Stopwatch t;
    const fs::path dir = fs::temp_directory_path() / "regimeswitch_acceptance";
    fs::create_directories(dir);
    const fs::path data = fs::path(DATA_DIR);
    const std::string model = q(data / "hamilton_model.json"), theta = q(data / "hamilton_theta.json");
    const fs::path series = dir / "series.csv";
    bool ok = run("simulate --model " + model + " --theta " + theta + " --n 400 --seed 5 --out " + q(series)) == 0;
    const std::vector<std::pair<std::string, std::string>> cmds{
        {"simulate --model " + model + " --theta " + theta + " --n 400 --seed 5 --out ", ".csv"},
        {"fit --model " + model + " --data " + q(series) + " --starts 3 --seed 2 --out ", ".json"},
        {"fit --model " + model + " --data " + q(series) + " --paper-format --out ", ".csv"},
        {"coverage --model " + model + " --theta " + theta + " --n 200 --reps 8 --seed 3 --out ", ".csv"},
        {"diagnose-mixing --model " + model + " --theta " + theta + " --data " + q(series) + " --m 2 --out ", ".csv"},
        {"diagnose --model " + model + " --theta " + theta + " --out ", ".json"},
    };
    for (std::size_t i = 0; i < cmds.size() && ok; ++i) {
      const fs::path a = dir / ("a" + std::to_string(i) + cmds[i].second);
      const fs::path b = dir / ("b" + std::to_string(i) + cmds[i].second);
      ok = run(cmds[i].first + q(a)) == 0 && run(cmds[i].first + q(b)) == 0;
      const bool same = ok && slurp(a) == slurp(b) && !slurp(a).empty();
      std::printf("  %-16s %s\n", cmds[i].first.substr(0, cmds[i].first.find(' ')).c_str(), same ? "identical" : "differs");
      ok = ok && same;
    }
    if (ok) {
      const fs::path fitjson = dir / "a1.json", sm_a = dir / "sm_a.csv", sm_b = dir / "sm_b.csv";
      ok = run("smooth --fit " + q(fitjson) + " --data " + q(series) + " --out " + q(sm_a)) == 0 &&
           run("smooth --fit " + q(fitjson) + " --data " + q(series) + " --out " + q(sm_b)) == 0 &&
           slurp(sm_a) == slurp(sm_b);
      std::printf("  %-16s %s\n", "smooth", ok ? "identical" : "differs");
    }
    verdict(9, ok, "repeated CLI runs with one seed give byte-identical files", t.seconds());
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
