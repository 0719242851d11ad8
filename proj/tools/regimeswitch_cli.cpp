#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regimeswitch/chain.hpp"
#include "regimeswitch/errors.hpp"
#include "regimeswitch/estimate.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/io.hpp"
#include "regimeswitch/montecarlo.hpp"
#include "regimeswitch/parallel.hpp"
#include "regimeswitch/theory.hpp"

namespace fs = std::filesystem;
using namespace regimeswitch;

namespace {

std::string extension(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

// .json or .csv, anything else is a usage error.
std::string output_kind(const fs::path& p) {
  const std::string e = extension(p);
  if (e != ".json" && e != ".csv") throw CLI::ValidationError("--out", "extension must be .json or .csv");
  return e;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

fs::path sidecar(const fs::path& out) {
  fs::path p = out;
  return p.replace_extension(".json");
}

InitSpec parse_init(const std::string& text, const ModelSpec& spec, const Json& model) {
  if (text == "estimate") return EstimateXi{};
  if (text == "xi") {
    if (model.contains("xi")) {
      Distribution d;
      d.xi.resize(model["xi"].size());
      for (std::size_t i = 0; i < model["xi"].size(); ++i) d.xi[i] = model["xi"][i].get<double>();
      return d;
    }
    return Distribution{Eigen::VectorXd::Constant(spec.states(), 1.0 / spec.states())};
  }
  if (text.rfind("x0=", 0) == 0) {
    try {
      std::size_t used = 0;
      const int state = std::stoi(text.substr(3), &used);
      if (used == text.size() - 3) return PointMass{state};
    } catch (const std::exception&) {
    }
  }
  throw CLI::ValidationError("--init", "expected xi, x0=<state> or estimate");
}

LabelOrder parse_order(const std::string& s) {
  if (s == "ascending") return LabelOrder::ascending;
  if (s == "descending") return LabelOrder::descending;
  return LabelOrder::as_is;
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov regime-switching estimation and diagnostics"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (REGIMESWITCH_THREADS wins)")
      ->check(CLI::PositiveNumber);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit on a CSV series");
  std::string fit_model, fit_data, fit_out, fit_init = "estimate", fit_order = "ascending";
  int fit_starts = 10, fit_iter = 500;
  std::uint64_t fit_seed = 0;
  bool paper_format = false, no_hessian = false;
  fit_cmd->add_option("--model", fit_model)->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--data", fit_data)->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit_out)->required();
  fit_cmd->add_option("--init", fit_init, "xi | x0=<state> | estimate");
  fit_cmd->add_option("--starts", fit_starts)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit_seed);
  fit_cmd->add_option("--max-iter", fit_iter)->check(CLI::PositiveNumber);
  fit_cmd->add_option("--label-order", fit_order)
      ->check(CLI::IsMember({"ascending", "descending", "as-is"}));
  fit_cmd->add_flag("--paper-format", paper_format, "3 decimals in CSV tables");
  fit_cmd->add_flag("--no-hessian", no_hessian, "skip the finite-difference Hessian");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "draw a series from a parameterized model");
  std::string sim_model, sim_theta, sim_out, sim_regimes;
  int sim_n = 800, sim_burn = 800;
  std::uint64_t sim_seed = 0;
  sim_cmd->add_option("--model", sim_model)->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--theta", sim_theta)->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--n", sim_n)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--burn-in", sim_burn)->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--seed", sim_seed);
  sim_cmd->add_option("--out", sim_out)->required();
  sim_cmd->add_option("--regimes-out", sim_regimes, "CSV with the simulated regime path");

  // coverage
  auto* cov_cmd = app.add_subcommand("coverage", "Monte Carlo coverage of 95% intervals");
  std::string cov_model, cov_theta, cov_out, cov_ci = "opg-xi";
  int cov_n = 800, cov_reps = 200, cov_burn = 800, cov_starts = 2;
  std::uint64_t cov_seed = 0;
  bool cov_paper = false;
  cov_cmd->add_option("--model", cov_model)->required()->check(CLI::ExistingFile);
  cov_cmd->add_option("--theta", cov_theta)->required()->check(CLI::ExistingFile);
  cov_cmd->add_option("--n", cov_n)->check(CLI::PositiveNumber);
  cov_cmd->add_option("--reps", cov_reps)->check(CLI::PositiveNumber);
  cov_cmd->add_option("--ci", cov_ci)
      ->check(CLI::IsMember({"opg-xi", "opg-x0", "hessian", "opg_xi", "opg_x0"}));
  cov_cmd->add_option("--burn-in", cov_burn)->check(CLI::NonNegativeNumber);
  cov_cmd->add_option("--starts", cov_starts)->check(CLI::PositiveNumber);
  cov_cmd->add_option("--seed", cov_seed);
  cov_cmd->add_option("--out", cov_out)->required();
  cov_cmd->add_flag("--paper-format", cov_paper, "3 decimals in the CSV table");

  // smooth
  auto* smooth_cmd = app.add_subcommand("smooth", "smoothed regime probabilities from a fit");
  std::string sm_fit, sm_data, sm_out;
  smooth_cmd->add_option("--fit", sm_fit)->required()->check(CLI::ExistingFile);
  smooth_cmd->add_option("--data", sm_data)->required()->check(CLI::ExistingFile);
  smooth_cmd->add_option("--out", sm_out)->required();

  // diagnose-mixing
  auto* mix_cmd = app.add_subcommand("diagnose-mixing", "forgetting curve of the conditional chain");
  std::string mx_model, mx_theta, mx_data, mx_out;
  int mx_m = 0, mx_mu1 = -1, mx_mu2 = -1;
  mix_cmd->add_option("--model", mx_model)->required()->check(CLI::ExistingFile);
  mix_cmd->add_option("--theta", mx_theta)->required()->check(CLI::ExistingFile);
  mix_cmd->add_option("--data", mx_data)->required()->check(CLI::ExistingFile);
  mix_cmd->add_option("--out", mx_out)->required();
  mix_cmd->add_option("--m", mx_m, "time index of the initial state is -m")
      ->check(CLI::NonNegativeNumber);
  mix_cmd->add_option("--mu1", mx_mu1, "initial state of the first chain (default: first on the support)");
  mix_cmd->add_option("--mu2", mx_mu2, "initial state of the second chain (default: last on the support)");

  // diagnose
  auto* diag_cmd = app.add_subcommand("diagnose", "dump the expanded chain as JSON");
  std::string dg_model, dg_theta, dg_out;
  diag_cmd->add_option("--model", dg_model)->required()->check(CLI::ExistingFile);
  diag_cmd->add_option("--theta", dg_theta)->required()->check(CLI::ExistingFile);
  diag_cmd->add_option("--out", dg_out)->required();

  try {
    app.parse(argc, argv);
    for (const auto* out : {&fit_out, &sim_out, &cov_out, &sm_out, &mx_out, &dg_out})
      if (!out->empty()) output_kind(*out);
    if (!sim_regimes.empty() && extension(sim_regimes) != ".csv")
      throw CLI::ValidationError("--regimes-out", "extension must be .csv");
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (threads > 0) set_thread_count(threads);

  try {
    if (fit_cmd->parsed()) {
      const Json model = read_json(fit_model);
      const ModelSpec spec = model_from_json(model);
      InitSpec init;
      try {
        init = parse_init(fit_init, spec, model);
      } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
      }
      const SeriesData data = read_series_csv(spec, fit_data);
      FitOptions opts;
      opts.n_starts = fit_starts;
      opts.max_iterations = fit_iter;
      opts.seed = fit_seed;
      opts.label_order = parse_order(fit_order);
      opts.compute_hessian = !no_hessian;
      const FitResult fr = fit(spec, data, init, opts);
      if (extension(fit_out) == ".json")
        write_atomic(fit_out, dump(to_json(fr)));
      else
        write_atomic(fit_out, fit_table_csv(fr, paper_format ? 3 : 6));
    } else if (sim_cmd->parsed()) {
      const ModelSpec spec = model_from_json(read_json(sim_model));
      const Theta theta = theta_from_json(spec, read_json(sim_theta));
      const Simulation sim = simulate(spec, theta, sim_n, sim_burn, sim_seed);
      if (extension(sim_out) == ".csv") {
        write_atomic(sim_out, series_csv(sim.data));
      } else {
        Json j;
        j["y"] = std::vector<double>(sim.data.y.data(), sim.data.y.data() + sim.data.y.size());
        std::vector<int> regimes;
        for (int r : sim.regimes) regimes.push_back(r + 1);
        j["regimes"] = regimes;
        j["presample"] = sim.data.presample;
        write_atomic(sim_out, dump(j));
      }
      if (!sim_regimes.empty()) {
        std::string csv = "t,regime\n";
        for (std::size_t t = 0; t < sim.regimes.size(); ++t)
          csv += std::to_string(t + 1) + "," + std::to_string(sim.regimes[t] + 1) + "\n";
        write_atomic(sim_regimes, csv);
      }
    } else if (cov_cmd->parsed()) {
      const ModelSpec spec = model_from_json(read_json(cov_model));
      const Theta theta = theta_from_json(spec, read_json(cov_theta));
      CoverageOptions opts;
      opts.burn_in = cov_burn;
      opts.fit.n_starts = cov_starts;
      const CoverageReport rep =
          coverage_experiment(spec, theta, cov_n, cov_reps, parse_ci_method(cov_ci), opts, cov_seed);
      if (extension(cov_out) == ".csv") {
        write_atomic(cov_out, coverage_csv({rep}, cov_paper ? 3 : 6));
        write_atomic(sidecar(cov_out), dump(to_json(rep)));
      } else {
        write_atomic(cov_out, dump(to_json(rep)));
      }
    } else if (smooth_cmd->parsed()) {
      const FitSummary fs_ = fit_summary_from_json(read_json(sm_fit));
      const SeriesData data = read_series_csv(fs_.spec, sm_data);
      const SmoothOutput sm = smooth(fs_.spec, fs_.theta, data, fs_.init);
      if (extension(sm_out) == ".csv") {
        write_atomic(sm_out, regime_probability_csv(sm.regime_marginal));
      } else {
        Json j;
        j["loglik"] = sm.forward.total;
        Json rows = Json::array();
        for (Eigen::Index t = 0; t < sm.regime_marginal.rows(); ++t) {
          Json row = Json::array();
          for (Eigen::Index r = 0; r < sm.regime_marginal.cols(); ++r) row.push_back(sm.regime_marginal(t, r));
          rows.push_back(row);
        }
        j["regime_marginal"] = rows;
        write_atomic(sm_out, dump(j));
      }
    } else if (mix_cmd->parsed()) {
      const ModelSpec spec = model_from_json(read_json(mx_model));
      const Theta theta = theta_from_json(spec, read_json(mx_theta));
      const SeriesData data = read_series_csv(spec, mx_data);
      const MinorizationConstants mc = minorization(expand(spec, theta));
      const int a = mx_mu1 >= 0 ? mx_mu1 : mc.support.front();
      const int b = mx_mu2 >= 0 ? mx_mu2 : mc.support.back();
      if (a >= spec.states() || b >= spec.states())
        throw InvalidArgument("initial state out of range");
      Eigen::VectorXd mu1 = Eigen::VectorXd::Zero(spec.states());
      Eigen::VectorXd mu2 = mu1;
      mu1[a] = 1.0;
      mu2[b] = 1.0;
      const ForgettingCurve curve = forgetting_curve(spec, theta, data, mx_m, mu1, mu2);
      Json summary;
      summary["passed"] = curve.bound_holds;
      summary["monotone"] = curve.monotone;
      summary["order"] = mc.order;
      summary["sigma_minus"] = mc.sigma_minus;
      summary["sigma_plus"] = mc.sigma_plus;
      summary["m"] = mx_m;
      summary["mu1_state"] = a;
      summary["mu2_state"] = b;
      summary["points"] = curve.points.size();
      if (extension(mx_out) == ".csv") {
        write_atomic(mx_out, forgetting_csv(curve));
        write_atomic(sidecar(mx_out), dump(summary));
      } else {
        Json pts = Json::array();
        for (const auto& p : curve.points) pts.push_back({{"k", p.k}, {"tv_distance", p.tv_distance}, {"bound", p.bound}});
        summary["curve"] = pts;
        write_atomic(mx_out, dump(summary));
      }
    } else if (diag_cmd->parsed()) {
      const ModelSpec spec = model_from_json(read_json(dg_model));
      const Theta theta = theta_from_json(spec, read_json(dg_theta));
      const ExpandedChain chain = expand(spec, theta);
      Json j = to_json(chain);
      try {
        const MinorizationConstants mc = minorization(chain);
        j["minorization"] = {{"order", mc.order},
                             {"sigma_minus", mc.sigma_minus},
                             {"sigma_plus", mc.sigma_plus},
                             {"support", mc.support}};
      } catch (const Error& e) {
        j["minorization"] = {{"error", e.code()}};
      }
      if (extension(dg_out) == ".json") {
        write_atomic(dg_out, dump(j));
      } else {
        std::string csv;
        for (Eigen::Index i = 0; i < chain.transition.rows(); ++i) {
          for (Eigen::Index c = 0; c < chain.transition.cols(); ++c)
            csv += (c ? "," : "") + fixed(chain.transition(i, c), 6);
          csv += "\n";
        }
        write_atomic(dg_out, csv);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: format_error: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
