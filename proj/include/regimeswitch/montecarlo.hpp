#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regimeswitch/estimate.hpp"
#include "regimeswitch/model.hpp"

namespace regimeswitch {

enum class CiMethod { opg_xi, opg_x0, hessian };

std::string ci_method_name(CiMethod method);
CiMethod parse_ci_method(const std::string& name);

struct ParameterCoverage {
  std::string name;
  double truth = 0.0;
  int hits = 0;
  double coverage = 0.0;
  double mc_se = 0.0;  // sqrt(c (1 - c) / R_effective)
  double mean = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;  // sample sd of the estimates / sqrt(R_effective)
  double rmse = 0.0;
};

struct CoverageReport {
  CiMethod method = CiMethod::opg_xi;
  Theta theta_star;
  int n = 0;
  int replications = 0;
  int failures = 0;
  int effective = 0;
  std::uint64_t seed = 0;
  bool failure_flag = false;  // failures above 2% of R
  std::vector<ParameterCoverage> parameters;
  std::vector<std::string> failure_reasons;  // "replication r: code"
  Eigen::MatrixXd estimates;                 // effective x q, replication order
};

struct CoverageOptions {
  int burn_in = 800;
  FitOptions fit = [] {
    FitOptions o;
    o.n_starts = 2;
    return o;
  }();
  bool start_at_truth = true;  // add theta* as an extra start
};

// Seed of replication r under a master seed.
std::uint64_t replication_seed(std::uint64_t master, int r);

// Expanded state with every regime equal to regime 2 (or 1 when M = 1), used
// as x0 for the opg_x0 intervals.
int default_x0(const ModelSpec& spec);

// One report per method, all computed from the same simulated series and fits.
std::vector<CoverageReport> coverage_study(const ModelSpec& spec, const Theta& theta_star, int n,
                                           int replications, const std::vector<CiMethod>& methods,
                                           const CoverageOptions& opts, std::uint64_t seed);

CoverageReport coverage_experiment(const ModelSpec& spec, const Theta& theta_star, int n,
                                   int replications, CiMethod method, const CoverageOptions& opts,
                                   std::uint64_t seed);

struct PairedCoverage {
  CoverageReport opg_xi;
  CoverageReport opg_x0;
  std::vector<double> difference;  // coverage(opg_xi) - coverage(opg_x0)
};

PairedCoverage compare_ci_methods(const ModelSpec& spec, const Theta& theta_star, int n,
                                  int replications, std::uint64_t seed,
                                  const CoverageOptions& opts = {});

}  // namespace regimeswitch
