#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "regimeswitch/chain.hpp"
#include "regimeswitch/estimate.hpp"
#include "regimeswitch/montecarlo.hpp"
#include "regimeswitch/theory.hpp"

namespace regimeswitch {

using Json = nlohmann::ordered_json;

Json to_json(const ModelSpec& spec);
ModelSpec model_from_json(const Json& j);

// {"parameters": {name: value, ...}, "transition": [[...]]}; the transition
// matrix may be omitted when every free p_ij is listed.
Json to_json(const ModelSpec& spec, const Theta& theta);
Theta theta_from_json(const ModelSpec& spec, const Json& j);

Json to_json(const InitialCondition& init);
InitialCondition init_from_json(const Json& j);

Json to_json(const CovarianceEstimate& cov, const std::vector<std::string>& names);
Json to_json(const FitResult& fit);
// Rebuilds spec, data-independent estimates and init of a fit.
struct FitSummary {
  ModelSpec spec{HamiltonAR{}, 1};
  Theta theta;
  InitialCondition init = PointMass{0};
};
FitSummary fit_summary_from_json(const Json& j);

Json to_json(const CoverageReport& report);
Json to_json(const ExpandedChain& chain);

Json read_json(const std::filesystem::path& path);

// CSV with header `y[,w1,w2,...]`.
SeriesData read_series_csv(const ModelSpec& spec, const std::filesystem::path& path);
std::string series_csv(const SeriesData& data);

// Coverage table: one row per report, one column per parameter.
std::string coverage_csv(const std::vector<CoverageReport>& reports, int decimals = 6);
std::string fit_table_csv(const FitResult& fit, int decimals = 6);
std::string regime_probability_csv(const Eigen::MatrixXd& probs);
std::string forgetting_csv(const ForgettingCurve& curve);

std::string fixed(double value, int decimals);

// Writes through a temporary sibling and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace regimeswitch
