#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace regimeswitch {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Density families
//
// Each family fixes how many lagged observations (s) and how many regimes
// (p: current plus p-1 lagged) the conditional density reads. Regimes are
// 0-based everywhere inside the library; names and CSV headers are 1-based.
// ---------------------------------------------------------------------------

enum class Innovation { gaussian, student_t };

// y_k = mu_{r_k} + u_k,  u_k = sum_l gamma_l u_{k-l} + sigma e_k.
struct HamiltonAR {
  int ar_order = 0;
};

// y_k = mu + gamma_y y_{k-1} + sigma_{r_k} h_k e_k,
// h_k^2 = 1 + sum_l arch_l u_{k-l}^2,  u_j = (y_j - mu - gamma_y y_{j-1}) / sigma_{r_j}.
// The ARCH intercept is normalized to one so that the regime scales are
// identified.
struct SwitchingARCH {
  int arch_order = 1;
  Innovation innovation = Innovation::gaussian;
};

// y_k = mu_{r_k} + lambda * sum_{j=1..memory} r_{k-j} + sigma e_k, with the
// lagged regimes entering through their 0-based numeric codes.
struct BounceBack {
  int memory = 1;
};

// y_k = (mu_{r_k} + beta y_{k-1}) e_k, e_k standardized Weibull with mean one
// and shape gamma.
struct MSCDWeibull {};

using DensityFamily = std::variant<HamiltonAR, SwitchingARCH, BounceBack, MSCDWeibull>;

int lag_count(const DensityFamily& family);
int regime_memory(const DensityFamily& family);
std::string family_name(const DensityFamily& family);

enum class Transform { identity, log, log_minus_two };

struct ParameterInfo {
  std::string name;
  Transform transform = Transform::identity;
  // Box in unconstrained coordinates used by the optimizer.
  double lower = -15.0;
  double upper = 15.0;
};

using TransitionMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct TransitionEntry {
  int row = 0;
  int col = 0;
};

// Family + regime count + structural-zero mask. `allowed(i, j)` is false for
// entries fixed at zero.
class ModelSpec {
 public:
  ModelSpec(DensityFamily family, int regimes);
  ModelSpec(DensityFamily family, int regimes, TransitionMask allowed);

  const DensityFamily& family() const { return family_; }
  int regimes() const { return regimes_; }
  int lags() const { return lag_count(family_); }
  int memory() const { return regime_memory(family_); }
  int states() const { return states_; }
  const TransitionMask& allowed() const { return allowed_; }

  const std::vector<ParameterInfo>& density_parameters() const { return density_params_; }
  int density_count() const { return static_cast<int>(density_params_.size()); }

  // Free transition probabilities in reporting order. Row i reports every
  // allowed entry except its reference column (the last allowed off-diagonal
  // column); rows with a single allowed entry report nothing.
  const std::vector<TransitionEntry>& free_transitions() const { return free_transitions_; }
  // Reference column per row, -1 when the row has a single allowed entry.
  const std::vector<int>& reference_columns() const { return reference_; }

  int parameter_count() const {
    return density_count() + static_cast<int>(free_transitions_.size());
  }
  std::vector<std::string> parameter_names() const;
  int parameter_index(std::string_view name) const;  // -1 when absent

  // Regime at lag `lag` (0 = current) of an expanded state index. Expanded
  // states are ordered lexicographically with the current regime as the most
  // significant digit.
  int regime_of(int state, int lag = 0) const;

 private:
  DensityFamily family_;
  int regimes_;
  int states_;
  TransitionMask allowed_;
  std::vector<ParameterInfo> density_params_;
  std::vector<TransitionEntry> free_transitions_;
  std::vector<int> reference_;
};

struct Theta {
  Eigen::VectorXd density;     // ordered as ModelSpec::density_parameters()
  Eigen::MatrixXd transition;  // M x M row-stochastic, masked entries zero
};

struct PointMass {
  int state = 0;  // expanded state index of X_0
};
struct Distribution {
  Eigen::VectorXd xi;  // probabilities over expanded states of X_0
};
using InitialCondition = std::variant<PointMass, Distribution>;

// Observed series. The first `presample` entries condition the likelihood
// and are not scored.
struct SeriesData {
  Eigen::VectorXd y;
  Eigen::MatrixXd w;  // rows aligned with y; may have zero columns
  int presample = 0;

  int observations() const { return static_cast<int>(y.size()) - presample; }
};

SeriesData make_series(const ModelSpec& spec, Eigen::VectorXd y,
                       Eigen::MatrixXd w = Eigen::MatrixXd());

void validate(const ModelSpec& spec, const Theta& theta);
void validate(const ModelSpec& spec, const SeriesData& data);
void validate(const ModelSpec& spec, const InitialCondition& init);

double parameter(const ModelSpec& spec, const Theta& theta, std::string_view name);

// Reported parameterization: density values followed by free p_ij.
Eigen::VectorXd reported(const ModelSpec& spec, const Theta& theta);
Theta from_reported(const ModelSpec& spec, const Eigen::VectorXd& values);

Eigen::VectorXd to_unconstrained(const ModelSpec& spec, const Theta& theta);
Theta from_unconstrained(const ModelSpec& spec, const Eigen::VectorXd& v);
// d reported / d unconstrained, block diagonal.
Eigen::MatrixXd transform_jacobian(const ModelSpec& spec, const Eigen::VectorXd& v);

// Multinomial logit for a probability vector over `size` cells, last cell is
// the reference.
Eigen::VectorXd simplex_to_logits(const Eigen::VectorXd& probs);
Eigen::VectorXd logits_to_simplex(const Eigen::VectorXd& logits);

// Conditional log density of y given its s lags (ylags[0] = y_{k-1}) and the
// p-tuple of regimes (regimes[0] = current).
double log_g(const ModelSpec& spec, const Theta& theta, double y,
             std::span<const double> ylags, std::span<const int> regimes,
             std::span<const double> w = {});

// n_obs x states matrix of log g for every scored observation and expanded
// state.
RowMatrix log_density_matrix(const ModelSpec& spec, const Theta& theta,
                                   const SeriesData& data);

// Gradient of log g at scored observation t with respect to the density
// parameters (constrained coordinates); one row per expanded state.
Eigen::MatrixXd log_density_gradient(const ModelSpec& spec, const Theta& theta,
                                     const SeriesData& data, int t);
bool has_analytic_gradient(const DensityFamily& family);

// Sum over scored observations t and states s of weights(t, s) times the
// gradient of log g with respect to the density parameters (constrained).
Eigen::VectorXd weighted_density_gradient(const ModelSpec& spec, const Theta& theta,
                                          const SeriesData& data, const RowMatrix& weights);

struct Simulation {
  SeriesData data;
  std::vector<int> regimes;  // aligned with data.y
};

Simulation simulate(const ModelSpec& spec, const Theta& theta, int n, int burn_in,
                    std::uint64_t seed);

// Label switching support.
bool relabeling_invariant(const DensityFamily& family);
// Per-regime ordering key: mu for mean-switching families, sigma for SWARCH.
Eigen::VectorXd regime_keys(const ModelSpec& spec, const Theta& theta);
// new label of old regime i is perm[i].
Theta relabel(const ModelSpec& spec, const Theta& theta, const std::vector<int>& perm);
Eigen::VectorXd relabel_states(const ModelSpec& spec, const Eigen::VectorXd& xi,
                               const std::vector<int>& perm);
int relabel_state(const ModelSpec& spec, int state, const std::vector<int>& perm);
bool mask_preserved(const ModelSpec& spec, const std::vector<int>& perm);

}  // namespace regimeswitch
