#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regimeswitch/model.hpp"

namespace regimeswitch {

enum class ScoreMethod { louis, finite_difference };

// Scores are with respect to the reported parameters (density values and free
// p_ij). `total_unconstrained` is the same gradient in optimizer coordinates.
struct ScoreReport {
  Eigen::VectorXd total;
  Eigen::VectorXd total_unconstrained;
  Eigen::MatrixXd per_obs;  // n x q, empty for the Louis method
  ScoreMethod method = ScoreMethod::louis;
};

struct CovarianceEstimate {
  std::string kind;                       // "opg" or "hessian"
  Eigen::MatrixXd information;            // q x q, reported coordinates
  Eigen::MatrixXd information_unconstrained;
  Eigen::MatrixXd cov;                    // information^{-1} / n
  Eigen::VectorXd se;
  double condition_number = 0.0;
  int observations = 0;
};

// Louis identity in unconstrained coordinates. When `xi_logits` is set, the
// init must be a Distribution and the gradient with respect to its
// multinomial logits (last expanded state as reference) is appended.
Eigen::VectorXd louis_gradient(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                               const InitialCondition& init, bool xi_logits = false,
                               double* loglik = nullptr);

ScoreReport score_louis(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                        const InitialCondition& init);
ScoreReport score_fd(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                     const InitialCondition& init);

CovarianceEstimate opg(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                       const InitialCondition& init);
CovarianceEstimate hessian_fd(const ModelSpec& spec, const Theta& theta, const SeriesData& data,
                              const InitialCondition& init);

// Hessian of the log-likelihood in unconstrained coordinates by central
// second differences.
Eigen::MatrixXd loglik_hessian_unconstrained(const ModelSpec& spec, const Theta& theta,
                                             const SeriesData& data, const InitialCondition& init);

// Generic central differences; steps scale as eps^(1/3) and eps^(1/4) times
// (1 + |x_i|).
Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x);
Eigen::MatrixXd central_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& x);

struct Interval {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool degenerate = false;  // zero standard error
};

double normal_quantile(double p);
std::vector<Interval> confidence_intervals(const std::vector<std::string>& names,
                                           const Eigen::VectorXd& estimate,
                                           const CovarianceEstimate& cov, double level);

// Second-derivative Louis identity by enumerating every regime path, in
// unconstrained coordinates: hessian = expected + variance.
struct LouisHessian {
  Eigen::MatrixXd expected;  // E[d2 log p(Y, X) | Y]
  Eigen::MatrixXd variance;  // Var[d log p(Y, X) | Y]
  Eigen::MatrixXd hessian;
  long long paths = 0;
};

LouisHessian louis_hessian_small(const ModelSpec& spec, const Theta& theta,
                                 const SeriesData& data, const InitialCondition& init);

// Maps a gradient in unconstrained coordinates to reported coordinates.
Eigen::VectorXd to_reported_gradient(const ModelSpec& spec, const Eigen::VectorXd& v,
                                     const Eigen::VectorXd& grad_v);

}  // namespace regimeswitch
