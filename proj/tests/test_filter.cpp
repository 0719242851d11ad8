#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "regimeswitch/errors.hpp"
#include "regimeswitch/filter.hpp"

using namespace regimeswitch;

namespace {

struct Case {
  ModelSpec spec{HamiltonAR{}, 1};
  Theta theta;
  SeriesData data;
  Eigen::VectorXd init;  // over expanded states
};

Case random_case(std::mt19937_64& rng, int n) {
  const int m = 1 + static_cast<int>(rng() % 3);
  const int r = static_cast<int>(rng() % 2);  // p = r + 1 <= 2
  Case c;
  c.spec = ModelSpec(HamiltonAR{r}, m);
  c.theta = oracle::random_theta(rng, c.spec);
  c.data = simulate(c.spec, c.theta, n, 20, rng()).data;
  c.init = oracle::random_simplex(rng, c.spec.states());
  return c;
}

oracle::Enumeration brute(const Case& c) {
  const int m = c.spec.regimes();
  const int r = c.spec.lags();
  std::vector<double> mu(c.theta.density.data(), c.theta.density.data() + m);
  std::vector<double> gamma(c.theta.density.data() + m, c.theta.density.data() + m + r);
  const double sigma = c.theta.density[m + r];
  return oracle::enumerate_paths(c.theta.transition, c.spec.memory(), c.init, c.data.observations(),
                                 [&](int t, const std::vector<int>& regs) {
                                   std::vector<double> lags(r);
                                   for (int l = 0; l < r; ++l) lags[l] = c.data.y[r + t - 1 - l];
                                   return oracle::hamilton_logpdf(c.data.y[r + t], lags, regs, mu, gamma, sigma);
                                 });
}

}  // namespace

TEST_CASE("filter and smoother agree with path enumeration") {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const Case c = random_case(rng, n);
    const oracle::Enumeration e = brute(c);
    const SmoothOutput sm = smooth(c.spec, c.theta, c.data, Distribution{c.init});
    CHECK(std::abs(sm.forward.total - e.loglik) < 1e-10);
    CHECK((sm.marginal - e.marginal).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("single regime likelihood is a plain Gaussian sum") {
  const ModelSpec spec(HamiltonAR{0}, 1);
  Theta th;
  th.density = Eigen::Vector2d(0.3, 1.7);
  th.transition = Eigen::MatrixXd::Ones(1, 1);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.3, 1.7);
  Eigen::VectorXd y(50);
  for (auto& v : y) v = z(rng);
  double want = 0.0;
  for (double v : y) want += -0.5 * std::log(2 * std::numbers::pi) - std::log(1.7) - 0.5 * std::pow((v - 0.3) / 1.7, 2);
  CHECK(loglik(spec, th, make_series(spec, y), PointMass{0}) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("point-mass distribution equals the point-mass likelihood") {
  std::mt19937_64 rng(7);
  const Case c = random_case(rng, 40);
  for (int x = 0; x < c.spec.states(); ++x) {
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(c.spec.states());
    xi[x] = 1.0;
    CHECK(loglik(c.spec, c.theta, c.data, Distribution{xi}) == loglik(c.spec, c.theta, c.data, PointMass{x}));
  }
}

TEST_CASE("mixture likelihood lies between point-mass extremes") {
  std::mt19937_64 rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const Case c = random_case(rng, 30);
    double lo = INFINITY, hi = -INFINITY;
    for (int x = 0; x < c.spec.states(); ++x) {
      const double l = loglik(c.spec, c.theta, c.data, PointMass{x});
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
    const double mix = loglik(c.spec, c.theta, c.data, Distribution{c.init});
    CHECK(mix >= lo - 1e-12);
    CHECK(mix <= hi + 1e-12);
  }
}

TEST_CASE("one observation likelihood by hand") {
  const ModelSpec spec(HamiltonAR{0}, 2);
  Theta th;
  th.density = Eigen::Vector3d(-1.0, 2.0, 0.8);
  th.transition.resize(2, 2);
  th.transition << 0.7, 0.3, 0.4, 0.6;
  const SeriesData d = make_series(spec, Eigen::VectorXd::Constant(1, 0.5));
  auto g = [](double y, double mu) {
    return std::exp(-0.5 * std::pow((y - mu) / 0.8, 2)) / (0.8 * std::sqrt(2 * std::numbers::pi));
  };
  CHECK(loglik(spec, th, d, PointMass{1}) == doctest::Approx(std::log(0.4 * g(0.5, -1) + 0.6 * g(0.5, 2))).epsilon(1e-14));
}

TEST_CASE("probability rows and pairwise slices are consistent") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const Case c = random_case(rng, 60);
    const SmoothOutput sm = smooth(c.spec, c.theta, c.data, Distribution{c.init});
    const FilterOutput& f = sm.forward;
    const int n = c.data.observations();
    CHECK((f.predicted.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((f.filtered.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((sm.marginal.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(f.obs_loglik.sum() == doctest::Approx(f.total).epsilon(1e-14));
    REQUIRE(static_cast<int>(sm.pairwise.size()) == n - 1);
    for (int k = 1; k < n; ++k) {
      const Eigen::MatrixXd& pw = sm.pairwise[k - 1];
      CHECK(std::abs(pw.sum() - 1.0) < 1e-12);
      CHECK((pw.rowwise().sum().transpose() - sm.marginal.row(k - 1)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((pw.colwise().sum() - sm.marginal.row(k)).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(sm.transition_counts.sum() == doctest::Approx(n));
    CHECK((sm.marginal.row(n - 1) - f.filtered.row(n - 1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(sm.initial.sum() - 1.0) < 1e-12);
    CHECK(sm.regime_marginal.cols() == c.spec.regimes());
  }
}

TEST_CASE("scaling every density shifts the likelihood and leaves probabilities unchanged") {
  std::mt19937_64 rng(15);
  const Case c = random_case(rng, 50);
  const ExpandedChain chain = expand(c.spec, c.theta);
  const RowMatrix L = log_density_matrix(c.spec, c.theta, c.data);
  const RowMatrix shifted = (L.array() - 700.0).matrix();  // far below exp underflow
  const SmoothOutput a = forward_backward(chain, L, Distribution{c.init});
  const SmoothOutput b = forward_backward(chain, shifted, Distribution{c.init});
  CHECK(b.forward.total == doctest::Approx(a.forward.total - 700.0 * c.data.observations()).epsilon(1e-12));
  CHECK((a.forward.filtered - b.forward.filtered).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.marginal - b.marginal).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("iid regimes: smoothing adds nothing at the last step") {
  const ModelSpec spec(HamiltonAR{0}, 2);
  Theta th;
  th.density = Eigen::Vector3d(-1.0, 1.0, 1.0);
  th.transition.resize(2, 2);
  th.transition << 0.3, 0.7, 0.3, 0.7;
  std::mt19937_64 rng(2);
  const SeriesData d = simulate(spec, th, 25, 0, 5).data;
  const SmoothOutput sm = smooth(spec, th, d, PointMass{0});
  CHECK((sm.marginal.row(24) - sm.forward.filtered.row(24)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("impossible observations raise underflow") {
  const ModelSpec spec(HamiltonAR{0}, 1);
  Theta th;
  th.density = Eigen::Vector2d(0.0, 1.0);
  th.transition = Eigen::MatrixXd::Ones(1, 1);
  const ExpandedChain chain = expand(spec, th);
  RowMatrix L = RowMatrix::Zero(3, 1);
  L(1, 0) = -INFINITY;
  CHECK_THROWS_AS(forward_filter(chain, L, PointMass{0}), NumericalUnderflowError);
}

TEST_CASE("uniform over lags spreads a regime over its lagged tuples") {
  const ModelSpec spec(HamiltonAR{1}, 3);
  const Distribution d = uniform_over_lags(spec, 2);
  CHECK(d.xi.sum() == doctest::Approx(1.0));
  for (int s = 0; s < spec.states(); ++s) CHECK(d.xi[s] == (spec.regime_of(s) == 2 ? doctest::Approx(1.0 / 3) : doctest::Approx(0.0)));
}
