#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "regimeswitch/errors.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/theory.hpp"

using namespace regimeswitch;

namespace {

Eigen::VectorXd point(int states, int s) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(states);
  v[s] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("omega for a first-order chain is sigma ratio") {
  const ModelSpec spec(MSCDWeibull{}, 2);
  Theta th;
  th.density.resize(4);
  th.density << 0.5, 1.2, 0.05, 0.95;
  th.transition.resize(2, 2);
  th.transition << 0.95, 0.05, 0.05, 0.95;
  const SeriesData d = simulate(spec, th, 30, 10, 1).data;
  const OmegaSeries om = omega_series(spec, th, d);
  CHECK(om.order == 1);
  for (double w : om.values) CHECK(w == doctest::Approx(0.05 / 0.95));
}

TEST_CASE("identical regime densities leave only the kernel ratio") {
  const ModelSpec spec(HamiltonAR{1}, 2);
  Theta th;
  th.density = Eigen::Vector4d(0.3, 0.3, 0.5, 1.0);
  th.transition.resize(2, 2);
  th.transition << 0.7, 0.3, 0.4, 0.6;
  const MinorizationConstants mc = minorization(expand(spec, th));
  REQUIRE(mc.order == 2);
  const double w = omega_window(spec, th, Eigen::Vector2d(1.0, -0.4));
  CHECK(w == doctest::Approx(mc.sigma_minus / mc.sigma_plus).epsilon(1e-12));
}

TEST_CASE("omega shrinks toward zero as the window observation grows") {
  const ModelSpec spec(HamiltonAR{1}, 2);
  Theta th;
  th.density = Eigen::Vector4d(1.0, -1.0, 0.5, 0.8);
  th.transition.resize(2, 2);
  th.transition << 0.8, 0.2, 0.3, 0.7;
  const MinorizationConstants mc = minorization(expand(spec, th));
  double prev = 1.0;
  for (double y : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    const double w = omega_window(spec, th, Eigen::Vector2d(y, -y));
    CHECK(w <= prev + 1e-15);
    CHECK(w <= mc.sigma_minus / mc.sigma_plus + 1e-15);
    prev = w;
  }
  CHECK(prev < 1e-10);
}

TEST_CASE("grid omega never exceeds any single-point omega") {
  std::mt19937_64 rng(3);
  const ModelSpec spec(BounceBack{1}, 2);
  std::vector<Theta> grid;
  for (int i = 0; i < 4; ++i) grid.push_back(oracle::random_theta(rng, spec));
  const Eigen::VectorXd window = Eigen::VectorXd::Constant(1, 0.4);
  const double wg = omega_window(spec, grid, window);
  for (const auto& th : grid) CHECK(wg <= omega_window(spec, th, window) + 1e-15);
  CHECK(wg >= 0.0);
}

TEST_CASE("exact conditional filter matches enumeration") {
  std::mt19937_64 rng(6);
  const ModelSpec spec(HamiltonAR{1}, 2);
  for (int rep = 0; rep < 10; ++rep) {
    const Theta th = oracle::random_theta(rng, spec);
    const int n = 1 + static_cast<int>(rng() % 6);
    const SeriesData d = simulate(spec, th, n, 10, rng()).data;
    const Eigen::VectorXd init = oracle::random_simplex(rng, spec.states());
    const RowMatrix cf = conditional_filter_exact(spec, th, d, Distribution{init});
    std::vector<double> mu{th.density[0], th.density[1]}, gamma{th.density[2]};
    for (int k = 1; k <= n; ++k) {
      // filtered law at step k only conditions on the first k observations
      const auto e = oracle::enumerate_paths(th.transition, 2, init, k, [&](int t, const std::vector<int>& regs) {
        return oracle::hamilton_logpdf(d.y[1 + t], {d.y[t]}, regs, mu, gamma, th.density[3]);
      });
      CHECK((cf.row(k - 1).transpose() - e.marginal.row(k - 1).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("mixed conditional with horizon matches enumeration on the truncated data") {
  std::mt19937_64 rng(8);
  const ModelSpec spec(BounceBack{1}, 3);
  const Theta th = oracle::random_theta(rng, spec);
  const SeriesData d = simulate(spec, th, 6, 5, 2).data;
  const Eigen::VectorXd mu = oracle::random_simplex(rng, spec.states());
  // each starting state is conditioned on separately, then weighted by mu
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(4, spec.states());
  for (int x = 0; x < spec.states(); ++x) {
    const auto e = oracle::enumerate_paths(th.transition, 2, point(spec.states(), x), 4,
                                           [&](int t, const std::vector<int>& regs) {
                                             return log_g(spec, th, d.y[t], {}, regs);
                                           });
    want += mu[x] * e.marginal;
  }
  for (int steps = 1; steps <= 4; ++steps) {
    const Eigen::VectorXd got = mixed_conditional(spec, th, d, mu, steps, 4);
    CHECK((got - want.row(steps - 1).transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(mixed_conditional(spec, th, d, mu, 0, 4) == mu);
}

TEST_CASE("mixing bound holds on random small instances") {
  std::mt19937_64 rng(12);
  int checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const int m = 2 + static_cast<int>(rng() % 2);
    const ModelSpec spec = rep % 2 ? ModelSpec(HamiltonAR{1}, m) : ModelSpec(MSCDWeibull{}, m);
    const Theta th = oracle::random_theta(rng, spec);
    const SeriesData d = simulate(spec, th, 5 + static_cast<int>(rng() % 20), 5, rng()).data;
    const int n = d.observations();
    const int mm = static_cast<int>(rng() % 3);
    const int k = -mm + static_cast<int>(rng() % (n + 1));
    const Eigen::VectorXd mu1 = oracle::random_simplex(rng, spec.states());
    const Eigen::VectorXd mu2 = point(spec.states(), static_cast<int>(rng() % spec.states()));
    const MixingCheck mc = check_mixing_bound(spec, th, d, k, mm, mu1, mu2);
    CHECK(mc.passed);
    CHECK(mc.margin >= -1e-12);
    CHECK(mc.tv_distance >= 0.0);
    CHECK(mc.tv_distance <= 1.0 + 1e-12);
    ++checked;
  }
  CHECK(checked == 60);
}

TEST_CASE("bound is one before the first complete block and tv vanishes for equal inits") {
  const ModelSpec spec(HamiltonAR{1}, 2);
  std::mt19937_64 rng(1);
  const Theta th = oracle::random_theta(rng, spec);
  const SeriesData d = simulate(spec, th, 10, 5, 1).data;
  const MixingCheck early = check_mixing_bound(spec, th, d, -2 + 1, 2, point(4, 0), point(4, 3));
  CHECK(early.bound == 1.0);
  const Eigen::VectorXd mu = oracle::random_simplex(rng, 4);
  const MixingCheck same = check_mixing_bound(spec, th, d, 5, 2, mu, mu);
  CHECK(same.tv_distance == 0.0);
}

TEST_CASE("identical transition rows couple after one step") {
  const ModelSpec spec(MSCDWeibull{}, 2);
  Theta th;
  th.density.resize(4);
  th.density << 0.5, 1.2, 0.05, 0.95;
  th.transition.resize(2, 2);
  th.transition << 0.3, 0.7, 0.3, 0.7;
  const SeriesData d = simulate(spec, th, 10, 5, 4).data;
  const MixingCheck c = check_mixing_bound(spec, th, d, 1, 0, point(2, 0), point(2, 1));
  CHECK(c.tv_distance < 1e-15);
}

TEST_CASE("inits off the stationary support are refused") {
  const ModelSpec spec(HamiltonAR{0}, 3);
  Theta th;
  th.density = Eigen::Vector4d(0.0, 1.0, 2.0, 1.0);
  th.transition.resize(3, 3);
  th.transition << 0.7, 0.3, 0.0, 0.4, 0.6, 0.0, 0.5, 0.25, 0.25;
  const SeriesData d = simulate(spec, th, 10, 5, 4).data;
  CHECK_THROWS_AS(check_mixing_bound(spec, th, d, 2, 0, point(3, 0), point(3, 2)), DomainError);
  CHECK_THROWS_AS(check_mixing_bound(spec, th, d, 20, 0, point(3, 0), point(3, 1)), DimensionError);
}

TEST_CASE("first-order forgetting curve decays at the deterministic rate") {
  const ModelSpec spec(MSCDWeibull{}, 2);
  Theta th;
  th.density.resize(4);
  th.density << 0.5, 1.2, 0.05, 0.95;
  th.transition.resize(2, 2);
  th.transition << 0.8, 0.2, 0.3, 0.7;
  const SeriesData d = simulate(spec, th, 25, 5, 9).data;
  const ForgettingCurve fc = forgetting_curve(spec, th, d, 0, point(2, 0), point(2, 1));
  CHECK(fc.bound_holds);
  REQUIRE(fc.points.size() == 26);
  const double rate = 1.0 - 0.2 / 0.8;
  for (const auto& p : fc.points) {
    CHECK(p.bound == doctest::Approx(std::pow(rate, p.k)).epsilon(1e-12));
    CHECK(p.tv_distance <= p.bound + 1e-12);
  }
  // every point agrees with the standalone check
  for (int k : {0, 3, 17, 25}) {
    const MixingCheck c = check_mixing_bound(spec, th, d, k, 0, point(2, 0), point(2, 1));
    CHECK(c.tv_distance == doctest::Approx(fc.points[k].tv_distance).epsilon(1e-12));
    CHECK(c.bound == doctest::Approx(fc.points[k].bound).epsilon(1e-12));
  }
}
