#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "regimeswitch/errors.hpp"
#include "regimeswitch/io.hpp"

using namespace regimeswitch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "regimeswitch_io_test";
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

TransitionMask band() {
  TransitionMask mask = TransitionMask::Constant(3, 3, true);
  mask(0, 2) = false;
  mask(2, 0) = false;
  return mask;
}

}  // namespace

TEST_CASE("model specs round trip through JSON") {
  const std::vector<ModelSpec> specs{ModelSpec(HamiltonAR{4}, 2), ModelSpec(SwitchingARCH{2, Innovation::student_t}, 3),
                                     ModelSpec(BounceBack{2}, 2), ModelSpec(MSCDWeibull{}, 3, band())};
  for (const auto& s : specs) {
    const ModelSpec back = model_from_json(Json::parse(to_json(s).dump()));
    CHECK(back.parameter_names() == s.parameter_names());
    CHECK(back.allowed() == s.allowed());
    CHECK(family_name(back.family()) == family_name(s.family()));
  }
  CHECK_THROWS_AS(model_from_json(Json::parse(R"({"family": "garch", "regimes": 2})")), FormatError);
  CHECK_THROWS_AS(model_from_json(Json::parse(R"({"family": "hamilton_ar"})")), FormatError);
}

TEST_CASE("theta round trips exactly, with or without the matrix") {
  std::mt19937_64 rng(3);
  const ModelSpec spec(MSCDWeibull{}, 3, band());
  const Theta th = oracle::random_theta(rng, spec);
  const Json j = Json::parse(to_json(spec, th).dump());
  const Theta back = theta_from_json(spec, j);
  CHECK(back.density == th.density);
  CHECK(back.transition == th.transition);
  Json no_matrix = j;
  no_matrix.erase("transition");
  const Theta rebuilt = theta_from_json(spec, no_matrix);
  CHECK((rebuilt.transition - th.transition).cwiseAbs().maxCoeff() < 1e-15);
  Json missing = j;
  missing["parameters"].erase("beta");
  CHECK_THROWS_AS(theta_from_json(spec, missing), FormatError);
}

TEST_CASE("fit documents carry the table layout and rebuild the model") {
  const ModelSpec spec(MSCDWeibull{}, 2);
  Theta th;
  th.density.resize(4);
  th.density << 0.5, 1.2, 0.05, 0.95;
  th.transition.resize(2, 2);
  th.transition << 0.95, 0.05, 0.05, 0.95;
  const SeriesData d = simulate(spec, th, 300, 100, 1).data;
  FitOptions o;
  o.n_starts = 2;
  const FitResult r = fit(spec, d, EstimateXi{}, o);
  const Json j = Json::parse(to_json(r).dump());
  for (const char* key : {"estimates", "se", "loglik", "opg", "hessian", "cov", "init", "starts"})
    CHECK(j.contains(key));
  CHECK(j["estimates"].size() == 6);
  const FitSummary s = fit_summary_from_json(j);
  CHECK(s.theta.density == r.theta_hat.density);
  CHECK(s.theta.transition == r.theta_hat.transition);
  CHECK(std::get<Distribution>(s.init).xi == std::get<Distribution>(r.init_used).xi);

  const std::string table = fit_table_csv(r, 3);
  CHECK(table.rfind("parameter,Estimate,S.D.\n", 0) == 0);
  CHECK(table.find("Log-likelihood,") != std::string::npos);
  CHECK(table.find("mu_1," + fixed(r.theta_hat.density[0], 3)) != std::string::npos);
}

TEST_CASE("series CSV round trips bit for bit") {
  std::mt19937_64 rng(2);
  const ModelSpec spec(HamiltonAR{2}, 2);
  const Theta th = oracle::random_theta(rng, spec);
  const SeriesData d = simulate(spec, th, 50, 10, 3).data;
  const fs::path p = scratch("series.csv");
  write_atomic(p, series_csv(d));
  const SeriesData back = read_series_csv(spec, p);
  CHECK(back.y == d.y);
  CHECK(back.presample == 2);
}

TEST_CASE("malformed CSV input is reported") {
  const ModelSpec spec(HamiltonAR{0}, 2);
  const fs::path p = scratch("bad.csv");
  write(p, "x\n1\n2\n");
  CHECK_THROWS_AS(read_series_csv(spec, p), FormatError);
  write(p, "y\n1\nabc\n");
  CHECK_THROWS_AS(read_series_csv(spec, p), FormatError);
  write(p, "y,w1\n1,2\n3\n");
  CHECK_THROWS_AS(read_series_csv(spec, p), FormatError);
  write(p, "y,w1\n1,2\n3,4\n\n");
  const SeriesData ok = read_series_csv(spec, p);
  CHECK(ok.y.size() == 2);
  CHECK(ok.w.cols() == 1);
  CHECK_THROWS_AS(read_series_csv(spec, scratch("absent.csv")), InvalidArgument);
  write(p, "y\n1.5\n-2\n");
  CHECK_THROWS_AS(read_series_csv(ModelSpec(MSCDWeibull{}, 2), p), DomainError);
}

TEST_CASE("fixed decimals and regime probability layout") {
  CHECK(fixed(0.94251, 3) == "0.943");
  CHECK(fixed(-1.0, 6) == "-1.000000");
  Eigen::MatrixXd probs(2, 2);
  probs << 0.25, 0.75, 1.0, 0.0;
  CHECK(regime_probability_csv(probs) == "t,prob_regime_1,prob_regime_2\n1,0.250000,0.750000\n2,1.000000,0.000000\n");
}

TEST_CASE("atomic writes replace the target and leave no temporaries") {
  const fs::path p = scratch("atomic.txt");
  write_atomic(p, "first");
  write_atomic(p, "second");
  std::ifstream in(p);
  std::string s((std::istreambuf_iterator<char>(in)), {});
  CHECK(s == "second");
  int temporaries = 0;
  for (const auto& e : fs::directory_iterator(p.parent_path()))
    if (e.path().filename().string().find(".tmp") != std::string::npos) ++temporaries;
  CHECK(temporaries == 0);
}

TEST_CASE("expanded chain dump lists tuples with one-based regimes") {
  Eigen::MatrixXd P(2, 2);
  P << 0.9, 0.1, 0.2, 0.8;
  const Json j = to_json(expand(P, 2));
  CHECK(j["states"] == 4);
  CHECK(j["tuples"][2] == Json::array({2, 1}));
  CHECK(j["transition"][0][2] == 0.1);
}
