#include "regimeswitch/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "regimeswitch/errors.hpp"

namespace regimeswitch {

namespace {

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd matrix_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw FormatError(what + " must be a non-empty array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw FormatError(what + " rows differ in length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw FormatError(what + " entries must be numbers");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from(const Json& j, const std::string& what) {
  if (!j.is_array()) throw FormatError(what + " must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError(what + " entries must be numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

template <class T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("missing field \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("field \"") + key + "\" has the wrong type");
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(line) + ": \"" + cell + "\" is not a number");
  }
}

}  // namespace

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

Json to_json(const ModelSpec& spec) {
  Json j;
  j["family"] = family_name(spec.family());
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, HamiltonAR>) j["ar_order"] = f.ar_order;
        if constexpr (std::is_same_v<F, SwitchingARCH>) {
          j["arch_order"] = f.arch_order;
          j["innovation"] = f.innovation == Innovation::gaussian ? "gaussian" : "student_t";
        }
        if constexpr (std::is_same_v<F, BounceBack>) j["memory"] = f.memory;
      },
      spec.family());
  j["regimes"] = spec.regimes();
  Json mask = Json::array();
  for (int i = 0; i < spec.regimes(); ++i) {
    Json row = Json::array();
    for (int c = 0; c < spec.regimes(); ++c) row.push_back(static_cast<bool>(spec.allowed()(i, c)));
    mask.push_back(row);
  }
  j["allowed"] = mask;
  return j;
}

ModelSpec model_from_json(const Json& j) {
  const std::string family = field<std::string>(j, "family");
  DensityFamily f;
  if (family == "hamilton_ar") {
    f = HamiltonAR{j.value("ar_order", 0)};
  } else if (family == "switching_arch") {
    const std::string inn = j.value("innovation", std::string("gaussian"));
    if (inn != "gaussian" && inn != "student_t") throw FormatError("unknown innovation " + inn);
    f = SwitchingARCH{j.value("arch_order", 1),
                      inn == "gaussian" ? Innovation::gaussian : Innovation::student_t};
  } else if (family == "bounce_back") {
    f = BounceBack{j.value("memory", 1)};
  } else if (family == "mscd_weibull") {
    f = MSCDWeibull{};
  } else {
    throw FormatError("unknown family " + family);
  }
  const int m = field<int>(j, "regimes");
  if (m < 1) throw InvalidArgument("regime count must be at least 1");
  TransitionMask mask = TransitionMask::Constant(m, m, true);
  if (j.contains("allowed")) {
    const Json& a = j["allowed"];
    if (!a.is_array() || static_cast<int>(a.size()) != m) throw FormatError("allowed must be M x M");
    for (int i = 0; i < m; ++i) {
      if (!a[i].is_array() || static_cast<int>(a[i].size()) != m)
        throw FormatError("allowed must be M x M");
      for (int c = 0; c < m; ++c) {
        if (!a[i][c].is_boolean()) throw FormatError("allowed entries must be booleans");
        mask(i, c) = a[i][c].get<bool>();
      }
    }
  }
  return ModelSpec(f, m, mask);
}

Json to_json(const ModelSpec& spec, const Theta& theta) {
  Json params;
  const auto names = spec.parameter_names();
  const Eigen::VectorXd values = reported(spec, theta);
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = values[i];
  Json j;
  j["parameters"] = params;
  j["transition"] = matrix_json(theta.transition);
  return j;
}

Theta theta_from_json(const ModelSpec& spec, const Json& j) {
  if (!j.contains("parameters") || !j["parameters"].is_object())
    throw FormatError("theta needs a \"parameters\" object");
  const Json& p = j["parameters"];
  Theta theta;
  theta.density.resize(spec.density_count());
  for (int i = 0; i < spec.density_count(); ++i) {
    const std::string& name = spec.density_parameters()[i].name;
    if (!p.contains(name) || !p[name].is_number()) throw FormatError("missing parameter " + name);
    theta.density[i] = p[name].get<double>();
  }
  if (j.contains("transition")) {
    theta.transition = matrix_from(j["transition"], "transition");
    if (theta.transition.rows() != spec.regimes() || theta.transition.cols() != spec.regimes())
      throw DimensionError("transition matrix must be M x M");
  } else {
    Eigen::VectorXd values(spec.parameter_count());
    values.head(spec.density_count()) = theta.density;
    const auto names = spec.parameter_names();
    for (int i = spec.density_count(); i < spec.parameter_count(); ++i) {
      if (!p.contains(names[i]) || !p[names[i]].is_number())
        throw FormatError("missing parameter " + names[i]);
      values[i] = p[names[i]].get<double>();
    }
    theta = from_reported(spec, values);
  }
  validate(spec, theta);
  return theta;
}

Json to_json(const InitialCondition& init) {
  Json j;
  if (const auto* pm = std::get_if<PointMass>(&init))
    j["state"] = pm->state;
  else
    j["xi"] = vector_json(std::get<Distribution>(init).xi);
  return j;
}

InitialCondition init_from_json(const Json& j) {
  if (j.contains("state")) return PointMass{field<int>(j, "state")};
  if (j.contains("xi")) return Distribution{vector_from(j["xi"], "xi")};
  throw FormatError("initial condition needs \"state\" or \"xi\"");
}

Json to_json(const CovarianceEstimate& cov, const std::vector<std::string>& names) {
  Json j;
  j["kind"] = cov.kind;
  j["observations"] = cov.observations;
  j["condition_number"] = cov.condition_number;
  Json se;
  for (std::size_t i = 0; i < names.size(); ++i) se[names[i]] = cov.se[i];
  j["se"] = se;
  j["information"] = matrix_json(cov.information);
  j["cov"] = matrix_json(cov.cov);
  return j;
}

Json to_json(const FitResult& fit) {
  const auto names = fit.spec.parameter_names();
  const Eigen::VectorXd est = reported(fit.spec, fit.theta_hat);
  const CovarianceEstimate* cov = fit.covariance();
  Json j;
  j["model"] = to_json(fit.spec);
  Json estimates;
  for (std::size_t i = 0; i < names.size(); ++i) estimates[names[i]] = est[i];
  j["estimates"] = estimates;
  if (cov) {
    Json se;
    for (std::size_t i = 0; i < names.size(); ++i) se[names[i]] = cov->se[i];
    j["se"] = se;
    j["cov"] = matrix_json(cov->cov);
    j["se_method"] = cov->kind;
  } else {
    j["se"] = nullptr;
  }
  j["loglik"] = fit.loglik;
  j["observations"] = fit.data.observations();
  j["transition"] = matrix_json(fit.theta_hat.transition);
  j["init"] = to_json(fit.init_used);
  j["xi_estimated"] = fit.xi_estimated;
  j["converged"] = fit.converged;
  j["score_norm"] = fit.score_norm;
  j["opg"] = fit.opg ? to_json(*fit.opg, names) : Json(nullptr);
  j["hessian"] = fit.hessian ? to_json(*fit.hessian, names) : Json(nullptr);
  Json errors = Json::object();
  for (const auto& [k, v] : fit.covariance_errors) errors[k] = v;
  j["covariance_errors"] = errors;
  if (cov) {
    Json ci = Json::array();
    for (const auto& iv : confidence_intervals(fit, 0.95)) {
      Json row;
      row["name"] = iv.name;
      row["lower"] = iv.lower;
      row["upper"] = iv.upper;
      row["degenerate"] = iv.degenerate;
      ci.push_back(row);
    }
    j["intervals_95"] = ci;
  }
  Json starts = Json::array();
  for (const auto& s : fit.starts) {
    Json row;
    row["loglik"] = s.loglik;
    row["converged"] = s.converged;
    row["iterations"] = s.iterations;
    row["message"] = s.message;
    starts.push_back(row);
  }
  j["starts"] = starts;
  j["best_start"] = fit.best_start;
  j["fixed"] = fit.fixed;
  j["warnings"] = fit.warnings;
  return j;
}

FitSummary fit_summary_from_json(const Json& j) {
  if (!j.contains("model")) throw FormatError("fit document needs a \"model\" field");
  FitSummary out;
  out.spec = model_from_json(j["model"]);
  Json theta;
  theta["parameters"] = j.at("estimates");
  if (j.contains("transition")) theta["transition"] = j["transition"];
  out.theta = theta_from_json(out.spec, theta);
  out.init = j.contains("init") ? init_from_json(j["init"]) : InitialCondition(PointMass{0});
  validate(out.spec, out.init);
  return out;
}

Json to_json(const CoverageReport& report) {
  Json j;
  j["method"] = ci_method_name(report.method);
  j["n"] = report.n;
  j["replications"] = report.replications;
  j["effective"] = report.effective;
  j["failures"] = report.failures;
  j["failure_flag"] = report.failure_flag;
  j["seed"] = report.seed;
  Json params = Json::array();
  for (const auto& p : report.parameters) {
    Json row;
    row["name"] = p.name;
    row["truth"] = p.truth;
    row["coverage"] = p.coverage;
    row["mc_se"] = p.mc_se;
    row["mean"] = p.mean;
    row["bias"] = p.bias;
    row["bias_se"] = p.bias_se;
    row["rmse"] = p.rmse;
    params.push_back(row);
  }
  j["parameters"] = params;
  j["failure_reasons"] = report.failure_reasons;
  return j;
}

Json to_json(const ExpandedChain& chain) {
  Json j;
  j["regimes"] = chain.regimes;
  j["memory"] = chain.memory;
  j["states"] = chain.states;
  Json tuples = Json::array();
  for (int s = 0; s < chain.states; ++s) {
    Json t = Json::array();
    for (int r : chain.tuple(s)) t.push_back(r + 1);
    tuples.push_back(t);
  }
  j["tuples"] = tuples;
  j["transition"] = matrix_json(chain.transition);
  return j;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

SeriesData read_series_csv(const ModelSpec& spec, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
  const auto header = split(line);
  if (header.empty() || header[0] != "y") throw FormatError("CSV header must start with y");
  const std::size_t cols = header.size();
  std::vector<double> values;
  std::size_t lineno = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != cols)
      throw FormatError("line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(cols));
    for (const auto& c : cells) values.push_back(parse_number(c, lineno));
    ++rows;
  }
  Eigen::VectorXd y(rows);
  Eigen::MatrixXd w(rows, cols - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = values[r * cols];
    for (std::size_t c = 1; c < cols; ++c) w(r, c - 1) = values[r * cols + c];
  }
  return make_series(spec, y, w);
}

std::string series_csv(const SeriesData& data) {
  std::ostringstream out;
  out << "y";
  for (Eigen::Index c = 0; c < data.w.cols(); ++c) out << ",w" << c + 1;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < data.y.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", data.y[i]);
    out << buf;
    for (Eigen::Index c = 0; c < data.w.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.w(i, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string coverage_csv(const std::vector<CoverageReport>& reports, int decimals) {
  std::ostringstream out;
  if (reports.empty()) return "";
  out << "n,method";
  for (const auto& p : reports.front().parameters) out << ',' << p.name;
  out << '\n';
  for (const auto& r : reports) {
    out << r.n << ',' << ci_method_name(r.method);
    for (const auto& p : r.parameters) out << ',' << fixed(p.coverage, decimals);
    out << '\n';
  }
  return out.str();
}

std::string fit_table_csv(const FitResult& fit, int decimals) {
  std::ostringstream out;
  const auto names = fit.spec.parameter_names();
  const Eigen::VectorXd est = reported(fit.spec, fit.theta_hat);
  const CovarianceEstimate* cov = fit.covariance();
  out << "parameter,Estimate,S.D.\n";
  for (std::size_t i = 0; i < names.size(); ++i)
    out << names[i] << ',' << fixed(est[i], decimals) << ','
        << (cov ? fixed(cov->se[i], decimals) : std::string("NA")) << '\n';
  out << "Log-likelihood," << fixed(fit.loglik, decimals) << ",\n";
  return out.str();
}

std::string regime_probability_csv(const Eigen::MatrixXd& probs) {
  std::ostringstream out;
  out << 't';
  for (Eigen::Index r = 0; r < probs.cols(); ++r) out << ",prob_regime_" << r + 1;
  out << '\n';
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    out << t + 1;
    for (Eigen::Index r = 0; r < probs.cols(); ++r) out << ',' << fixed(probs(t, r), 6);
    out << '\n';
  }
  return out.str();
}

std::string forgetting_csv(const ForgettingCurve& curve) {
  std::ostringstream out;
  out << "k,tv_distance,bound\n";
  char buf[96];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", p.k, p.tv_distance, p.bound);
    out << buf;
  }
  return out.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : ".";
  const std::filesystem::path tmp =
      dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InvalidArgument("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InvalidArgument("cannot move output into place: " + ec.message());
  }
}

}  // namespace regimeswitch
