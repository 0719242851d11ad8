#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "regimeswitch/errors.hpp"
#include "regimeswitch/estimate.hpp"
#include "regimeswitch/filter.hpp"
#include "regimeswitch/io.hpp"
#include "regimeswitch/montecarlo.hpp"
#include "regimeswitch/parallel.hpp"
#include "regimeswitch/theory.hpp"

namespace py = pybind11;
using namespace regimeswitch;

namespace {

// Models, parameters and results cross the boundary as JSON text; the Python
// layer converts them to and from dicts.
ModelSpec spec_of(const std::string& model) { return model_from_json(Json::parse(model)); }

Theta theta_of(const ModelSpec& spec, const std::string& theta) { return theta_from_json(spec, Json::parse(theta)); }

InitSpec init_of(const std::string& text, int states) {
  if (text == "estimate") return EstimateXi{};
  if (text == "xi") return Distribution{Eigen::VectorXd::Constant(states, 1.0 / states)};
  if (text.rfind("x0=", 0) == 0) return PointMass{std::stoi(text.substr(3))};
  throw InvalidArgument("init must be 'estimate', 'xi' or 'x0=<state>'");
}

InitialCondition fixed_init(const InitSpec& init) {
  if (const auto* pm = std::get_if<PointMass>(&init)) return *pm;
  if (const auto* d = std::get_if<Distribution>(&init)) return *d;
  throw InvalidArgument("the likelihood needs a fixed initial condition");
}

LabelOrder label_order_of(const std::string& s) {
  if (s == "ascending") return LabelOrder::ascending;
  if (s == "descending") return LabelOrder::descending;
  if (s == "as-is" || s == "as_is") return LabelOrder::as_is;
  throw InvalidArgument("label order must be ascending, descending or as-is");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Markov regime-switching maximum likelihood";

  // Module-lifetime exception type; instances carry the stable error code.
  static PyObject* error = PyErr_NewException("regimeswitch._core.RegimeSwitchError", PyExc_RuntimeError, nullptr);
  m.attr("RegimeSwitchError") = py::handle(error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error)(std::string(e.code()) + ": " + e.what());
      exc.attr("code") = e.code();
      PyErr_SetObject(error, exc.ptr());
    } catch (const nlohmann::json::exception& e) {
      py::object exc = py::handle(error)(std::string("format_error: ") + e.what());
      exc.attr("code") = "format_error";
      PyErr_SetObject(error, exc.ptr());
    }
  });

  m.def("set_threads", &set_thread_count, py::arg("count"));

  m.def("parameter_names", [](const std::string& model) { return spec_of(model).parameter_names(); });

  m.def(
      "simulate",
      [](const std::string& model, const std::string& theta, int n, int burn_in, std::uint64_t seed) {
        const ModelSpec spec = spec_of(model);
        const Simulation sim = simulate(spec, theta_of(spec, theta), n, burn_in, seed);
        return py::make_tuple(sim.data.y, sim.regimes, sim.data.presample);
      },
      py::arg("model"), py::arg("theta"), py::arg("n"), py::arg("burn_in") = 800, py::arg("seed") = 0);

  m.def(
      "loglik",
      [](const std::string& model, const std::string& theta, const Eigen::VectorXd& y, const std::string& init) {
        const ModelSpec spec = spec_of(model);
        return loglik(spec, theta_of(spec, theta), make_series(spec, y), fixed_init(init_of(init, spec.states())));
      },
      py::arg("model"), py::arg("theta"), py::arg("y"), py::arg("init") = "x0=0");

  m.def(
      "fit",
      [](const std::string& model, const Eigen::VectorXd& y, const std::string& init, int starts,
         std::uint64_t seed, const std::string& label_order, bool hessian) {
        const ModelSpec spec = spec_of(model);
        FitOptions o;
        o.n_starts = starts;
        o.seed = seed;
        o.label_order = label_order_of(label_order);
        o.compute_hessian = hessian;
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(spec, make_series(spec, y), init_of(init, spec.states()), o);
        }
        return to_json(r).dump();
      },
      py::arg("model"), py::arg("y"), py::arg("init") = "estimate", py::arg("starts") = 10, py::arg("seed") = 0,
      py::arg("label_order") = "ascending", py::arg("hessian") = true);

  m.def(
      "smooth",
      [](const std::string& fit_json, const Eigen::VectorXd& y) {
        const FitSummary s = fit_summary_from_json(Json::parse(fit_json));
        const SmoothOutput sm = smooth(s.spec, s.theta, make_series(s.spec, y), s.init);
        return Eigen::MatrixXd(sm.regime_marginal);
      },
      py::arg("fit"), py::arg("y"));

  m.def(
      "coverage",
      [](const std::string& model, const std::string& theta, int n, int reps, const std::string& method,
         std::uint64_t seed, int starts) {
        const ModelSpec spec = spec_of(model);
        const Theta th = theta_of(spec, theta);
        CoverageOptions o;
        o.fit.n_starts = starts;
        CoverageReport r;
        {
          py::gil_scoped_release release;
          r = coverage_experiment(spec, th, n, reps, parse_ci_method(method), o, seed);
        }
        return to_json(r).dump();
      },
      py::arg("model"), py::arg("theta"), py::arg("n"), py::arg("reps"), py::arg("method") = "opg_xi",
      py::arg("seed") = 0, py::arg("starts") = 2);

  m.def(
      "forgetting_curve",
      [](const std::string& model, const std::string& theta, const Eigen::VectorXd& y, int m_lag,
         const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2) {
        const ModelSpec spec = spec_of(model);
        const ForgettingCurve c = forgetting_curve(spec, theta_of(spec, theta), make_series(spec, y), m_lag, mu1, mu2);
        Eigen::MatrixXd out(c.points.size(), 3);
        for (std::size_t i = 0; i < c.points.size(); ++i)
          out.row(static_cast<Eigen::Index>(i)) << c.points[i].k, c.points[i].tv_distance, c.points[i].bound;
        return py::make_tuple(out, c.bound_holds);
      },
      py::arg("model"), py::arg("theta"), py::arg("y"), py::arg("m"), py::arg("mu1"), py::arg("mu2"));
}
