#include "harp/experiment.hpp"
#include "harp/hessian.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace harp;

namespace {

GainSchedule make_schedule(double a, double c, double A, double alpha, double gamma, double ctilde_ratio,
                           double w_exponent, double w_offset, double eps0, double eps_exponent) {
  GainSchedule::Params p;
  p.a = a;
  p.c = c;
  p.A = A;
  p.alpha = alpha;
  p.gamma = gamma;
  p.ctilde_ratio = ctilde_ratio;
  p.w_exponent = w_exponent;
  p.w_offset = w_offset;
  p.eps0 = eps0;
  p.eps_exponent = eps_exponent;
  return GainSchedule(p);
}

RunConfig make_run_config(const StochasticProblem& problem, std::size_t iterations, int queries, std::uint64_t seed,
                          const std::optional<Vector>& init, double init_low, double init_high) {
  RunConfig c;
  c.dimension = static_cast<std::size_t>(problem.dimension());
  c.iterations = iterations;
  c.queries_per_iteration = queries;
  c.master_seed = seed;
  c.noise_mode = problem.noise_mode();
  c.init.point = init;
  c.init.low = init_low;
  c.init.high = init_high;
  return c;
}

// pybind11 holders cannot be shared_ptr<const T>; the bound methods are all const.
using MutableProblemPtr = std::shared_ptr<StochasticProblem>;

MutableProblemPtr unconst(const ProblemPtr& p) { return std::const_pointer_cast<StochasticProblem>(p); }

LoopOptions make_options(std::size_t record_every, bool freeze_hessian) {
  LoopOptions o;
  o.record_every = record_every;
  o.freeze_hessian = freeze_hessian;
  return o;
}

}  // namespace

PYBIND11_MODULE(_harp, m) {
  m.doc() = "Hessian-aided random perturbation and simultaneous-perturbation baselines";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::enum_<NoiseMode>(m, "NoiseMode").value("iid", NoiseMode::iid).value("crn", NoiseMode::crn);
  py::enum_<PerturbationKind>(m, "PerturbationKind")
      .value("harp", PerturbationKind::harp)
      .value("spsa", PerturbationKind::spsa)
      .value("rdsa", PerturbationKind::rdsa)
      .value("sfsa", PerturbationKind::sfsa);

  py::class_<Gains>(m, "Gains")
      .def_readonly("a", &Gains::a)
      .def_readonly("c", &Gains::c)
      .def_readonly("ctilde", &Gains::ctilde)
      .def_readonly("w", &Gains::w)
      .def_readonly("eps", &Gains::eps);

  py::class_<GainSchedule>(m, "GainSchedule")
      .def(py::init(&make_schedule), py::kw_only(), py::arg("a") = 0.1, py::arg("c") = 0.1, py::arg("A") = 0.0,
           py::arg("alpha") = 0.602, py::arg("gamma") = 0.101, py::arg("ctilde_ratio") = 1.0,
           py::arg("w_exponent") = 1.0, py::arg("w_offset") = 1.0, py::arg("eps0") = 1.0,
           py::arg("eps_exponent") = 0.5)
      .def("at", &GainSchedule::at, py::arg("k"));

  py::class_<StochasticProblem, MutableProblemPtr>(m, "Problem")
      .def_property_readonly("dimension", &StochasticProblem::dimension)
      .def_property_readonly("name", &StochasticProblem::name)
      .def_property_readonly("noise_mode", &StochasticProblem::noise_mode)
      .def_property_readonly("optimum", &StochasticProblem::optimum)
      .def("loss", &StochasticProblem::loss, py::arg("theta"))
      .def("gradient", &StochasticProblem::gradient, py::arg("theta"))
      .def("hessian", &StochasticProblem::hessian, py::arg("theta"))
      .def("noise_variance_at_optimum", &StochasticProblem::noise_variance_at_optimum);

  m.def(
      "make_quadratic",
      [](const Matrix& h, NoiseMode mode, double sigma) { return unconst(make_quadratic(h, mode, sigma)); },
      py::arg("hessian"), py::arg("noise") = NoiseMode::iid, py::arg("sigma") = 1.0);
  m.def(
      "make_skew_quartic",
      [](Index d, NoiseMode mode, double sigma) { return unconst(make_skew_quartic(d, mode, sigma)); },
      py::arg("dimension"), py::arg("noise") = NoiseMode::iid, py::arg("sigma") = 1.0);
  m.def("skew_quartic", &skew_quartic, py::arg("theta"));
  m.def(
      "make_function_problem",
      [](Index d, std::function<double(const Vector&)> loss, const Vector& optimum) {
        return unconst(make_function_problem(d, std::move(loss), optimum));
      },
      py::arg("dimension"), py::arg("loss"), py::arg("optimum"));

  py::class_<RunRecord>(m, "RunRecord")
      .def_readonly("iteration", &RunRecord::iteration)
      .def_readonly("cumulative_queries", &RunRecord::cumulative_queries)
      .def_readonly("loss", &RunRecord::loss)
      .def_readonly("distance", &RunRecord::distance)
      .def_readonly("normalized_distance", &RunRecord::normalized_distance)
      .def_readonly("initial", &RunRecord::initial)
      .def_readonly("terminal", &RunRecord::terminal)
      .def_readonly("hessian_bar", &RunRecord::hessian_bar)
      .def_readonly("hessian_hat", &RunRecord::hessian_hat)
      .def_readonly("clipped_regularizations", &RunRecord::clipped_regularizations);

  m.def(
      "run",
      [](PerturbationKind kind, const StochasticProblem& problem, const GainSchedule& schedule, std::size_t iterations,
         std::optional<int> queries, std::uint64_t seed, std::size_t replicate, std::optional<Vector> init,
         double init_low, double init_high, std::size_t record_every, bool freeze_hessian) {
        const int q = queries.value_or(kind == PerturbationKind::harp ? 4 : 2);
        const RunConfig c = make_run_config(problem, iterations, q, seed, init, init_low, init_high);
        py::gil_scoped_release release;
        return run_algorithm(kind, problem, schedule, c, replicate, make_options(record_every, freeze_hessian));
      },
      py::arg("kind"), py::arg("problem"), py::arg("schedule"), py::arg("iterations"), py::kw_only(),
      py::arg("queries") = py::none(), py::arg("seed") = 0, py::arg("replicate") = 0, py::arg("init") = py::none(),
      py::arg("init_low") = -1.0, py::arg("init_high") = 1.0, py::arg("record_every") = 1,
      py::arg("freeze_hessian") = false,
      "Runs HARP (4 queries per iteration) or a baseline (2, or 4 when query-matched).");

  m.def("regularize", &regularize, py::arg("hbar"), py::arg("eps"),
        py::arg("condition_ceiling") = std::numeric_limits<double>::infinity());
  m.def("shaping_factor", &shaping_factor, py::arg("hhat"));

  m.def("solve_lyapunov", &solve_lyapunov, py::arg("gamma"), py::arg("tau_plus"), py::arg("rhs"));
  m.def("iid_covariance_rhs", &iid_covariance_rhs, py::arg("a"), py::arg("c"), py::arg("variance"), py::arg("sigma"));
  m.def("trace_identity_cov", &trace_identity_cov, py::arg("a"), py::arg("c"), py::arg("variance"),
        py::arg("tau_plus"), py::arg("eigenvalues"));
  m.def("trace_harp_cov", &trace_harp_cov, py::arg("a"), py::arg("c"), py::arg("variance"), py::arg("tau_plus"),
        py::arg("eigenvalues"));
  m.def("harp_trace_is_smaller", &harp_trace_is_smaller, py::arg("a"), py::arg("tau_plus"), py::arg("eigenvalues"));

  py::class_<RateFit>(m, "RateFit")
      .def_readonly("slope", &RateFit::slope)
      .def_readonly("standard_error", &RateFit::standard_error)
      .def_readonly("intercept", &RateFit::intercept)
      .def_readonly("points", &RateFit::points)
      .def_readonly("window_begin", &RateFit::window_begin)
      .def_readonly("window_end", &RateFit::window_end);
  m.def("fit_rate", &fit_rate, py::arg("iterations"), py::arg("rms"), py::arg("begin"), py::arg("end"));
  m.def("empirical_rate", &empirical_rate, py::arg("records"), py::arg("begin") = 0, py::arg("end") = 0);

  m.def(
      "run_experiment",
      [](const std::filesystem::path& config, const std::vector<std::string>& overrides,
         std::optional<std::filesystem::path> output_dir) {
        ExperimentConfig c = load_config(config, overrides);
        if (output_dir) c.output_dir = *output_dir;
        {
          py::gil_scoped_release release;
          write_outputs(c, run_experiment(c));
        }
        return c.output_dir;
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("output_dir") = py::none(),
      "Runs a config file and writes its CSV outputs; returns the output directory.");
  m.def(
      "predict",
      [](const std::filesystem::path& config, const std::vector<std::string>& overrides) {
        return predict_report(load_config(config, overrides));
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{});
}
