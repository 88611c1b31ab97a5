#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gammalab/curvature.hpp"
#include "gammalab/experiment.hpp"
#include "gammalab/gauss.hpp"
#include "gammalab/semigroup.hpp"
#include "gammalab/spaces.hpp"
#include "gammalab/triple.hpp"
#include "gammalab/verifiers.hpp"

namespace py = pybind11;
using namespace gammalab;

namespace {

py::dict report_dict(const VerifierReport& r) {
  py::dict out;
  out["name"] = r.name;
  out["worst_margin"] = r.worst_margin;
  out["worst_state"] = r.worst_state;
  out["worst_time"] = r.worst_time;
  out["mean_margin"] = r.mean_margin;
  out["samples"] = r.samples;
  out["tolerance"] = r.tolerance;
  out["passed"] = r.pass;
  py::list rows;
  for (const MarginRow& row : r.rows) rows.append(py::make_tuple(row.state, row.time, row.margin, row.lhs, row.rhs));
  out["rows"] = rows;
  return out;
}

Curvature to_curvature(double k) {
  return std::isinf(k) && k < 0 ? Curvature::negative_infinity() : Curvature(k);
}

}  // namespace

PYBIND11_MODULE(_gammalab, m) {
  m.doc() = "Gamma calculus, Bakry-Emery curvature and Bobkov inequality checks on finite Markov triples";
  m.attr("__version__") = std::string(library_version());

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  static py::exception<InvariantViolation> invariant(m, "InvariantViolation", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvariantViolation& e) {
      py::object err = py::handle(invariant.ptr())(e.what());
      err.attr("invariant") = e.invariant();
      PyErr_SetObject(invariant.ptr(), err.ptr());
    }
  });

  py::class_<Edge>(m, "Edge")
      .def(py::init([](std::size_t i, std::size_t j, double rij, double rji, double length) {
             return Edge{i, j, rij, rji, length};
           }),
           py::arg("i"), py::arg("j"), py::arg("rate_ij"), py::arg("rate_ji"), py::arg("length") = 1.0)
      .def_readonly("i", &Edge::i)
      .def_readonly("j", &Edge::j)
      .def_readonly("rate_ij", &Edge::rate_ij)
      .def_readonly("rate_ji", &Edge::rate_ji)
      .def_readonly("length", &Edge::length);

  py::class_<MarkovTriple>(m, "MarkovTriple")
      .def(py::init<std::vector<double>, std::vector<Edge>, std::vector<std::string>, Metadata, bool>(), py::arg("measure"),
           py::arg("edges"), py::arg("labels") = std::vector<std::string>{}, py::arg("metadata") = Metadata{},
           py::arg("normalize") = false)
      .def_static("from_generator", &MarkovTriple::from_generator, py::arg("generator"), py::arg("measure"),
                  py::arg("normalize") = false)
      .def_property_readonly("size", &MarkovTriple::size)
      .def_property_readonly("measure", &MarkovTriple::measure)
      .def_property_readonly("edges", &MarkovTriple::edges)
      .def_property_readonly("metadata", &MarkovTriple::metadata)
      .def("rate", &MarkovTriple::rate)
      .def("generator_matrix", &MarkovTriple::generator_matrix)
      .def("__len__", &MarkovTriple::size);

  m.def("build_two_point", &build_two_point, py::arg("rho") = 1.0);
  m.def("build_ou_chain", &build_ou_chain, py::arg("n"), py::arg("R") = 6.0);
  m.def("build_cycle", &build_cycle, py::arg("n"));
  m.def("build_complete", &build_complete, py::arg("n"));
  m.def("build_hypercube", &build_hypercube, py::arg("d"), py::arg("rho") = 1.0);
  m.def("state_coordinates", &state_coordinates);
  m.def("serialize_triple", &serialize_triple);
  m.def("parse_triple", &parse_triple, py::arg("text"), py::arg("source") = "<memory>", py::arg("normalize") = false);
  m.def("save_triple", &save_triple);
  m.def("load_triple", &load_triple, py::arg("path"), py::arg("normalize") = false);

  m.def("integral", &integral);
  m.def("gamma", py::overload_cast<const MarkovTriple&, const ScalarField&, const ScalarField&>(&gamma));
  m.def("gamma", py::overload_cast<const MarkovTriple&, const ScalarField&>(&gamma));
  m.def("laplacian", &laplacian);
  m.def("gamma2", py::overload_cast<const MarkovTriple&, const ScalarField&, const ScalarField&>(&gamma2));
  m.def("gamma2", py::overload_cast<const MarkovTriple&, const ScalarField&>(&gamma2));
  m.def("gamma2_weak_form", &gamma2_weak_form);
  m.def("cheeger_energy", &cheeger_energy);
  m.def("lip_slope", &lip_slope);

  py::class_<SpectralCache>(m, "SpectralCache")
      .def(py::init<MarkovTriple>())
      .def_property_readonly("eigenvalues", &SpectralCache::eigenvalues)
      .def_property_readonly("spectral_gap", &SpectralCache::spectral_gap)
      .def("heat", &SpectralCache::heat, py::arg("f"), py::arg("t"))
      .def("heat_kernel", [](const SpectralCache& c, double t) { return c.heat_kernel(t).matrix; }, py::arg("t"));
  m.def("gradient_estimate_margin", &gradient_estimate_margin);
  m.def("variance_regularization_margin", &variance_regularization_margin);

  m.def(
      "curvature",
      [](const MarkovTriple& triple) {
        const CurvatureReport report = curvature_global(triple);
        py::dict out;
        out["global"] = report.global.as_double();
        out["argmin"] = report.argmin;
        std::vector<double> local;
        for (const LocalCurvature& s : report.states) local.push_back(s.curvature.as_double());
        out["states"] = local;
        return out;
      },
      "Bakry-Emery curvature: {'global', 'argmin', 'states'}; negative infinity is -inf.");

  m.def("normal_cdf", &normal_cdf);
  m.def("normal_pdf", &normal_pdf);
  m.def("normal_quantile", &normal_quantile);
  m.def("isoperimetric_profile", &isoperimetric_profile);
  m.def("c_alpha", &c_alpha, py::arg("K"), py::arg("alpha"), py::arg("t"));

  m.def(
      "bobkov_local",
      [](const SpectralCache& cache, const ScalarField& f, double alpha, double k, std::vector<double> times, double eps) {
        return report_dict(bobkov_local(cache, f, alpha, to_curvature(k), times, eps));
      },
      py::arg("cache"), py::arg("f"), py::arg("alpha"), py::arg("K"), py::arg("times"),
      py::arg("eps") = tolerance::default_truncation);
  m.def(
      "bobkov_global",
      [](const MarkovTriple& triple, const ScalarField& f, double k) { return report_dict(bobkov_global(triple, f, k)); },
      py::arg("triple"), py::arg("f"), py::arg("K"));
  m.def("two_point_bobkov_margin", &two_point_bobkov_margin);
  m.def("perimeter", &perimeter);
  m.def("total_variation", &total_variation);
  m.def(
      "isoperimetric_margin",
      [](const MarkovTriple& triple, const StateSet& set, double k) { return report_dict(isoperimetric_margin(triple, set, k)); });
  m.def("gaussian_interval_oracle", [](const std::string& text) {
    const GaussianSet g = gaussian_interval_oracle(IntervalUnion::parse(text));
    return py::make_tuple(g.mass, g.perimeter);
  });

  m.def(
      "run_experiment",
      [](const std::string& config_text, std::optional<std::uint64_t> seed) {
        ExperimentConfig config = parse_experiment(config_text, "<python>");
        if (seed) config.seed = *seed;
        py::gil_scoped_release release;
        return summary_json(run_experiment(config));
      },
      py::arg("config"), py::arg("seed") = py::none(), "Runs an experiment config given as text; returns the summary JSON.");
}
