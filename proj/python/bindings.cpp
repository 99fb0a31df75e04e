#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mlab/cli_io.hpp"
#include "mlab/presets.hpp"

namespace py = pybind11;
using namespace mlab;

namespace {

json from_py(const py::object& o) {
  if (o.is_none()) return json::object();
  auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(py::cast<std::string>(dumps(o)));
}

py::object to_py(const json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

RunConfig config(const std::string& pipeline, const py::object& cfg) {
  return parse_config(from_py(cfg), parse_pipeline(pipeline));
}

}  // namespace

PYBIND11_MODULE(_mlab, m) {
  m.doc() = "bindings of the mlab library";
  m.attr("__version__") = kVersion;
  py::register_exception<Error>(m, "MlabError", PyExc_ValueError);

  m.def("preset_names", &preset_names);
  m.def("parse_j_range", &parse_j_range, py::arg("text"));
  m.def("check_elliptic_window", &check_elliptic_window, py::arg("s"), py::arg("sigma"), py::arg("d"));
  m.def("check_transition_window", &check_transition_window, py::arg("s"), py::arg("sigma"),
        py::arg("d"));
  m.def("amplitude", &amplitude, py::arg("j"), py::arg("sigma"));
  m.def("theta_prime", &theta_prime, py::arg("theta"));
  m.def("sha256_hex", &sha256_hex, py::arg("data"));

  m.def(
      "config",
      [](const std::string& pipeline, const py::object& cfg) {
        return to_py(config_to_json(config(pipeline, cfg)));
      },
      py::arg("pipeline"), py::arg("config") = py::none(),
      "canonical configuration with defaults filled in");
  m.def(
      "run",
      [](const std::string& pipeline, const py::object& cfg) {
        RunConfig c = config(pipeline, cfg);
        RunOutput r;
        {
          py::gil_scoped_release nogil;
          r = run_pipeline(c);
        }
        py::dict out;
        out["report"] = to_py(r.report);
        out["failed"] = r.failed;
        out["hash"] = sha256_hex(report_bytes(r.report));
        py::dict series;
        for (const auto& t : r.series) series[py::str(t.name)] = py::make_tuple(t.header, t.rows);
        out["series"] = series;
        return out;
      },
      py::arg("pipeline"), py::arg("config") = py::none(),
      "run a pipeline in memory; returns report, failed flag, hash and series tables");
  m.def(
      "classify",
      [](const py::object& cfg) { return to_py(run_pipeline(config("classify", cfg)).report["results"]); },
      py::arg("config") = py::none());
  m.def(
      "summary",
      [](const py::object& report) { return summary_lines(from_py(report)); }, py::arg("report"));
}
