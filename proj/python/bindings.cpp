#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <optional>
#include <sstream>

#include "raus/cli.hpp"
#include "raus/dataset.hpp"
#include "raus/eval.hpp"
#include "raus/pipeline.hpp"
#include "raus/ranking.hpp"
#include "raus/report.hpp"
#include "raus/synthgen.hpp"

namespace py = pybind11;
using namespace raus;

namespace {

ScoredSet scored(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  return ScoredSet{scores, labels};
}

py::dict interval(const std::optional<Interval>& i) {
  py::dict d;
  if (!i) return d;
  d["point"] = i->point;
  d["lo"] = i->lo;
  d["hi"] = i->hi;
  return d;
}

py::list run(const std::string& config_json) {
  const RunConfig config = config_from_json(config_json);
  RunResult result;
  {
    py::gil_scoped_release release;
    result = run_pipeline(config);
  }
  py::list models;
  for (std::size_t k : result.order) {
    const EvalReport& r = result.reports[k];
    py::dict m;
    m["path"] = result.leaves[k];
    m["method"] = to_string(r.method);
    m["window"] = r.window;
    m["failed"] = r.failed;
    py::list steps;
    for (const auto& t : r.timesteps) {
      py::dict s;
      s["timestep"] = t.timestep;
      s["rows"] = t.rows;
      s["positives"] = t.positives;
      s["auc"] = interval(t.auc);
      s["ap"] = interval(t.ap);
      steps.append(s);
    }
    m["timesteps"] = steps;
    models.append(m);
  }
  return models;
}

int main_entry(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"raus"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int status = 0;
  {
    py::gil_scoped_release release;
    status = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  py::print(out.str(), py::arg("end") = "");
  if (!err.str().empty()) py::print(err.str(), py::arg("end") = "", py::arg("file") = py::module_::import("sys").attr("stderr"));
  return status;
}

}  // namespace

PYBIND11_MODULE(_raus, m) {
  m.doc() = "Bindings for the raus risk-prediction pipeline";

  static py::exception<Error> error(m, "RausError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = to_string(e.code());
      exc.attr("exit_code") = exit_code_for(e.code());
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return roc_auc(scored(s, y)); },
        py::arg("scores"), py::arg("labels"));
  m.def("average_precision",
        [](const std::vector<double>& s, const std::vector<int>& y) { return average_precision(scored(s, y)); },
        py::arg("scores"), py::arg("labels"));
  m.def("chi2_upper_tail", &chi2_upper_tail, py::arg("x"), py::arg("df"));
  m.def(
      "kdigo_labels",
      [](const std::vector<Series>& scr, const std::vector<Series>& egfr) {
        const KdigoResult r = apply_kdigo_labels(scr, egfr);
        return py::make_tuple(r.labels, r.excluded);
      },
      py::arg("scr"), py::arg("egfr"), "Per-subject daily AKI labels and the subjects lacking a baseline SCr");
  m.def(
      "synth",
      [](const std::string& path, std::size_t subjects, int horizon, double missing, std::uint64_t seed) {
        const GeneratorSpec spec = default_generator(subjects, horizon, missing, seed);
        std::ostringstream csv;
        write_panel_csv(csv, sample_panel(spec));
        write_text(path, csv.str());
        return truth_to_json(spec.structure, spec.cpts);
      },
      py::arg("path"), py::arg("subjects") = 2000, py::arg("horizon") = 7, py::arg("missing") = 0.0,
      py::arg("seed") = 0, "Writes a synthetic panel CSV and returns the ground truth as JSON");
  m.def("run", &run, py::arg("config_json"), "Runs the pipeline; returns models in selection order");
  m.def("main", &main_entry, py::arg("args"), "Runs the command line tool and returns its exit status");
}
