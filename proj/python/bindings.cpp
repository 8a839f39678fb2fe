#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "tpc/cli.hpp"
#include "tpc/corpus.hpp"
#include "tpc/error.hpp"
#include "tpc/evaluation.hpp"
#include "tpc/folds.hpp"
#include "tpc/text.hpp"

namespace py = pybind11;

namespace {

py::list findings_of(const tpc::BundleCheck& check) {
  py::list out;
  for (const auto& f : check.findings) {
    py::dict d;
    d["record"] = f.record();
    d["field"] = f.field();
    d["message"] = std::string(f.what());
    out.append(d);
  }
  return out;
}

py::dict census_of(const tpc::Corpus& corpus) {
  py::dict d;
  const auto census = tpc::class_census(corpus);
  for (std::size_t c = 0; c < census.size(); ++c)
    d[py::str(std::string(tpc::process_label_name(static_cast<tpc::ProcessLabel>(c))))] = census[c];
  return d;
}

}  // namespace

PYBIND11_MODULE(_tpc, m) {
  m.doc() = "Translation-process classifier core";

  py::register_exception<tpc::Error>(m, "TpcError", PyExc_ValueError);

  m.def("levenshtein", &tpc::text::levenshtein, py::arg("a"), py::arg("b"),
        "Edit distance over Unicode code points.");
  m.def("map_label", [](const std::string& raw) {
    return std::string(tpc::process_label_name(tpc::map_label(raw)));
  }, py::arg("raw"), "Six-class label of an annotated label.");
  m.def("stratified_chance", &tpc::stratified_chance, py::arg("census"));
  m.def("stratified_kfold", &tpc::stratified_kfold, py::arg("labels"), py::arg("k"), py::arg("seed"));

  m.def("check_bundle_text", [](const std::string& text, const std::string& source) {
    std::istringstream in(text);
    const auto check = tpc::check_bundle(in, source);
    py::dict d;
    d["sentences"] = check.corpus.size();
    d["census"] = census_of(check.corpus);
    d["findings"] = findings_of(check);
    return d;
  }, py::arg("text"), py::arg("source") = "<text>",
        "Validates bundle text; returns sentence count, class census and findings.");
  m.def("check_bundle", [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw tpc::Error("cannot open '" + path + "'");
    const auto check = tpc::check_bundle(in, path);
    py::dict d;
    d["sentences"] = check.corpus.size();
    d["census"] = census_of(check.corpus);
    d["findings"] = findings_of(check);
    return d;
  }, py::arg("path"));
  m.def("normalize_bundle_text", [](const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    tpc::write_bundle(out, tpc::parse_bundle(in));
    return out.str();
  }, py::arg("text"), "Parses and re-serializes a bundle in canonical form.");

  m.def("compute_metrics", [](const std::vector<int>& gold, const std::vector<int>& predicted, std::size_t k) {
    const auto r = tpc::compute_metrics(gold, predicted, k);
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["micro_f1"] = r.micro_f1;
    d["macro_f1"] = r.macro_f1;
    std::vector<double> f1;
    for (const auto& c : r.per_class) f1.push_back(c.f1);
    d["per_class_f1"] = f1;
    d["confusion"] = r.confusion;
    return d;
  }, py::arg("gold"), py::arg("predicted"), py::arg("class_count"));

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = tpc::run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command-line driver in process; returns (exit code, stdout, stderr).");
}
