#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "trajgeom/geometry.hpp"
#include "trajgeom/pipeline.hpp"
#include "trajgeom/stats.hpp"
#include "trajgeom/store.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace trajgeom;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

geometry::SpectrumRoute parse_route(const std::string& route) {
  if (route == "auto") return geometry::SpectrumRoute::kAuto;
  if (route == "gram") return geometry::SpectrumRoute::kGram;
  if (route == "covariance") return geometry::SpectrumRoute::kCovariance;
  throw py::value_error("route must be auto, gram or covariance");
}

store::ActivationTensor to_tensor(const FloatArray& a) {
  if (a.ndim() != 3) throw py::value_error("activations must be (layers, tokens, dim)");
  const float* p = a.data();
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
          static_cast<std::size_t>(a.shape(2)), std::vector<float>(p, p + a.size())};
}

py::array_t<float> from_tensor(const store::ActivationTensor& t) {
  py::array_t<float> out({t.n_layers(), t.n_tokens(), t.hidden_dim()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict stat_dict(const stats::StatResult& r) {
  py::dict d;
  d["test"] = r.test;
  d["statistic"] = r.statistic;
  d["df"] = r.df;
  d["df2"] = r.df2;
  d["p_value"] = r.p_value;
  d["effect_size"] = r.effect_size;
  d["sample_sizes"] = r.sample_sizes;
  return d;
}

pipeline::RunConfig make_config(const std::optional<std::string>& config_json,
                                std::optional<std::uint64_t> seed) {
  pipeline::RunConfig c = config_json
                              ? pipeline::config_from_json(nlohmann::json::parse(*config_json))
                              : pipeline::RunConfig{};
  if (seed) c.seed = *seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Trajectory geometry for language-model activations";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<InfeasibleError>(m, "InfeasibleError", error.ptr());
  py::register_exception<store::BundleError>(m, "BundleError", error.ptr());
  py::register_exception<pipeline::UsageError>(m, "UsageError", error.ptr());
  py::register_exception<pipeline::ValidationError>(m, "ValidationError", error.ptr());

  // Geometry on an (n_points, dim) float64 array.
  m.def("local_curvatures", [](const geometry::PointMatrix& p) {
    return geometry::local_curvatures(geometry::TrajectoryView(p));
  }, py::arg("points"));
  m.def("sequence_curvature", [](const geometry::PointMatrix& p) {
    return geometry::sequence_curvature(geometry::TrajectoryView(p));
  }, py::arg("points"));
  m.def("local_menger_curvatures", [](const geometry::PointMatrix& p) {
    return geometry::local_menger_curvatures(geometry::TrajectoryView(p));
  }, py::arg("points"));
  m.def("menger_sequence_curvature", [](const geometry::PointMatrix& p) {
    return geometry::menger_sequence_curvature(geometry::TrajectoryView(p));
  }, py::arg("points"));
  m.def("covariance_spectrum", [](const geometry::PointMatrix& p, const std::string& route) {
    return geometry::covariance_spectrum(p, parse_route(route));
  }, py::arg("points"), py::arg("route") = "auto");
  m.def("effective_dimensionality", [](const geometry::PointMatrix& p, const std::string& route) {
    return geometry::effective_dimensionality(p, parse_route(route));
  }, py::arg("points"), py::arg("route") = "auto");
  m.def("elongation", [](const geometry::PointMatrix& p, const std::string& route) {
    return geometry::elongation(p, parse_route(route));
  }, py::arg("points"), py::arg("route") = "auto");
  m.def("layer_profile", [](const FloatArray& window) {
    const auto prof = geometry::layer_profile(to_tensor(window));
    py::dict d;
    for (auto measure : geometry::kAllMeasures) {
      d[py::str(std::string(geometry::to_string(measure)))] = prof.values(measure);
    }
    return d;
  }, py::arg("window"), "Per-layer measures for a (layers, tokens, dim) window.");

  m.def("ttest_ind", [](const std::vector<double>& a, const std::vector<double>& b,
                        const std::string& variant) {
    if (variant != "welch" && variant != "student") {
      throw py::value_error("variant must be welch or student");
    }
    return stat_dict(stats::ttest_ind(a, b, variant == "welch" ? stats::TTestVariant::kWelch
                                                               : stats::TTestVariant::kStudent));
  }, py::arg("a"), py::arg("b"), py::arg("variant") = "welch");
  m.def("anova_oneway", [](const std::vector<std::vector<double>>& groups) {
    return stat_dict(stats::anova_oneway(groups));
  }, py::arg("groups"));
  m.def("pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) {
    return stat_dict(stats::pearson_r(x, y));
  }, py::arg("x"), py::arg("y"));

  // Bundle I/O. Manifests cross the boundary as JSON text.
  m.def("write_bundle", [](const fs::path& dir, const std::string& manifest,
                           const std::vector<FloatArray>& activations,
                           const std::vector<std::optional<FloatArray>>& logits) {
    const auto man = store::manifest_from_json(nlohmann::json::parse(manifest));
    if (!logits.empty() && logits.size() != activations.size()) {
      throw py::value_error("logits must be empty or one entry per sequence");
    }
    std::vector<store::SequenceTensors> t(activations.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i].activations = to_tensor(activations[i]);
      if (!logits.empty() && logits[i]) {
        const auto& l = *logits[i];
        if (l.ndim() != 2) throw py::value_error("logits must be (tokens, tracked)");
        t[i].logits = store::LogitMatrix(static_cast<std::size_t>(l.shape(0)),
                                         static_cast<std::size_t>(l.shape(1)),
                                         std::vector<float>(l.data(), l.data() + l.size()));
      }
    }
    store::write_bundle(dir, man, t);
  }, py::arg("dir"), py::arg("manifest"), py::arg("activations"),
     py::arg("logits") = std::vector<std::optional<FloatArray>>{});
  m.def("read_bundle", [](const fs::path& dir) {
    const auto b = store::read_bundle(dir);
    py::list acts;
    py::list logits;
    for (std::size_t i = 0; i < b.size(); ++i) {
      acts.append(from_tensor(b.tensors(i).activations));
      const auto& l = b.tensors(i).logits;
      if (l.empty()) {
        logits.append(py::none());
      } else {
        py::array_t<float> a({l.n_tokens(), l.n_tracked()});
        std::copy(l.data().begin(), l.data().end(), a.mutable_data());
        logits.append(a);
      }
    }
    return py::make_tuple(store::manifest_to_json(b.manifest()).dump(), acts, logits);
  }, py::arg("dir"));

  // Pipeline verbs, mirroring the command line.
  m.def("generate", [](const std::string& kind, const fs::path& out,
                       std::optional<std::string> config, std::optional<std::uint64_t> seed,
                       std::optional<std::string> condition, std::optional<std::size_t> n,
                       std::optional<std::size_t> length, std::optional<std::size_t> k,
                       std::optional<std::string> pool, std::optional<std::string> source) {
    pipeline::GenerateRequest req;
    req.kind = kind;
    if (condition) req.condition = store::parse_condition(*condition);
    req.n = n;
    req.length = length;
    req.k = k;
    req.pool = pool;
    req.source = source;
    return pipeline::cmd_generate(req, make_config(config, seed), out).entries.size();
  }, py::arg("kind"), py::arg("out"), py::kw_only(), py::arg("config") = py::none(),
     py::arg("seed") = py::none(), py::arg("condition") = py::none(), py::arg("n") = py::none(),
     py::arg("length") = py::none(), py::arg("k") = py::none(), py::arg("pool") = py::none(),
     py::arg("source") = py::none());
  m.def("validate", [](const fs::path& path) {
    const auto r = pipeline::cmd_validate(path);
    return py::make_tuple(r.kind, r.n_items);
  }, py::arg("path"));
  m.def("analyze", [](const fs::path& bundle, const fs::path& out,
                      std::optional<std::string> config, std::optional<std::uint64_t> seed) {
    const auto r = pipeline::cmd_analyze(bundle, make_config(config, seed), out);
    return py::make_tuple(r.geometry.dump(), r.behavior.dump(), r.stats.dump());
  }, py::arg("bundle"), py::arg("out"), py::kw_only(), py::arg("config") = py::none(),
     py::arg("seed") = py::none());
  m.def("report", [](const fs::path& in_dir, const fs::path& out, const std::string& run_id,
                     const std::string& format) {
    return pipeline::cmd_report(in_dir, run_id, format, out);
  }, py::arg("in_dir"), py::arg("out"), py::kw_only(), py::arg("run_id") = "run",
     py::arg("format") = "csv");
  m.def("data_dir", &pipeline::data_dir);
}
