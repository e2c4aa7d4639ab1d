#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gridcascade/evaluate.hpp"
#include "gridcascade/geometry.hpp"
#include "gridcascade/gridcodec.hpp"
#include "gridcascade/harness.hpp"
#include "gridcascade/scenario.hpp"
#include "gridcascade/scoring.hpp"

namespace py = pybind11;
namespace gc = gridcascade;

namespace {

// Keep-indices of greedy suppression over (box, score) pairs.
std::vector<int> nms_indices(const std::vector<gc::BBox>& boxes, const std::vector<double>& scores,
                             double threshold) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("boxes and scores differ in length");
  std::vector<gc::Detection> dets;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    gc::Detection d{boxes[i], {}, scores[i], 0, 0, static_cast<int>(i)};
    dets.push_back(d);
  }
  std::vector<int> keep;
  for (const auto& d : gc::nms(dets, threshold)) keep.push_back(d.local_id);
  return keep;
}

py::dict experiment(const std::string& config_text, std::uint64_t seed,
                    const std::vector<std::string>& overrides) {
  const auto cfg = gc::parse_config(config_text, overrides, seed);
  gc::ExperimentResult r;
  {
    py::gil_scoped_release release;
    r = gc::run_experiment(cfg);
  }
  py::dict out;
  out["config_hash"] = r.config_hash;
  out["seed"] = r.seed;
  out["AP"] = r.eval.ap;
  out["AP50"] = r.eval.ap50;
  out["AP75"] = r.eval.ap75;
  out["AP_S"] = r.eval.ap_small;
  out["AP_M"] = r.eval.ap_medium;
  out["AP_L"] = r.eval.ap_large;
  py::dict per;
  for (const auto& t : r.eval.per_threshold) per[py::float_(t.threshold)] = t.ap;
  out["per_threshold"] = per;
  out["n_detections"] = r.detections.size();
  out["metrics_csv"] = r.eval.to_csv(r.config_hash, r.seed);
  out["stage_trace_csv"] = r.stage_trace_csv();
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grid-point cascade refinement: geometry, codec, scoring and experiments";

  py::class_<gc::ImageBounds>(m, "ImageBounds")
      .def(py::init<double, double>(), py::arg("width"), py::arg("height"))
      .def_readonly("width", &gc::ImageBounds::width)
      .def_readonly("height", &gc::ImageBounds::height);

  py::class_<gc::BBox>(m, "BBox")
      .def(py::init<double, double, double, double>(), py::arg("x1"), py::arg("y1"),
           py::arg("x2"), py::arg("y2"))
      .def_property_readonly("x1", &gc::BBox::x1)
      .def_property_readonly("y1", &gc::BBox::y1)
      .def_property_readonly("x2", &gc::BBox::x2)
      .def_property_readonly("y2", &gc::BBox::y2)
      .def_property_readonly("width", &gc::BBox::width)
      .def_property_readonly("height", &gc::BBox::height)
      .def_property_readonly("area", &gc::BBox::area)
      .def("coords", [](const gc::BBox& b) { return std::make_tuple(b.x1(), b.y1(), b.x2(), b.y2()); })
      .def(py::self == py::self)
      .def("__repr__", [](const gc::BBox& b) {
        return "BBox(" + std::to_string(b.x1()) + ", " + std::to_string(b.y1()) + ", " +
               std::to_string(b.x2()) + ", " + std::to_string(b.y2()) + ")";
      });

  m.def("iou", &gc::iou, py::arg("a"), py::arg("b"));
  m.def("expand", &gc::expand, py::arg("box"), py::arg("ratio"));
  m.def("clip", &gc::clip, py::arg("box"), py::arg("bounds"));

  m.def("roundtrip_box",
        [](const gc::BBox& gt, const gc::BBox& proposal, double ratio) {
          gc::GridLayout layout;
          const auto target = gc::encode_target(gt, proposal, ratio, layout);
          return gc::points_to_box(gc::decode_points(target), layout);
        },
        py::arg("gt"), py::arg("proposal"), py::arg("ratio"),
        "Encodes gt as a grid target over the proposal region and decodes it back.");

  m.def("nms", &nms_indices, py::arg("boxes"), py::arg("scores"), py::arg("threshold"),
        "Indices kept by greedy suppression, in keep order.");

  m.def("average_precision",
        [](const std::vector<bool>& flags, std::size_t n_gt) {
          std::unique_ptr<bool[]> buf(new bool[flags.size() + 1]);
          for (std::size_t i = 0; i < flags.size(); ++i) buf[i] = flags[i];
          return gc::average_precision(std::span<const bool>(buf.get(), flags.size()), n_gt);
        },
        py::arg("tp_flags"), py::arg("n_gt"));

  m.def("fused_score",
        [](double cls, double iou, double resample, double gamma) {
          return gc::fused_score(gc::ScoreTriple{cls, iou, resample}, gamma);
        },
        py::arg("cls"), py::arg("iou"), py::arg("resample"), py::arg("gamma"));

  m.def("generate_scene",
        [](std::uint64_t seed, int id, int n_objects, double truncated_fraction) {
          gc::SceneParams p;
          p.n_objects = n_objects;
          p.truncated_fraction = truncated_fraction;
          const auto s = gc::generate_scene(seed, id, p);
          py::list gts;
          for (const auto& g : s.gts) {
            py::dict d;
            d["box"] = g.box;
            d["truncated"] = g.truncated;
            d["full_extent"] = g.full_extent;
            gts.append(d);
          }
          return gts;
        },
        py::arg("seed"), py::arg("id") = 0, py::arg("n_objects") = 3,
        py::arg("truncated_fraction") = 0.1);

  m.def("default_config", [] { return gc::config_to_json(gc::ExperimentConfig{}); });
  m.def("config_hash",
        [](const std::string& text, std::uint64_t seed) {
          return gc::config_hash(gc::parse_config(text, {}, seed));
        },
        py::arg("config_text"), py::arg("seed"));
  m.def("run_experiment", &experiment, py::arg("config_text"), py::arg("seed"),
        py::arg("overrides") = std::vector<std::string>{},
        "Runs one experiment from a JSON config document and returns its metrics.");

  py::register_exception<gc::UndecodableBoxError>(m, "UndecodableBoxError");
}
