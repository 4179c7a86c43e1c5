// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "uaglnet/checkpoint.hpp"
#include "uaglnet/data.hpp"
#include "uaglnet/gradcheck.hpp"
#include "uaglnet/losses.hpp"
#include "uaglnet/metrics.hpp"
#include "uaglnet/model.hpp"
#include "uaglnet/trainer.hpp"

namespace py = pybind11;
using namespace uaglnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorF to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return TensorF(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const TensorF& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

// Preset name, then dict entries, with the values stringified the same way a config file would be.
RunConfig make_config(const std::string& preset, const py::dict& overrides) {
  RunConfig cfg = preset == "desk" ? desk_config() : RunConfig{};
  if (preset != "desk" && preset != "full") throw ConfigError("unknown preset '" + preset + "'");
  KeyValues kv;
  for (const auto& [k, v] : overrides) {
    std::string text;
    if (py::isinstance<py::bool_>(v)) {
      text = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) text += (text.empty() ? "" : ",") + py::str(item).cast<std::string>();
    } else {
      text = py::str(v).cast<std::string>();
    }
    kv[k.cast<std::string>()] = text;
  }
  cfg = apply_key_values(cfg, kv);
  cfg.model.validate();
  cfg.data.validate();
  return cfg;
}

py::dict metrics_dict(const ConfusionCounts& c) {
  const auto m = metrics_from_counts(c);
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["iou"] = m.iou;
  d["tp"] = c.tp;
  d["fp"] = c.fp;
  d["tn"] = c.tn;
  d["fn"] = c.fn;
  d["zero_denominator"] = m.zero_denominator;
  return d;
}

/// Float model plus the config it was built from.
class Model {
 public:
  Model(const RunConfig& cfg, std::uint64_t seed) : cfg_(cfg), net_(cfg.model, seed) {}

  static Model from_checkpoint(const std::string& path) {
    const auto ck = load_checkpoint(path);
    Model m(config_from_checkpoint(ck), 0);
    load_parameters(m.net_, ck);
    return m;
  }

  py::dict predict(const FloatArray& image, std::uint64_t seed) const {
    const auto inf = infer_image(net_, to_tensor(image), cfg_.model.tile, seed);
    py::dict d;
    d["logits"] = to_array(inf.logits);
    d["u_local"] = to_array(inf.u_local);
    d["u_global"] = to_array(inf.u_global);
    return d;
  }

  py::dict evaluate(const std::string& split, int scenes, int difficulty) const {
    auto data = cfg_.data;
    data.difficulty = difficulty;
    const Split s = split == "test" ? Split::Test : Split::Validation;
    if (split != "test" && split != "validation") throw ConfigError("split must be validation or test");
    const auto r = evaluate_scenes(net_, make_scenes(data, s, scenes), cfg_.model.tile, cfg_.model.threshold,
                                   cfg_.model.seed);
    return metrics_dict(r.counts);
  }

  py::dict config() const {
    py::dict d;
    for (const auto& [k, v] : to_key_values(cfg_)) d[py::str(k)] = v;
    return d;
  }

  Index num_parameters() const { return count_parameters(cfg_.model); }

 private:
  RunConfig cfg_;
  UaglNet<float> net_;
};

}  // namespace

PYBIND11_MODULE(_uaglnet, m) {
  m.doc() = "Building extraction with global-local fusion and uncertainty aggregation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "InvalidValueError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_IOError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

  m.def(
      "config",
      [](const std::string& preset, const py::dict& overrides) {
        py::dict d;
        for (const auto& [k, v] : to_key_values(make_config(preset, overrides))) d[py::str(k)] = v;
        return d;
      },
      py::arg("preset") = "desk", py::arg("overrides") = py::dict(),
      "Resolved configuration as a dict of strings.");

  m.def(
      "count_parameters",
      [](const std::string& preset, const py::dict& overrides) {
        py::dict d;
        for (const auto& [name, n] : parameter_breakdown(make_config(preset, overrides).model)) d[py::str(name)] = n;
        return d;
      },
      py::arg("preset") = "full", py::arg("overrides") = py::dict());

  m.def(
      "synthetic_scene",
      [](std::uint64_t seed, Index size, int difficulty) {
        const auto s = generate_synthetic_scene(seed, size, options_for_difficulty(difficulty));
        return py::make_tuple(to_array(s.image), to_array(s.mask));
      },
      py::arg("seed"), py::arg("size") = 64, py::arg("difficulty") = 0,
      "(image [3, H, W], mask [1, H, W]) as float32 arrays.");

  m.def("load_image", [](const std::string& path) { return to_array(load_image(path)); });
  m.def("save_image", [](const std::string& path, const FloatArray& a) { save_image(path, to_tensor(a)); });
  m.def("save_mask", [](const std::string& path, const FloatArray& a) { save_mask(path, to_tensor(a)); });

  m.def(
      "metrics",
      [](const FloatArray& pred, const FloatArray& target) {
        return metrics_dict(confusion_counts_binary(to_tensor(pred), to_tensor(target)));
      },
      py::arg("prediction"), py::arg("target"), "Binary masks of equal shape.");

  m.def(
      "aggregate",
      [](const FloatArray& local, const FloatArray& global, const FloatArray& u_local, const FloatArray& u_global) {
        return to_array(aggregate(to_tensor(local), to_tensor(global), to_tensor(u_local), to_tensor(u_global)));
      },
      py::arg("local"), py::arg("global"), py::arg("u_local"), py::arg("u_global"));

  m.def(
      "uncertainty_map",
      [](const std::vector<FloatArray>& samples) {
        std::vector<TensorF> s;
        for (const auto& a : samples) s.push_back(to_tensor(a));
        return to_array(uncertainty_map(s));
      },
      "Min-max normalized sample variance of [1, h, w] samples.");

  m.def(
      "seg_loss",
      [](const FloatArray& logits, const FloatArray& target, double gamma) {
        const auto l = seg_loss(cast<double>(to_tensor(logits)), cast<double>(to_tensor(target)), gamma);
        py::dict d;
        d["total"] = l.total.item();
        d["dice"] = l.dice.item();
        d["bce"] = l.bce.item();
        d["boundary"] = l.boundary.item();
        return d;
      },
      py::arg("logits"), py::arg("target"), py::arg("gamma") = 1.0);

  m.def(
      "gradcheck",
      [](int instances, std::uint64_t seed, const std::string& filter) {
        py::list out;
        for (const auto& r : run_gradchecks(instances, seed, filter)) {
          py::dict d;
          d["name"] = r.name;
          d["instances"] = r.instances;
          d["max_error"] = r.max_error;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("instances") = 10, py::arg("seed") = 0, py::arg("filter") = "");

  m.def(
      "train",
      [](const std::string& preset, const py::dict& overrides, const std::string& out, const std::string& log) {
        const auto cfg = make_config(preset, overrides);
        TrainSummary s;
        {
          py::gil_scoped_release release;
          s = train<float>(cfg, TrainOptions{out, log, "", nullptr});
        }
        py::dict d;
        d["steps"] = s.steps;
        d["first_loss"] = s.first_loss;
        d["last_loss"] = s.last_loss;
        d["val_iou"] = s.val_iou;
        d["seconds"] = s.seconds;
        d["final"] = metrics_dict(s.final_eval.counts);
        return d;
      },
      py::arg("preset") = "desk", py::arg("overrides") = py::dict(), py::arg("out") = "", py::arg("log") = "",
      "Train in 32-bit; writes a checkpoint when `out` is set.");

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& preset, const py::dict& overrides, std::uint64_t seed) {
             return Model(make_config(preset, overrides), seed);
           }),
           py::arg("preset") = "desk", py::arg("overrides") = py::dict(), py::arg("seed") = 0)
      .def_static("load", &Model::from_checkpoint, py::arg("path"))
      .def("predict", &Model::predict, py::arg("image"), py::arg("seed") = 0,
           "Tiled inference on a [3, H, W] image in [0, 1].")
      .def("evaluate", &Model::evaluate, py::arg("split") = "test", py::arg("scenes") = 16,
           py::arg("difficulty") = 0)
      .def("config", &Model::config)
      .def_property_readonly("num_parameters", &Model::num_parameters);
}
