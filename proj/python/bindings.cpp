#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "aaunet/checkpoint.hpp"
#include "aaunet/config.hpp"
#include "aaunet/dataset.hpp"
#include "aaunet/errors.hpp"
#include "aaunet/metrics.hpp"
#include "aaunet/overlay.hpp"
#include "aaunet/train.hpp"

namespace py = pybind11;
using namespace aaunet;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

TensorF tensor_from(const FloatArray& a) {
  if (a.ndim() != 4) throw DimensionError("expected an N x C x H x W array");
  Shape s(a.shape(), a.shape() + 4);
  return TensorF(s, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> array_from(const TensorF& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  const auto d = t.data();
  std::copy(d.begin(), d.end(), out.mutable_data());
  return out;
}

py::array_t<uint8_t> masks_to_array(const std::vector<SegMask>& masks) {
  const py::ssize_t h = masks.empty() ? 0 : masks[0].height, w = masks.empty() ? 0 : masks[0].width;
  py::array_t<uint8_t> out({static_cast<py::ssize_t>(masks.size()), h, w});
  auto* p = out.mutable_data();
  for (const auto& m : masks) p = std::copy(m.labels.begin(), m.labels.end(), p);
  return out;
}

std::vector<SegMask> masks_from(const LabelArray& a) {
  if (a.ndim() != 3) throw DimensionError("expected an N x H x W label array");
  std::vector<SegMask> out;
  const int64_t h = a.shape(1), w = a.shape(2);
  for (py::ssize_t n = 0; n < a.shape(0); ++n) {
    SegMask m(h, w);
    std::copy(a.data() + n * h * w, a.data() + (n + 1) * h * w, m.labels.begin());
    out.push_back(std::move(m));
  }
  return out;
}

SegMask mask_from(const LabelArray& a) {
  if (a.ndim() != 2) throw DimensionError("expected an H x W label array");
  SegMask m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.labels.begin());
  return m;
}

py::object optional_float(const std::optional<double>& v) {
  return v ? py::object(py::float_(*v)) : py::object(py::none());
}

json parse_config(const std::string& j) {
  if (j.empty()) return json::object();
  try {
    return json::parse(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config JSON: ") + e.what());
  }
}

ModelConfig model_config(const std::string& j) {
  auto cfg = model_config_from_json(parse_config(j));
  cfg.validate();
  return cfg;
}

TrainConfig train_config(const std::string& j) {
  auto cfg = train_config_from_json(parse_config(j));
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "All-attention U-Net core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

  m.attr("CLASS_NAMES") = [] {
    py::list names;
    for (auto n : kClassNames) names.append(std::string(n));
    return names;
  }();

  py::class_<PhantomCase>(m, "Case")
      .def_readonly("patient_id", &PhantomCase::patient_id)
      .def_readonly("size", &PhantomCase::size)
      .def_property_readonly("n_slices", &PhantomCase::n_slices)
      .def_property_readonly("images", [](const PhantomCase& pc) {
        py::array_t<float> out({static_cast<py::ssize_t>(pc.n_slices()), static_cast<py::ssize_t>(pc.size),
                                static_cast<py::ssize_t>(pc.size)});
        auto* p = out.mutable_data();
        for (const auto& im : pc.images) p = std::copy(im.pixels.begin(), im.pixels.end(), p);
        return out;
      })
      .def_property_readonly("masks", [](const PhantomCase& pc) { return masks_to_array(pc.masks); })
      .def("stack", [](const PhantomCase& pc, int slice) {
        const auto st = stack_slices(pc, slice);
        return array_from(stacks_to_tensor({st}));
      }, py::arg("slice"), "previous, centre and next slice as a 1 x 3 x H x W array");

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("cases", [](const Dataset& d) { return &d.cases; }, py::return_value_policy::reference_internal)
      .def_property_readonly("lesion_free_fraction", [](const Dataset& d) { return d.manifest.lesion_free_fraction; })
      .def("patients", [](const Dataset& d, const std::string& split) { return d.manifest.patients_in(split); })
      .def("split_counts", [](const Dataset& d) {
        const auto c = d.manifest.counts();
        return py::make_tuple(c.train, c.val, c.test);
      });

  m.def("generate_dataset", py::overload_cast<uint64_t, int, int>(&generate_dataset), py::arg("seed"),
        py::arg("n_cases"), py::arg("size"), py::call_guard<py::gil_scoped_release>());
  m.def("write_dataset", [](const std::filesystem::path& root, uint64_t seed, int n, int size) {
    write_dataset(root, seed, n, size);
  }, py::arg("root"), py::arg("seed"), py::arg("n_cases"), py::arg("size"), py::call_guard<py::gil_scoped_release>());
  m.def("load_dataset", &load_dataset, py::arg("root"));

  py::class_<Model<float>>(m, "Model")
      .def(py::init([](const std::string& config_json, uint64_t seed) {
        return Model<float>(model_config(config_json), seed);
      }), py::arg("config_json") = "", py::arg("seed") = 0)
      .def_property_readonly("config_json", [](const Model<float>& mm) { return to_json(mm.config()).dump(); })
      .def_property_readonly("variant", [](const Model<float>& mm) { return mm.config().variant_name(); })
      .def_property_readonly("parameter_count", [](const Model<float>& mm) { return mm.params().scalar_count(); })
      .def("parameters", [](const Model<float>& mm) {
        std::vector<std::pair<std::string, Shape>> out;
        for (const auto& [name, t] : mm.params().entries()) out.emplace_back(name, t.shape());
        return out;
      })
      .def("forward", [](const Model<float>& mm, const FloatArray& x) {
        ModelOutput<float> out;
        {
          py::gil_scoped_release release;
          NoGradGuard ng;
          out = mm.forward(tensor_from(x));
        }
        py::list alphas;
        for (const auto& a : out.alphas) alphas.append(array_from(a));
        return py::make_tuple(array_from(out.logits), alphas);
      }, py::arg("x"), "(logits N x K x H x W, [alpha maps, deepest first])")
      .def("predict", [](const Model<float>& mm, const FloatArray& x) {
        std::vector<SegMask> masks;
        {
          py::gil_scoped_release release;
          NoGradGuard ng;
          masks = predict_mask(mm.logits(tensor_from(x)));
        }
        return masks_to_array(masks);
      }, py::arg("x"))
      .def("save", [](const Model<float>& mm, const std::filesystem::path& p) {
        write_checkpoint(p, checkpoint_from_model(mm));
      }, py::arg("path"));
  m.def("load_model", [](const std::filesystem::path& p) { return model_from_checkpoint(read_checkpoint(p)); },
        py::arg("path"));

  m.def("focal_loss", [](const FloatArray& logits, const LabelArray& targets, const std::vector<double>& weights,
                         double gamma) {
    const auto t = masks_from(targets);
    NoGradGuard ng;
    return focal_loss(tensor_from(logits), std::span<const SegMask>(t), weights, gamma).item();
  }, py::arg("logits"), py::arg("targets"), py::arg("weights"), py::arg("gamma") = 2.0);
  m.def("dice_score", [](const LabelArray& pred, const LabelArray& truth, int cls) {
    return optional_float(dice_score(mask_from(pred), mask_from(truth), cls));
  }, py::arg("pred"), py::arg("truth"), py::arg("cls"));
  m.def("evaluate", [](const Model<float>& mm, const Dataset& d, const std::string& split) {
    DiceReport r;
    {
      py::gil_scoped_release release;
      r = evaluate(mm, d.split(split));
    }
    return r.to_json().dump();
  }, py::arg("model"), py::arg("dataset"), py::arg("split") = "test");
  m.def("render_overlay", [](const FloatArray& image, const LabelArray& mask, double opacity) {
    if (image.ndim() != 2) throw DimensionError("expected an H x W image");
    Image img(image.shape(0), image.shape(1));
    std::copy(image.data(), image.data() + image.size(), img.pixels.begin());
    const auto rgb = render_overlay(img, mask_from(mask), opacity);
    py::array_t<uint8_t> out({image.shape(0), image.shape(1), py::ssize_t{3}});
    std::copy(rgb.begin(), rgb.end(), out.mutable_data());
    return out;
  }, py::arg("image"), py::arg("mask"), py::arg("opacity") = 0.6);

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const std::string& config_json, const Dataset& d, const std::filesystem::path& out) {
        return std::make_unique<Trainer>(train_config(config_json), d.split("train"), d.split("val"), out);
      }), py::arg("config_json"), py::arg("dataset"), py::arg("out_dir") = std::filesystem::path(),
           py::keep_alive<1, 3>())
      .def("step", &Trainer::step, py::call_guard<py::gil_scoped_release>())
      .def("run_until", &Trainer::run_until, py::arg("steps"), py::call_guard<py::gil_scoped_release>())
      .def_property_readonly("steps_done", &Trainer::steps_done)
      .def_property_readonly("losses", [](const Trainer& t) {
        std::vector<double> out;
        for (const auto& r : t.history()) out.push_back(r.loss);
        return out;
      })
      .def("validate", [](Trainer& t) {
        const auto r = t.validate();
        return r ? py::object(py::str(r->to_json().dump())) : py::object(py::none());
      })
      .def_property_readonly("model", [](const Trainer& t) { return t.model(); })
      .def("best_model", &Trainer::best_model)
      .def("save_checkpoint", &Trainer::save_checkpoint, py::arg("path"));
}
