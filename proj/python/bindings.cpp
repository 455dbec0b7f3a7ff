#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "eat/checkpoint.hpp"
#include "eat/config.hpp"
#include "eat/data.hpp"
#include "eat/explain.hpp"
#include "eat/far.hpp"
#include "eat/model.hpp"

namespace py = pybind11;
using namespace eat;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  Shape shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(static_cast<int>(arr.shape(i)));
  std::vector<float> data(arr.data(), arr.data() + arr.size());
  return Tensor::from(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

py::dict explanation_dict(const Explanation& e) {
  py::dict d;
  d["image_id"] = e.image_id;
  d["predicted_class"] = e.predicted_class;
  d["predicted_class_name"] = e.predicted_class_name;
  d["true_class"] = e.true_class ? py::object(py::int_(*e.true_class)) : py::none();
  py::list attrs;
  for (const ExplanationAttribute& a : e.top_attributes) {
    py::dict ad;
    ad["attribute_name"] = a.attribute_name;
    ad["score"] = a.score;
    ad["predicted_presence"] = a.predicted_presence;
    ad["map_file"] = a.map_file;
    attrs.append(ad);
  }
  d["top_attributes"] = attrs;
  d["sentence"] = e.sentence;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attribute-based multi-task classification with attention attribution";

  py::register_exception<Error>(m, "EatError");

  py::enum_<Mode>(m, "Mode").value("BASELINE", Mode::Baseline).value("EAT", Mode::Eat);
  py::enum_<Split>(m, "Split").value("TRAIN", Split::Train).value("TEST", Split::Test);

  py::class_<EatConfig>(m, "Config")
      .def(py::init<>())
      .def_readwrite("n_classes", &EatConfig::n_classes)
      .def_readwrite("n_attributes", &EatConfig::n_attributes)
      .def_readwrite("d_e", &EatConfig::d_e)
      .def_readwrite("lambda_", &EatConfig::lambda)
      .def_readwrite("eta", &EatConfig::eta)
      .def_readwrite("image_size", &EatConfig::image_size)
      .def_readwrite("trunk_channels", &EatConfig::trunk_channels)
      .def_readwrite("head_channels", &EatConfig::head_channels)
      .def_readwrite("gi_channels", &EatConfig::gi_channels)
      .def_readwrite("lr", &EatConfig::lr)
      .def_readwrite("momentum", &EatConfig::momentum)
      .def_readwrite("epochs", &EatConfig::epochs)
      .def_readwrite("seed", &EatConfig::seed)
      .def_readwrite("mode", &EatConfig::mode)
      .def("validate", &EatConfig::validate)
      .def("warnings", &EatConfig::warnings)
      .def("to_text", &eat_config_to_text)
      .def("__repr__", [](const EatConfig& c) {
        return "Config(n_classes=" + std::to_string(c.n_classes) + ", n_attributes=" +
               std::to_string(c.n_attributes) + ", image_size=" + std::to_string(c.image_size) + ")";
      });

  py::class_<Sample>(m, "Sample")
      .def_readonly("image_id", &Sample::image_id)
      .def_readonly("label", &Sample::label)
      .def_property_readonly("split", [](const Sample& s) { return s.split; })
      .def_property_readonly("image", [](const Sample& s) { return array_from_tensor(s.image); })
      .def_property_readonly("attributes",
                             [](const Sample& s) { return std::vector<int>(s.attributes.begin(), s.attributes.end()); })
      .def_property_readonly("mask", [](const Sample& s) -> py::object {
        if (!s.mask) return py::none();
        return array_from_tensor(s.mask->values);
      });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_classes", [](const Dataset& d) { return d.attributes.n_classes; })
      .def_property_readonly("n_attributes", [](const Dataset& d) { return d.attributes.n_attributes; })
      .def_property_readonly("attribute_names", [](const Dataset& d) { return d.attributes.attribute_names; })
      .def_property_readonly("class_names", [](const Dataset& d) { return d.attributes.class_names; })
      .def_property_readonly(
          "attribute_matrix",
          [](const Dataset& d) {
            py::array_t<std::uint8_t> out({d.attributes.n_classes, d.attributes.n_attributes});
            std::copy(d.attributes.values.begin(), d.attributes.values.end(), out.mutable_data());
            return out;
          })
      .def("__len__", [](const Dataset& d) { return d.samples.size(); })
      .def(
          "__getitem__",
          [](const Dataset& d, std::size_t i) -> const Sample& {
            if (i >= d.samples.size()) throw py::index_error();
            return d.samples[i];
          },
          py::return_value_policy::reference_internal);

  m.def(
      "generate_dataset",
      [](const std::string& out_dir, int classes, int attributes, int per_class, int test_per_class, int image_size,
         float bias_train, float bias_test, std::uint64_t seed) {
        SynthSpec spec;
        spec.n_classes = classes;
        spec.n_attributes = attributes;
        spec.per_class = per_class;
        spec.test_per_class = test_per_class;
        spec.image_size = image_size;
        spec.bias_train = bias_train;
        spec.bias_test = bias_test;
        spec.seed = seed;
        synth_generate(spec, out_dir);
      },
      py::arg("out_dir"), py::arg("classes") = 8, py::arg("attributes") = 6, py::arg("per_class") = 200,
      py::arg("test_per_class") = 50, py::arg("image_size") = 32, py::arg("bias_train") = 0.95f,
      py::arg("bias_test") = 0.0f, py::arg("seed") = 1,
      "Render the synthetic biased dataset into a directory");

  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("load_cub_format", &load_cub_format, py::arg("root"), py::arg("threshold") = 0.5f,
        py::arg("image_size") = 32);

  py::class_<EatModel>(m, "Model")
      .def_static("init", &EatModel::init, py::arg("config"))
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_property_readonly("config", [](const EatModel& m_) { return m_.cfg; })
      .def(
          "save", [](const EatModel& model, const std::string& path) { save_checkpoint(model, path); },
          py::arg("path"))
      .def(
          "train",
          [](EatModel& model, const Dataset& dataset) {
            TrainingReport r = train(model, dataset);
            py::list out;
            for (const EpochStats& e : r.epochs) {
              py::dict d;
              d["epoch"] = e.epoch;
              d["l_c"] = e.l_c;
              d["l_a"] = e.l_a;
              d["accuracy"] = e.accuracy;
              d["attr_accuracy"] = e.attr_accuracy;
              out.append(d);
            }
            return out;
          },
          py::arg("dataset"))
      .def(
          "predict",
          [](const EatModel& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& image) {
            Prediction p = predict(model, tensor_from_array(image));
            return py::make_tuple(p.class_index, p.attribute_probs);
          },
          py::arg("image"))
      .def(
          "evaluate",
          [](const EatModel& model, const Dataset& dataset, Split split) {
            EvalMetrics e = evaluate(model, dataset, split);
            py::dict d;
            d["category_accuracy"] = e.category_accuracy;
            d["mean_attribute_accuracy"] =
                e.mean_attribute_accuracy ? py::object(py::float_(*e.mean_attribute_accuracy)) : py::none();
            d["per_attribute_accuracy"] = e.per_attribute_accuracy;
            d["sample_count"] = e.sample_count;
            return d;
          },
          py::arg("dataset"), py::arg("split") = Split::Test)
      .def(
          "ear_scores",
          [](const EatModel& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& image,
             int target_class) {
            ContributionVector cv = ear_scores(model, tensor_from_array(image), target_class);
            py::array_t<float> w({cv.n_attributes, cv.d_e});
            std::copy(cv.w.begin(), cv.w.end(), w.mutable_data());
            py::array_t<float> s(static_cast<py::ssize_t>(cv.s.size()));
            std::copy(cv.s.begin(), cv.s.end(), s.mutable_data());
            return py::make_tuple(s, w);
          },
          py::arg("image"), py::arg("target_class"),
          "Contribution scores: (per-attribute sums, full gradient matrix)")
      .def(
          "grad_cam",
          [](const EatModel& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& image,
             const std::string& kind, int index, int layer) {
            const CamTarget target =
                kind == "attribute" ? CamTarget::attribute(index) : CamTarget::category(index);
            if (kind != "attribute" && kind != "category") throw Error("grad_cam: kind must be category or attribute");
            return array_from_tensor(grad_cam(model, tensor_from_array(image), target, layer).values);
          },
          py::arg("image"), py::arg("kind"), py::arg("index"), py::arg("layer") = -1)
      .def(
          "explain",
          [](const EatModel& model, const py::array_t<float, py::array::c_style | py::array::forcecast>& image,
             const std::string& image_id, const std::vector<std::string>& attr_names,
             const std::vector<std::string>& class_names) {
            return explanation_dict(explain_image(model, tensor_from_array(image), image_id, attr_names, class_names));
          },
          py::arg("image"), py::arg("image_id"), py::arg("attr_names"), py::arg("class_names"))
      .def(
          "far_batch",
          [](const EatModel& model, const Dataset& dataset, Split split, int layer, bool correct_only, int threads) {
            FarBatchOptions opts;
            opts.split = split;
            opts.layer = layer;
            opts.correct_only = correct_only;
            opts.threads = threads;
            FarReport r = far_batch(model, dataset, opts);
            py::dict d;
            d["mean_far"] = r.mean_far;
            py::list rows;
            for (const FarRow& row : r.per_image) {
              py::dict rd;
              rd["image_id"] = row.image_id;
              rd["far"] = row.value.far;
              rd["pi_fg"] = row.value.pi_fg;
              rd["pi_bg"] = row.value.pi_bg;
              rd["saturated"] = row.value.saturated;
              rows.append(rd);
            }
            d["per_image"] = rows;
            d["skipped"] = r.skipped;
            return d;
          },
          py::arg("dataset"), py::arg("split") = Split::Test, py::arg("layer") = -1,
          py::arg("correct_only") = false, py::arg("threads") = 1);

  m.def(
      "pixel_importance",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& at,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& mask) {
        return pixel_importance(tensor_from_array(at), tensor_from_array(mask));
      },
      py::arg("attention"), py::arg("mask"));

  m.def(
      "far",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& at,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& mask) {
        const FarValue v = far(tensor_from_array(at), ForegroundMask::from_plane(tensor_from_array(mask)));
        py::dict d;
        d["far"] = v.far;
        d["pi_fg"] = v.pi_fg;
        d["pi_bg"] = v.pi_bg;
        d["saturated"] = v.saturated;
        return d;
      },
      py::arg("attention"), py::arg("mask"), "Foreground attention rate of one map against a binary mask");
}
