#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "triseg/checkpoint.hpp"
#include "triseg/data.hpp"
#include "triseg/metrics.hpp"
#include "triseg/train.hpp"

namespace py = pybind11;
using namespace triseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Accepts (H, W) or (H, W, C); the copy keeps the tensor independent of numpy.
Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw ShapeError("expected a 2-D or 3-D array");
  const Shape s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1};
  return Tensor::from_data(s, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  FloatArray out({t.height(), t.width(), t.channels()});
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_triseg, m) {
  m.doc() = "Three-branch CNN segmentation core";
  m.attr("INPUT_SIZE") = kInputSize;
  m.attr("THRESHOLD") = kPredictionThreshold;

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  py::class_<TriChannelNet<float>>(m, "Net")
      .def_static("build", &TriChannelNet<float>::build, py::arg("seed"), py::arg("input_size") = kInputSize)
      .def_property_readonly("parameter_count", &TriChannelNet<float>::parameter_count)
      .def(
          "forward", [](const TriChannelNet<float>& net, const FloatArray& image) {
            return to_array(net.forward(to_tensor(image)));
          },
          py::arg("image"), "Probability map of shape (H, W, 1).")
      .def(
          "predict", [](const TriChannelNet<float>& net, const FloatArray& image) {
            return to_array(predict_mask(net, to_tensor(image)));
          },
          py::arg("image"), "Binary mask thresholded at p >= 0.5.")
      .def(py::self == py::self);

  py::class_<Confusion>(m, "Confusion")
      .def_readonly("tp", &Confusion::tp)
      .def_readonly("fp", &Confusion::fp)
      .def_readonly("fn", &Confusion::fn)
      .def_readonly("tn", &Confusion::tn)
      .def("__repr__", [](const Confusion& c) {
        return "Confusion(tp=" + std::to_string(c.tp) + ", fp=" + std::to_string(c.fp) +
               ", fn=" + std::to_string(c.fn) + ", tn=" + std::to_string(c.tn) + ")";
      });

  m.def("confusion", [](const FloatArray& pred, const FloatArray& truth) {
    return confusion(to_tensor(pred), to_tensor(truth));
  });
  m.def("iou", py::overload_cast<std::uint64_t, std::uint64_t, std::uint64_t>(&iou), py::arg("tp"), py::arg("fp"),
        py::arg("fn"));
  m.def(
      "rates", [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
        const auto r = rates(tp, fp, fn);
        return py::make_tuple(r.tpr, r.ppv);
      },
      py::arg("tp"), py::arg("fp"), py::arg("fn"), "Returns (tpr, ppv).");

  m.def(
      "phantoms",
      [](std::size_t n, std::uint64_t seed, std::size_t image_size) {
        PhantomSpec spec;
        spec.seed = seed;
        spec.image_size = image_size;
        py::list out;
        for (const auto& s : generate_phantoms(spec, n)) out.append(py::make_tuple(s.id, to_array(s.image), to_array(s.mask)));
        return out;
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("image_size") = 512,
      "List of (id, image, mask) tuples, already cropped to the 100x100 input window.");

  m.def(
      "save_checkpoint",
      [](const TriChannelNet<float>& net, const std::filesystem::path& path, std::uint32_t epoch, std::uint64_t seed) {
        save_checkpoint(net, CheckpointMeta{epoch, 0.0, seed, "{}"}, path);
      },
      py::arg("net"), py::arg("path"), py::arg("epoch") = 0, py::arg("seed") = 0);
  m.def(
      "load_checkpoint", [](const std::filesystem::path& path) { return load_checkpoint(path).net; },
      py::arg("path"));
}
