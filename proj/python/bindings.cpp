/*
 *  Copyright 2026 The blockcs Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include <map>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "blockcs/data.hpp"
#include "blockcs/error.hpp"
#include "blockcs/eval.hpp"
#include "blockcs/model.hpp"
#include "blockcs/train.hpp"
#include "blockcs/verify.hpp"

namespace py = pybind11;
using namespace blockcs;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

GrayImage to_image(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D image array");
  GrayImage img(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array image_to_array(const GrayImage& img) {
  Array out({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width)});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

MeasurementRate rate_arg(const py::object& rate) {
  if (py::isinstance<py::str>(rate)) return parse_rate(rate.cast<std::string>());
  return rate_from_value(rate.cast<double>());
}

}  // namespace

PYBIND11_MODULE(_blockcs, m) {
  m.doc() = "Learned block compressed sensing (sampling + SDA + CNN reconstruction).";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  auto format = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<VersionError>(m, "VersionError", format.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<ModeError>(m, "ModeError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  m.attr("BLOCK_SIDE") = kBlockSide;
  m.attr("BLOCK_SIZE") = kBlockSize;
  m.attr("RATES") = [] {
    std::vector<std::string> out;
    for (auto r : kAllRates) out.push_back(rate_label(r));
    return out;
  }();
  m.def("measurement_count", [](const py::object& rate) { return measurement_count(rate_arg(rate)); },
        py::arg("rate"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("rate", [](const Model& md) { return rate_label(md.rate); })
      .def_property_readonly("seed", [](const Model& md) { return md.seed; })
      .def_property_readonly("measurements", [](const Model& md) { return measurement_count(md.rate); })
      .def("parameters",
           [](const Model& md) {
             py::dict out;
             const auto& names = Model::parameter_names();
             const auto params = md.parameters();
             for (std::size_t i = 0; i < params.size(); ++i) out[py::str(names[i])] = to_array(*params[i]);
             return out;
           })
      .def("save", [](const Model& md, const std::filesystem::path& p) { save_model(md, p); }, py::arg("path"))
      .def("to_bytes",
           [](const Model& md) {
             const auto b = serialize_model(md);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def("__eq__", [](const Model& a, const Model& b) { return a == b; })
      .def("__repr__", [](const Model& md) {
        return "<blockcs.Model rate=" + rate_label(md.rate) + " seed=" + std::to_string(md.seed) + ">";
      });

  m.def("build_model", [](const py::object& rate, std::uint64_t seed) { return build_model(rate_arg(rate), seed); },
        py::arg("rate"), py::arg("seed") = 0);
  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p); }, py::arg("path"));
  m.def("model_from_bytes", [](const py::bytes& b) {
    const std::string s = b;
    return deserialize_model(std::vector<std::uint8_t>(s.begin(), s.end()));
  });

  m.def("sample", [](const Model& md, const Array& x) { return to_array(sample(md, to_tensor(x))); },
        py::arg("model"), py::arg("blocks"), "Measurements of [1089] or [B, 1089] blocks.");
  m.def("forward", [](const Model& md, const Array& x) { return to_array(forward(md, to_tensor(x))); },
        py::arg("model"), py::arg("blocks"), "Full sample-and-reconstruct pipeline on flattened blocks.");
  m.def("reconstruct_image", [](const Model& md, const Array& img) {
    return image_to_array(reconstruct_image(md, to_image(img)));
  }, py::arg("model"), py::arg("image"));
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });

  m.def("load_gray", [](const std::filesystem::path& p) { return image_to_array(load_gray(p)); }, py::arg("path"));
  m.def("save_pgm", [](const Array& img, const std::filesystem::path& p) { save_pgm(to_image(img), p); },
        py::arg("image"), py::arg("path"));
  m.def("training_blocks", [](const Array& img, std::size_t stride) {
    const BlockGrid grid = extract_training_blocks(to_image(img), stride);
    return to_array(Dataset::from_blocks(grid.blocks).blocks());
  }, py::arg("image"), py::arg("stride") = 12, "Overlapping 33x33 blocks as a [N, 1089] array.");

  m.def("baseline_reconstruct_image", [](const Array& img, const py::object& rate, std::uint64_t seed, double lambda) {
    const GaussianBaseline b = make_gaussian_baseline(rate_arg(rate), seed);
    const TikhonovSolver solver(b.phi, lambda);
    return image_to_array(reconstruct_image(b, solver, to_image(img)));
  }, py::arg("image"), py::arg("rate"), py::arg("seed") = 0, py::arg("lam") = kDefaultTikhonovLambda);

  m.def(
      "train",
      [](const py::object& rate, const std::filesystem::path& data_dir, std::uint64_t iterations,
         std::size_t batch, const std::string& optimizer, std::uint64_t seed, double lr, std::size_t stride) {
        TrainConfig cfg;
        cfg.iterations = iterations;
        cfg.batch_size = batch;
        cfg.optimizer = parse_optimizer(optimizer);
        cfg.seed = seed;
        cfg.learning_rate = lr;
        cfg.validate();
        const MeasurementRate r = rate_arg(rate);
        TrainResult result;
        {
          py::gil_scoped_release release;
          const Dataset data = build_dataset(data_dir, stride, seed);
          result = train(build_model(r, seed), data, cfg);
        }
        std::vector<std::pair<std::uint64_t, double>> history;
        for (const auto& rec : result.history.records) history.emplace_back(rec.iteration, rec.loss);
        return py::make_tuple(std::move(result.model), history);
      },
      py::arg("rate"), py::arg("data_dir"), py::arg("iterations") = 100, py::arg("batch") = 64,
      py::arg("optimizer") = "adam", py::arg("seed") = 0, py::arg("lr") = 0.001, py::arg("stride") = 12,
      "Trains a fresh model end to end; returns (model, [(iteration, loss), ...]).");

  m.def(
      "evaluate",
      [](const std::vector<Model>& models, const std::filesystem::path& test_dir, std::uint64_t seed) {
        std::map<MeasurementRate, Model> by_rate;
        for (const auto& md : models) {
          if (!by_rate.emplace(md.rate, md).second) {
            throw ConfigError("two models given for rate " + rate_label(md.rate));
          }
        }
        EvalOptions opt;
        opt.baseline_seed = seed;
        const EvalReport report = evaluate(by_rate, test_dir, opt);
        py::list rows;
        for (const auto& e : report.entries) {
          py::dict row;
          row["image"] = e.image;
          row["rate"] = rate_label(e.rate);
          row["method"] = e.method;
          row["psnr_db"] = e.psnr_db;
          row["recon_seconds"] = e.recon_seconds;
          rows.append(row);
        }
        return rows;
      },
      py::arg("models"), py::arg("test_dir"), py::arg("seed") = 0);

  m.def("verify", [] {
    py::list out;
    for (const auto& check : default_checks()) {
      const CheckOutcome r = check.run();
      out.append(py::make_tuple(r.name, r.passed, r.detail));
    }
    return out;
  }, "Runs the gradient and blocking self-checks; returns [(name, passed, detail), ...].");
}
