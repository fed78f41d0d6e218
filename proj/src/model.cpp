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

#include "blockcs/model.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "binary_io.hpp"
#include "blockcs/error.hpp"

namespace blockcs {

namespace {

constexpr std::size_t kSdaWidths[3] = {kBlockSize, 272, kBlockSize};

struct ConvShape {
  std::size_t kernel;
  std::size_t out_channels;
};
constexpr ConvShape kConvShapes[6] = {{11, 64}, {1, 32}, {7, 1}, {11, 64}, {1, 32}, {7, 1}};

constexpr std::size_t conv_in_channels(std::size_t layer) {
  return layer == 0 ? 1 : kConvShapes[layer - 1].out_channels;
}

Tensor flatten_blocks(const Tensor& blocks, const char* context) {
  if (blocks.rank() == 1 && blocks.dim(0) == kBlockSize) return blocks.reshaped({1, kBlockSize});
  if (blocks.rank() == 2 && blocks.dim(1) == kBlockSize) return blocks;
  throw ShapeError(std::string(context) + ": expected [1089] or [B, 1089] blocks, got " + to_string(blocks.shape()));
}

}  // namespace

double rate_value(MeasurementRate rate) {
  switch (rate) {
    case MeasurementRate::k0_25: return 0.25;
    case MeasurementRate::k0_10: return 0.10;
    case MeasurementRate::k0_04: return 0.04;
    case MeasurementRate::k0_01: return 0.01;
  }
  throw ConfigError("unknown measurement rate");
}

std::size_t measurement_count(MeasurementRate rate) {
  switch (rate) {
    case MeasurementRate::k0_25: return 272;
    case MeasurementRate::k0_10: return 108;
    case MeasurementRate::k0_04: return 43;
    case MeasurementRate::k0_01: return 10;
  }
  throw ConfigError("unknown measurement rate");
}

std::string rate_label(MeasurementRate rate) {
  switch (rate) {
    case MeasurementRate::k0_25: return "0.25";
    case MeasurementRate::k0_10: return "0.10";
    case MeasurementRate::k0_04: return "0.04";
    case MeasurementRate::k0_01: return "0.01";
  }
  throw ConfigError("unknown measurement rate");
}

MeasurementRate parse_rate(std::string_view text) {
  if (text == "0.25") return MeasurementRate::k0_25;
  if (text == "0.10" || text == "0.1") return MeasurementRate::k0_10;
  if (text == "0.04") return MeasurementRate::k0_04;
  if (text == "0.01") return MeasurementRate::k0_01;
  throw ConfigError("unsupported measurement rate '" + std::string(text) +
                    "' (expected one of 0.25, 0.10, 0.04, 0.01)");
}

MeasurementRate rate_from_value(double value) {
  for (auto rate : kAllRates) {
    if (rate_value(rate) == value) return rate;
  }
  throw ConfigError("unsupported measurement rate " + std::to_string(value));
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out{&sampling.weight, &sampling.bias};
  for (auto& layer : sda) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  for (auto& layer : conv) {
    out.push_back(&layer.kernels);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  auto mutable_params = const_cast<Model*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

const std::vector<std::string>& Model::parameter_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"sampling.weight", "sampling.bias"};
    for (int i = 1; i <= 3; ++i) {
      n.push_back("fc" + std::to_string(i) + ".weight");
      n.push_back("fc" + std::to_string(i) + ".bias");
    }
    for (int i = 1; i <= 6; ++i) {
      n.push_back("conv" + std::to_string(i) + ".kernels");
      n.push_back("conv" + std::to_string(i) + ".bias");
    }
    return n;
  }();
  return names;
}

bool Model::all_finite() const {
  for (const auto* p : parameters()) {
    if (!p->all_finite()) return false;
  }
  return true;
}

std::vector<Shape> parameter_shapes(MeasurementRate rate) {
  const std::size_t m = measurement_count(rate);
  std::vector<Shape> shapes{{m, kBlockSize}, {m}};
  std::size_t in = m;
  for (auto width : kSdaWidths) {
    shapes.push_back({width, in});
    shapes.push_back({width});
    in = width;
  }
  for (std::size_t i = 0; i < 6; ++i) {
    const auto [k, out] = kConvShapes[i];
    shapes.push_back({out, conv_in_channels(i), k, k});
    shapes.push_back({out});
  }
  return shapes;
}

std::vector<LayerSummary> describe_layers(const Model& model) {
  std::vector<LayerSummary> rows{{"SL", model.sampling.weight.shape(), model.sampling.bias.shape()}};
  for (std::size_t i = 0; i < 3; ++i) {
    rows.push_back({"FC" + std::to_string(i + 1), model.sda[i].weight.shape(), model.sda[i].bias.shape()});
  }
  for (std::size_t i = 0; i < 6; ++i) {
    rows.push_back({"CONV" + std::to_string(i + 1), model.conv[i].kernels.shape(), model.conv[i].bias.shape()});
  }
  return rows;
}

Model build_model(MeasurementRate rate, std::uint64_t seed) {
  Model model;
  model.rate = rate;
  model.seed = seed;
  model.sampling = DenseParams(measurement_count(rate), kBlockSize);
  std::size_t in = measurement_count(rate);
  for (std::size_t i = 0; i < 3; ++i) {
    model.sda[i] = DenseParams(kSdaWidths[i], in);
    in = kSdaWidths[i];
  }
  for (std::size_t i = 0; i < 6; ++i) {
    model.conv[i] = ConvParams(kConvShapes[i].out_channels, conv_in_channels(i), kConvShapes[i].kernel);
  }

  std::mt19937_64 rng(seed);
  auto init = [&rng](Tensor& weight, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : weight.values()) v = dist(rng);
  };
  init(model.sampling.weight, model.sampling.in_dim());
  for (auto& layer : model.sda) init(layer.weight, layer.in_dim());
  for (auto& layer : model.conv) {
    init(layer.kernels, layer.in_channels() * layer.kernel_size() * layer.kernel_size());
  }
  return model;
}

Tensor sample(const Model& model, const Tensor& block) {
  if (block.rank() == 0 || block.shape().back() != kBlockSize || block.rank() > 2) {
    throw ShapeError("sample: expected [1089] or [B, 1089] block, got " + to_string(block.shape()));
  }
  Tensor y = dense_forward(model.sampling, block);
  relu_inplace(y);
  return y;
}

Tensor initial_reconstruct(const Model& model, const Tensor& measurement) {
  Tensor x = measurement;
  for (const auto& layer : model.sda) {
    x = dense_forward(layer, x);
    relu_inplace(x);
  }
  return x;
}

Tensor deep_reconstruct(const Model& model, const Tensor& block_image) {
  const bool single = block_image.rank() == 3;
  const bool valid = (single || block_image.rank() == 4) && block_image.shape()[block_image.rank() - 3] == 1 &&
                     block_image.shape()[block_image.rank() - 2] == kBlockSide &&
                     block_image.shape()[block_image.rank() - 1] == kBlockSide;
  if (!valid) {
    throw ShapeError("deep_reconstruct: expected [1, 33, 33] or [B, 1, 33, 33], got " +
                     to_string(block_image.shape()));
  }
  Tensor x = block_image;
  for (std::size_t i = 0; i < 6; ++i) {
    x = conv2d_forward(model.conv[i], x);
    if (i < 5) relu_inplace(x);
  }
  return x;
}

Tensor forward(const Model& model, const Tensor& block) {
  const Tensor flat = flatten_blocks(block, "forward");
  const std::size_t batch = flat.dim(0);
  Tensor initial = initial_reconstruct(model, sample(model, flat));
  Tensor refined = deep_reconstruct(model, std::move(initial).reshaped({batch, 1, kBlockSide, kBlockSide}));
  return std::move(refined).reshaped(block.shape());
}

Tensor ForwardTrace::output() const {
  if (!full) return sda[2];
  return conv[5].reshaped({conv[5].dim(0), kBlockSize});
}

ForwardTrace forward_trace(const Model& model, const Tensor& blocks, bool through_conv) {
  ForwardTrace t;
  t.full = through_conv;
  t.input = flatten_blocks(blocks, "forward_trace");
  const std::size_t batch = t.input.dim(0);
  t.measurement = dense_forward(model.sampling, t.input);
  relu_inplace(t.measurement);
  const Tensor* x = &t.measurement;
  for (std::size_t i = 0; i < 3; ++i) {
    t.sda[i] = dense_forward(model.sda[i], *x);
    relu_inplace(t.sda[i]);
    x = &t.sda[i];
  }
  if (!through_conv) return t;

  const Tensor image = t.sda[2].reshaped({batch, 1, kBlockSide, kBlockSide});
  x = &image;
  for (std::size_t i = 0; i < 6; ++i) {
    t.conv[i] = conv2d_forward(model.conv[i], *x);
    if (i < 5) relu_inplace(t.conv[i]);
    x = &t.conv[i];
  }
  return t;
}

std::vector<Tensor> backward(const Model& model, const ForwardTrace& trace, const Tensor& output_grad) {
  const std::size_t batch = trace.input.dim(0);
  if (output_grad.shape() != Shape{batch, kBlockSize}) {
    throw ShapeError("backward: output gradient " + to_string(output_grad.shape()) + " does not match batch " +
                     to_string({batch, kBlockSize}));
  }
  std::vector<Tensor> grads(Model::kParameterCount);
  Tensor g;

  if (trace.full) {
    const Tensor image = trace.sda[2].reshaped({batch, 1, kBlockSide, kBlockSide});
    g = output_grad.reshaped({batch, 1, kBlockSide, kBlockSide});
    for (std::size_t i = 6; i-- > 0;) {
      if (i < 5) relu_backward_inplace(trace.conv[i], g);
      const Tensor& input = i == 0 ? image : trace.conv[i - 1];
      auto cg = conv2d_backward(model.conv[i], input, g);
      grads[Model::kFcParameterCount + 2 * i] = std::move(cg.kernels);
      grads[Model::kFcParameterCount + 2 * i + 1] = std::move(cg.bias);
      g = std::move(cg.input);
    }
    g = std::move(g).reshaped({batch, kBlockSize});
  } else {
    g = output_grad;
  }

  for (std::size_t i = 3; i-- > 0;) {
    relu_backward_inplace(trace.sda[i], g);
    const Tensor& input = i == 0 ? trace.measurement : trace.sda[i - 1];
    auto dg = dense_backward(model.sda[i], input, g);
    grads[2 + 2 * i] = std::move(dg.weight);
    grads[3 + 2 * i] = std::move(dg.bias);
    g = std::move(dg.input);
  }
  relu_backward_inplace(trace.measurement, g);
  auto sg = dense_backward(model.sampling, trace.input, g, /*need_input_grad=*/false);
  grads[0] = std::move(sg.weight);
  grads[1] = std::move(sg.bias);
  return grads;
}

namespace {
constexpr std::string_view kModelMagic = "BCSMODEL";
}

std::vector<std::uint8_t> serialize_model(const Model& model) {
  detail::ByteWriter w;
  w.magic(kModelMagic);
  w.put<std::uint32_t>(kModelFormatVersion);
  w.put<double>(rate_value(model.rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(measurement_count(model.rate)));
  w.put<std::uint64_t>(model.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(Model::kParameterCount));
  for (const auto* p : model.parameters()) w.tensor(*p);
  return w.take();
}

Model deserialize_model(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "model file");
  r.section("header");
  r.expect_magic(kModelMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw VersionError("model file: format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  const double value = r.get<double>();
  const auto m = r.get<std::uint32_t>();
  const auto seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  MeasurementRate rate;
  try {
    rate = rate_from_value(value);
  } catch (const ConfigError&) {
    r.fail("unsupported rate " + std::to_string(value));
  }
  if (m != measurement_count(rate)) r.fail("measurement count " + std::to_string(m) + " does not match rate");
  if (count != Model::kParameterCount) r.fail("parameter count " + std::to_string(count));

  Model model = build_model(rate, seed);
  const auto shapes = parameter_shapes(rate);
  const auto& names = Model::parameter_names();
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    r.section(names[i]);
    *params[i] = r.tensor(shapes[i]);
  }
  r.expect_end();
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path, serialize_model(model));
}

Model load_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return deserialize_model(bytes);
  } catch (const FormatError& e) {
    if (dynamic_cast<const VersionError*>(&e)) throw VersionError(path.string() + ": " + e.what());
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace detail

}  // namespace blockcs
