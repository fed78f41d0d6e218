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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "blockcs/tensor.hpp"

namespace blockcs {

inline constexpr std::size_t kBlockSide = 33;
inline constexpr std::size_t kBlockSize = kBlockSide * kBlockSide;  // 1089

/// The four supported measurement rates. Everything about the architecture
/// except the sampling layer width is rate-independent.
enum class MeasurementRate { k0_25, k0_10, k0_04, k0_01 };

/// Rates in reporting order (highest first).
inline constexpr std::array<MeasurementRate, 4> kAllRates = {
    MeasurementRate::k0_25, MeasurementRate::k0_10, MeasurementRate::k0_04, MeasurementRate::k0_01};

double rate_value(MeasurementRate rate);
/// floor(rate * 1089): 272, 108, 43, 10.
std::size_t measurement_count(MeasurementRate rate);
/// Canonical two-decimal label: "0.25", "0.10", "0.04", "0.01".
std::string rate_label(MeasurementRate rate);
/// Accepts the canonical labels (and "0.1"); anything else is a ConfigError.
MeasurementRate parse_rate(std::string_view text);
/// Exact match against the four supported values, else ConfigError.
MeasurementRate rate_from_value(double value);

/// Sampling layer, three-layer SDA and six-layer conv refinement for one rate.
struct Model {
  static constexpr std::size_t kParameterCount = 20;
  /// sampling + SDA weights and biases come first in parameters().
  static constexpr std::size_t kFcParameterCount = 8;

  MeasurementRate rate = MeasurementRate::k0_25;
  std::uint64_t seed = 0;
  DenseParams sampling;
  std::array<DenseParams, 3> sda;
  std::array<ConvParams, 6> conv;

  /// Fixed order: sampling.{w,b}, sda[0..2].{w,b}, conv[0..5].{k,b}.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  static const std::vector<std::string>& parameter_names();

  bool all_finite() const;
  bool operator==(const Model&) const = default;
};

/// Expected shape of every parameter tensor, in parameters() order.
std::vector<Shape> parameter_shapes(MeasurementRate rate);

/// Table of per-layer output widths / channel counts, e.g. for printing.
struct LayerSummary {
  std::string name;
  Shape weight_shape;
  Shape bias_shape;
};
std::vector<LayerSummary> describe_layers(const Model& model);

/// Fresh model: zero biases, Gaussian weights with std sqrt(2 / fan_in).
Model build_model(MeasurementRate rate, std::uint64_t seed);

// Stage operations take either one block ([1089], [1, 33, 33]) or a batch
// with a leading batch axis.

/// y = relu(W1 x + b1).
Tensor sample(const Model& model, const Tensor& block);
/// Three ReLU dense layers lifting m measurements back to 1089 values.
Tensor initial_reconstruct(const Model& model, const Tensor& measurement);
/// conv1..conv6 over a single-channel 33x33 map, ReLU after all but the last.
Tensor deep_reconstruct(const Model& model, const Tensor& block_image);
/// Full pipeline on flattened blocks; output has the input's shape.
Tensor forward(const Model& model, const Tensor& block);

/// Activations kept for the backward pass. ReLU layers store their
/// post-activation output only: out > 0 exactly where pre-activation > 0.
struct ForwardTrace {
  Tensor input;                 // [B, 1089]
  Tensor measurement;           // [B, m]
  std::array<Tensor, 3> sda;    // [B, 1089], [B, 272], [B, 1089]
  std::array<Tensor, 6> conv;   // [B, C, 33, 33]
  bool full = true;             // false: stopped after the SDA stage

  /// Network output flattened to [B, 1089].
  Tensor output() const;
};

/// Batched forward pass. With `through_conv` false the pass stops after the
/// SDA stage (pre-training objective).
ForwardTrace forward_trace(const Model& model, const Tensor& blocks, bool through_conv = true);

/// Gradients of a loss w.r.t. every parameter, given dLoss/dOutput ([B, 1089]).
/// For a partial trace only the first kFcParameterCount entries are filled.
std::vector<Tensor> backward(const Model& model, const ForwardTrace& trace, const Tensor& output_grad);

/// Versioned little-endian binary container.
std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

inline constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace blockcs
