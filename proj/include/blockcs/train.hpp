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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "blockcs/data.hpp"
#include "blockcs/model.hpp"
#include "blockcs/tensor.hpp"

namespace blockcs {

enum class Optimizer { sgd, adam };
enum class PretrainPolicy { on, off, automatic };

std::string to_string(Optimizer optimizer);
std::string to_string(PretrainPolicy policy);
Optimizer parse_optimizer(std::string_view text);
PretrainPolicy parse_pretrain(std::string_view text);

struct TrainConfig {
  double learning_rate = 0.001;
  std::uint64_t iterations = 10000;
  std::size_t batch_size = 64;
  Optimizer optimizer = Optimizer::adam;
  PretrainPolicy pretrain = PretrainPolicy::off;
  std::uint64_t pretrain_iterations = 1000;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t log_interval = 100;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Adam moments (empty for SGD) mirroring the parameter list.
struct OptimizerState {
  Optimizer kind = Optimizer::adam;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static OptimizerState fresh(Optimizer kind, std::span<Tensor* const> params);
  bool operator==(const OptimizerState&) const = default;
};

struct LossRecord {
  std::uint64_t iteration;
  double loss;
  bool operator==(const LossRecord&) const = default;
};

/// (iteration, mini-batch loss) pairs; iteration k is the loss of the model
/// after k updates on the k-th scheduled batch.
struct LossHistory {
  std::vector<LossRecord> records;

  void append(std::uint64_t iteration, double loss);
  /// "iteration,loss" header followed by one row per record.
  std::string to_csv() const;
  static LossHistory from_csv(const std::string& text);
  bool operator==(const LossHistory&) const = default;
};

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state, double lr,
               double beta1, double beta2, double eps);

/// Draws mini-batches from a seeded permutation, reshuffling at every epoch
/// boundary; a batch may straddle two epochs.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

/// Hooks for progress reporting and cooperative interruption.
struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_log;
  /// Polled before every step; returning true stops training early.
  std::function<bool()> should_stop;
};

struct TrainResult {
  Model model;
  LossHistory history;
  OptimizerState optimizer_state;
  std::uint64_t iterations_completed = 0;
  bool interrupted = false;
};

/// Training objective over the whole dataset: mean squared block error.
double dataset_loss(const Model& model, const Dataset& dataset, std::size_t chunk = 64);

/// Optimizes sampling + SDA layers only, against the SDA output; runs
/// `config.pretrain_iterations` steps with `config.optimizer`.
TrainResult pretrain(Model model, const Dataset& dataset, const TrainConfig& config,
                     const TrainCallbacks& callbacks = {});

/// End-to-end training of all ten layers for `config.iterations` steps.
TrainResult train(Model model, const Dataset& dataset, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {});

struct VariantReport {
  Optimizer optimizer;
  bool pretrained;
  double final_loss;  // dataset_loss after training
  LossHistory history;
};

struct SelectionResult {
  TrainResult best;
  std::size_t best_index = 0;
  std::vector<VariantReport> variants;
};

/// Trains every {optimizer} x {pretrain on/off} variant from the same
/// initial weights and keeps the one with the lowest final loss.
/// `config.pretrain` of on/off restricts the pretrain axis.
SelectionResult train_with_selection(MeasurementRate rate, const Dataset& dataset, const TrainConfig& config,
                                     std::span<const Optimizer> optimizers = {}, const TrainCallbacks& callbacks = {});

std::vector<std::uint8_t> serialize_optimizer_state(const OptimizerState& state, MeasurementRate rate);
OptimizerState deserialize_optimizer_state(const std::vector<std::uint8_t>& bytes, MeasurementRate rate);
void save_optimizer_state(const OptimizerState& state, MeasurementRate rate, const std::filesystem::path& path);
OptimizerState load_optimizer_state(const std::filesystem::path& path, MeasurementRate rate);

inline constexpr std::uint32_t kOptimizerFormatVersion = 1;

}  // namespace blockcs
