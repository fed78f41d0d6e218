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

#include "blockcs/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "blockcs/error.hpp"

namespace blockcs {

std::string to_string(Optimizer optimizer) { return optimizer == Optimizer::sgd ? "sgd" : "adam"; }

std::string to_string(PretrainPolicy policy) {
  switch (policy) {
    case PretrainPolicy::on: return "on";
    case PretrainPolicy::off: return "off";
    case PretrainPolicy::automatic: return "auto";
  }
  return "?";
}

Optimizer parse_optimizer(std::string_view text) {
  if (text == "sgd") return Optimizer::sgd;
  if (text == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (expected sgd or adam)");
}

PretrainPolicy parse_pretrain(std::string_view text) {
  if (text == "on") return PretrainPolicy::on;
  if (text == "off") return PretrainPolicy::off;
  if (text == "auto") return PretrainPolicy::automatic;
  throw ConfigError("unknown pretrain policy '" + std::string(text) + "' (expected on, off or auto)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (log_interval < 1) throw ConfigError("log interval must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be > 0");
}

OptimizerState OptimizerState::fresh(Optimizer kind, std::span<Tensor* const> params) {
  OptimizerState state;
  state.kind = kind;
  if (kind == Optimizer::adam) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  return state;
}

void LossHistory::append(std::uint64_t iteration, double loss) {
  if (!records.empty() && iteration <= records.back().iteration) {
    throw ConfigError("loss history iterations must be strictly increasing");
  }
  records.push_back({iteration, loss});
}

std::string LossHistory::to_csv() const {
  std::string out = "iteration,loss\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g\n", static_cast<unsigned long long>(r.iteration), r.loss);
    out += buf;
  }
  return out;
}

LossHistory LossHistory::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "iteration,loss") throw FormatError("loss CSV: missing header");
  LossHistory history;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("loss CSV: malformed row '" + line + "'");
    std::uint64_t it = 0;
    const auto res = std::from_chars(line.data(), line.data() + comma, it);
    if (res.ec != std::errc() || res.ptr != line.data() + comma) throw FormatError("loss CSV: bad iteration");
    history.append(it, std::stod(line.substr(comma + 1)));
  }
  return history;
}

namespace {

void check_aligned(std::span<Tensor* const> params, std::span<const Tensor> grads, const char* context) {
  if (params.size() != grads.size()) {
    throw ShapeError(std::string(context) + ": " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(*params[i], grads[i], context);
}

}  // namespace

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
  check_aligned(params, grads, "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, OptimizerState& state, double lr,
               double beta1, double beta2, double eps) {
  check_aligned(params, grads, "adam_step");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, parameters " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], state.first_moment[i], "adam_step state");
    require_same_shape(*params[i], state.second_moment[i], "adam_step state");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(beta1, t);
  const double correction2 = 1.0 - std::pow(beta2, t);
  constexpr double kSmallestNormal = std::numeric_limits<double>::min();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    const auto g = grads[i].values();
    auto m = state.first_moment[i].values();
    auto v = state.second_moment[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      // Moments of parameters that stop receiving gradient decay geometrically
      // into the subnormal range, where arithmetic is orders of magnitude
      // slower. Below the smallest normal double they cannot affect the step
      // (eps dominates the denominator), so they are flushed to zero.
      const double mj = beta1 * m[j] + (1.0 - beta1) * g[j];
      const double vj = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      m[j] = std::abs(mj) < kSmallestNormal ? 0.0 : mj;
      v[j] = vj < kSmallestNormal ? 0.0 : vj;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), order_(dataset_size), rng_(seed) {
  if (dataset_size == 0) throw DataError("cannot sample batches from an empty dataset");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> batch;
  batch.reserve(batch_size_);
  while (batch.size() < batch_size_) {
    if (cursor_ == order_.size()) reshuffle();
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

double dataset_loss(const Model& model, const Dataset& dataset, std::size_t chunk) {
  if (dataset.empty()) throw DataError("dataset_loss: empty dataset");
  chunk = std::max<std::size_t>(chunk, 1);
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t end = std::min(dataset.size(), start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Tensor blocks = dataset.gather(idx);
    total += mse_loss(forward(model, blocks), blocks) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(dataset.size());
}

namespace {

TrainResult run_loop(Model model, const Dataset& dataset, const TrainConfig& config, std::uint64_t iterations,
                     bool fc_only, const TrainCallbacks& callbacks) {
  if (dataset.empty()) throw DataError("training dataset is empty");
  auto params = model.parameters();
  if (fc_only) params.resize(Model::kFcParameterCount);

  TrainResult result;
  result.optimizer_state = OptimizerState::fresh(config.optimizer, params);
  BatchSampler sampler(dataset.size(), config.batch_size, config.seed);

  for (std::uint64_t k = 0; k <= iterations; ++k) {
    if (k < iterations && callbacks.should_stop && callbacks.should_stop()) {
      result.interrupted = true;
      break;
    }
    const auto indices = sampler.next();
    const Tensor blocks = dataset.gather(indices);
    const ForwardTrace trace = forward_trace(model, blocks, !fc_only);
    const Tensor output = trace.output();
    const double loss = mse_loss(output, blocks);
    if (!std::isfinite(loss)) throw DivergenceError(k, "non-finite loss");
    if (k % config.log_interval == 0 || k == iterations) {
      result.history.append(k, loss);
      if (callbacks.on_log) callbacks.on_log(result.history.records.back());
    }
    if (k == iterations) break;

    auto grads = backward(model, trace, mse_grad(output, blocks));
    if (fc_only) grads.resize(Model::kFcParameterCount);
    if (config.optimizer == Optimizer::sgd) {
      sgd_step(params, grads, config.learning_rate);
    } else {
      adam_step(params, grads, result.optimizer_state, config.learning_rate, config.adam_beta1, config.adam_beta2,
                config.adam_eps);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->all_finite()) {
        throw DivergenceError(k, "non-finite values in " + Model::parameter_names()[i]);
      }
    }
    result.iterations_completed = k + 1;
  }
  if (config.optimizer == Optimizer::sgd) result.optimizer_state.step = result.iterations_completed;
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult pretrain(Model model, const Dataset& dataset, const TrainConfig& config, const TrainCallbacks& callbacks) {
  TrainConfig checked = config;
  checked.iterations = 1;
  checked.validate();
  if (dataset.empty()) throw DataError("pretraining dataset is empty");
  if (config.pretrain_iterations == 0) {
    TrainResult result;
    auto params = model.parameters();
    params.resize(Model::kFcParameterCount);
    result.optimizer_state = OptimizerState::fresh(config.optimizer, params);
    result.model = std::move(model);
    return result;
  }
  return run_loop(std::move(model), dataset, config, config.pretrain_iterations, /*fc_only=*/true, callbacks);
}

TrainResult train(Model model, const Dataset& dataset, const TrainConfig& config, const TrainCallbacks& callbacks) {
  config.validate();
  return run_loop(std::move(model), dataset, config, config.iterations, /*fc_only=*/false, callbacks);
}

SelectionResult train_with_selection(MeasurementRate rate, const Dataset& dataset, const TrainConfig& config,
                                     std::span<const Optimizer> optimizers, const TrainCallbacks& callbacks) {
  config.validate();
  if (dataset.empty()) throw DataError("training dataset is empty");
  static constexpr Optimizer kBoth[] = {Optimizer::adam, Optimizer::sgd};
  if (optimizers.empty()) optimizers = kBoth;
  std::vector<bool> pretrain_axis;
  switch (config.pretrain) {
    case PretrainPolicy::automatic: pretrain_axis = {true, false}; break;
    case PretrainPolicy::on: pretrain_axis = {true}; break;
    case PretrainPolicy::off: pretrain_axis = {false}; break;
  }

  const Model initial = build_model(rate, config.seed);
  SelectionResult selection;
  for (const auto optimizer : optimizers) {
    for (const bool pre : pretrain_axis) {
      TrainConfig variant = config;
      variant.optimizer = optimizer;
      Model start = initial;
      if (pre) {
        auto warm = pretrain(std::move(start), dataset, variant, callbacks);
        if (warm.interrupted) {
          selection.best = std::move(warm);
          return selection;
        }
        start = std::move(warm.model);
      }
      TrainResult trained = train(std::move(start), dataset, variant, callbacks);
      if (trained.interrupted) {
        selection.best = std::move(trained);
        return selection;
      }
      const double loss = dataset_loss(trained.model, dataset);
      selection.variants.push_back({optimizer, pre, loss, trained.history});
      if (selection.variants.size() == 1 || loss < selection.variants[selection.best_index].final_loss) {
        selection.best_index = selection.variants.size() - 1;
        selection.best = std::move(trained);
      }
    }
  }
  return selection;
}

namespace {
constexpr std::string_view kOptimizerMagic = "BCSOPTST";
}

std::vector<std::uint8_t> serialize_optimizer_state(const OptimizerState& state, MeasurementRate rate) {
  detail::ByteWriter w;
  w.magic(kOptimizerMagic);
  w.put<std::uint32_t>(kOptimizerFormatVersion);
  w.put<double>(rate_value(rate));
  w.put<std::uint8_t>(state.kind == Optimizer::adam ? 1 : 0);
  w.put<std::uint64_t>(state.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(state.first_moment.size()));
  for (const auto& t : state.first_moment) w.tensor(t);
  for (const auto& t : state.second_moment) w.tensor(t);
  return w.take();
}

OptimizerState deserialize_optimizer_state(const std::vector<std::uint8_t>& bytes, MeasurementRate rate) {
  detail::ByteReader r(bytes, "optimizer state");
  r.expect_magic(kOptimizerMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kOptimizerFormatVersion) {
    throw VersionError("optimizer state: format version " + std::to_string(version) + " is not supported");
  }
  if (r.get<double>() != rate_value(rate)) r.fail("measurement rate does not match the model");
  OptimizerState state;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) r.fail("unknown optimizer kind");
  state.kind = kind == 1 ? Optimizer::adam : Optimizer::sgd;
  state.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  const auto shapes = parameter_shapes(rate);
  if (count > shapes.size() || (state.kind == Optimizer::sgd && count != 0)) {
    r.fail("moment count " + std::to_string(count));
  }
  const auto& names = Model::parameter_names();
  for (std::uint32_t i = 0; i < count; ++i) {
    r.section("first_moment." + names[i]);
    state.first_moment.push_back(r.tensor(shapes[i]));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    r.section("second_moment." + names[i]);
    state.second_moment.push_back(r.tensor(shapes[i]));
  }
  r.expect_end();
  return state;
}

void save_optimizer_state(const OptimizerState& state, MeasurementRate rate, const std::filesystem::path& path) {
  detail::write_file_bytes(path, serialize_optimizer_state(state, rate));
}

OptimizerState load_optimizer_state(const std::filesystem::path& path, MeasurementRate rate) {
  return deserialize_optimizer_state(detail::read_file_bytes(path), rate);
}

}  // namespace blockcs
