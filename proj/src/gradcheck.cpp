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

#include "blockcs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "blockcs/error.hpp"

namespace blockcs {

namespace {

Tensor uniform(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

double probe(const Tensor& out, const Tensor& weights) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += weights[i] * out[i];
  return s;
}

class DenseCase final : public GradCheckCase {
 public:
  DenseCase(std::size_t out_dim, std::size_t in_dim, std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params_ = DenseParams(uniform({out_dim, in_dim}, rng), uniform({out_dim}, rng));
    x_ = uniform(batch == 0 ? Shape{in_dim} : Shape{batch, in_dim}, rng);
  }
  std::string name() const override { return "dense"; }
  std::vector<Tensor*> variables() override { return {&params_.weight, &params_.bias, &x_}; }
  std::vector<std::string> variable_names() const override { return {"weight", "bias", "input"}; }
  Tensor forward() const override { return dense_forward(params_, x_); }
  std::vector<Tensor> backward(const Tensor& upstream) const override {
    auto g = dense_backward(params_, x_, upstream);
    return {std::move(g.weight), std::move(g.bias), std::move(g.input)};
  }

 private:
  DenseParams params_;
  Tensor x_;
};

class ConvCase final : public GradCheckCase {
 public:
  ConvCase(std::size_t cout, std::size_t cin, std::size_t k, std::size_t h, std::size_t w, std::size_t batch,
           std::uint64_t seed)
      : k_(k) {
    std::mt19937_64 rng(seed);
    params_ = ConvParams(uniform({cout, cin, k, k}, rng), uniform({cout}, rng), k / 2);
    x_ = uniform(batch == 0 ? Shape{cin, h, w} : Shape{batch, cin, h, w}, rng);
  }
  std::string name() const override { return "conv" + std::to_string(k_) + "x" + std::to_string(k_); }
  std::vector<Tensor*> variables() override { return {&params_.kernels, &params_.bias, &x_}; }
  std::vector<std::string> variable_names() const override { return {"kernels", "bias", "input"}; }
  Tensor forward() const override { return conv2d_forward(params_, x_); }
  std::vector<Tensor> backward(const Tensor& upstream) const override {
    auto g = conv2d_backward(params_, x_, upstream);
    return {std::move(g.kernels), std::move(g.bias), std::move(g.input)};
  }

 private:
  std::size_t k_;
  ConvParams params_;
  Tensor x_;
};

class ReluCase final : public GradCheckCase {
 public:
  ReluCase(std::size_t n, double margin, std::uint64_t seed) : x_({n}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : x_.values()) {
      do {
        v = dist(rng);
      } while (std::abs(v) <= margin);
    }
  }
  std::string name() const override { return "relu"; }
  std::vector<Tensor*> variables() override { return {&x_}; }
  std::vector<std::string> variable_names() const override { return {"input"}; }
  Tensor forward() const override { return relu(x_); }
  std::vector<Tensor> backward(const Tensor& upstream) const override { return {relu_backward(x_, upstream)}; }

 private:
  Tensor x_;
};

class MseCase final : public GradCheckCase {
 public:
  MseCase(std::size_t batch, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    pred_ = uniform({batch, n}, rng);
    target_ = uniform({batch, n}, rng);
  }
  std::string name() const override { return "mse"; }
  std::vector<Tensor*> variables() override { return {&pred_}; }
  std::vector<std::string> variable_names() const override { return {"pred"}; }
  Tensor forward() const override { return Tensor::vector({mse_loss(pred_, target_)}); }
  std::vector<Tensor> backward(const Tensor& upstream) const override {
    Tensor g = mse_grad(pred_, target_);
    for (auto& v : g.values()) v *= upstream[0];
    return {std::move(g)};
  }

 private:
  Tensor pred_;
  Tensor target_;
};

class PerturbedCase final : public GradCheckCase {
 public:
  PerturbedCase(std::unique_ptr<GradCheckCase> inner, double perturbation)
      : inner_(std::move(inner)), scale_(1.0 + perturbation) {}
  std::string name() const override { return inner_->name() + "(perturbed)"; }
  std::vector<Tensor*> variables() override { return inner_->variables(); }
  std::vector<std::string> variable_names() const override { return inner_->variable_names(); }
  Tensor forward() const override { return inner_->forward(); }
  std::vector<Tensor> backward(const Tensor& upstream) const override {
    auto grads = inner_->backward(upstream);
    for (auto& g : grads) {
      for (auto& v : g.values()) v *= scale_;
    }
    return grads;
  }

 private:
  std::unique_ptr<GradCheckCase> inner_;
  double scale_;
};

}  // namespace

GradCheckResult grad_check(GradCheckCase& layer, double eps, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const Tensor out = layer.forward();
  const Tensor weights = uniform(out.shape(), rng);
  const auto analytic = layer.backward(weights);
  auto vars = layer.variables();
  const auto names = layer.variable_names();
  if (analytic.size() != vars.size()) {
    throw ShapeError("grad_check: " + layer.name() + " returned " + std::to_string(analytic.size()) +
                     " gradients for " + std::to_string(vars.size()) + " variables");
  }

  GradCheckResult result;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    Tensor& var = *vars[v];
    require_same_shape(var, analytic[v], "grad_check");
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double saved = var[i];
      var[i] = saved + eps;
      const double plus = probe(layer.forward(), weights);
      var[i] = saved - eps;
      const double minus = probe(layer.forward(), weights);
      var[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[v][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
      const double rel = std::abs(a - numeric) / denom;
      ++result.entries_checked;
      if (rel > result.max_relative_error || !std::isfinite(rel)) {
        result.max_relative_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        result.worst_variable = names[v];
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

std::unique_ptr<GradCheckCase> make_dense_case(std::size_t out_dim, std::size_t in_dim, std::size_t batch,
                                               std::uint64_t seed) {
  return std::make_unique<DenseCase>(out_dim, in_dim, batch, seed);
}

std::unique_ptr<GradCheckCase> make_conv_case(std::size_t out_channels, std::size_t in_channels,
                                              std::size_t kernel, std::size_t height, std::size_t width,
                                              std::size_t batch, std::uint64_t seed) {
  return std::make_unique<ConvCase>(out_channels, in_channels, kernel, height, width, batch, seed);
}

std::unique_ptr<GradCheckCase> make_relu_case(std::size_t n, double margin, std::uint64_t seed) {
  return std::make_unique<ReluCase>(n, margin, seed);
}

std::unique_ptr<GradCheckCase> make_mse_case(std::size_t batch, std::size_t n, std::uint64_t seed) {
  return std::make_unique<MseCase>(batch, n, seed);
}

std::unique_ptr<GradCheckCase> make_perturbed_case(std::unique_ptr<GradCheckCase> inner, double perturbation) {
  return std::make_unique<PerturbedCase>(std::move(inner), perturbation);
}

}  // namespace blockcs
