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

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "blockcs/tensor.hpp"

namespace blockcs {

/// A differentiable function of a set of variables (parameters and inputs)
/// with a hand-written backward pass, as consumed by grad_check.
class GradCheckCase {
 public:
  virtual ~GradCheckCase() = default;

  virtual std::string name() const = 0;
  /// Tensors that get perturbed; the analytic gradient must line up with these.
  virtual std::vector<Tensor*> variables() = 0;
  virtual std::vector<std::string> variable_names() const = 0;
  virtual Tensor forward() const = 0;
  virtual std::vector<Tensor> backward(const Tensor& upstream) const = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_variable;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares the analytic gradient of the scalar probe sum(r * forward())
/// (r fixed, uniform in [-1, 1]) against central differences.
///
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-12).
GradCheckResult grad_check(GradCheckCase& layer, double eps = 1e-3, std::uint64_t seed = 0);

// Randomized instances with values drawn uniformly from [-1, 1].
std::unique_ptr<GradCheckCase> make_dense_case(std::size_t out_dim, std::size_t in_dim, std::size_t batch,
                                               std::uint64_t seed);
std::unique_ptr<GradCheckCase> make_conv_case(std::size_t out_channels, std::size_t in_channels,
                                              std::size_t kernel, std::size_t height, std::size_t width,
                                              std::size_t batch, std::uint64_t seed);
/// Inputs kept at least `margin` away from the kink at zero.
std::unique_ptr<GradCheckCase> make_relu_case(std::size_t n, double margin, std::uint64_t seed);
std::unique_ptr<GradCheckCase> make_mse_case(std::size_t batch, std::size_t n, std::uint64_t seed);

/// Wraps a case and scales its analytic gradient by (1 + perturbation).
/// Used as a negative control for the verification suite.
std::unique_ptr<GradCheckCase> make_perturbed_case(std::unique_ptr<GradCheckCase> inner, double perturbation);

}  // namespace blockcs
