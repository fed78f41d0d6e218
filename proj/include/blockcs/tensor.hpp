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
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace blockcs {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage, so vectorized kernels see the same alignment
/// on every run and results do not depend on where the heap puts a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major array of doubles with shape metadata.
///
/// Value-semantic: copies are deep, comparisons are element-wise and exact.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Rank-1 tensor holding `values`.
  static Tensor vector(std::initializer_list<double> values);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Same values, new shape with an equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  void fill(double value);
  bool all_finite() const noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  AlignedBuffer data_;
};

/// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

/// Fully connected layer parameters: weight [out, in], bias [out].
struct DenseParams {
  Tensor weight;
  Tensor bias;

  DenseParams() = default;
  DenseParams(Tensor weight, Tensor bias);
  DenseParams(std::size_t out_dim, std::size_t in_dim);

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
  bool operator==(const DenseParams&) const = default;
};

/// Square-kernel stride-1 convolution with "same" zero padding.
struct ConvParams {
  Tensor kernels;  // [out_channels, in_channels, k, k]
  Tensor bias;     // [out_channels]
  std::size_t padding = 0;

  ConvParams() = default;
  ConvParams(Tensor kernels, Tensor bias, std::size_t padding);
  ConvParams(std::size_t out_channels, std::size_t in_channels, std::size_t kernel);

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
  bool operator==(const ConvParams&) const = default;
};

struct DenseGrads {
  Tensor weight;
  Tensor bias;
  Tensor input;
};

struct ConvGrads {
  Tensor kernels;
  Tensor bias;
  Tensor input;
};

// Dense and convolution primitives accept either a single sample
// ([in] / [C, H, W]) or a batch with a leading batch axis
// ([B, in] / [B, C, H, W]). Parameter gradients are summed over the batch.

Tensor dense_forward(const DenseParams& p, const Tensor& x);
DenseGrads dense_backward(const DenseParams& p, const Tensor& x, const Tensor& upstream,
                          bool need_input_grad = true);

Tensor conv2d_forward(const ConvParams& p, const Tensor& x);
ConvGrads conv2d_backward(const ConvParams& p, const Tensor& x, const Tensor& upstream,
                          bool need_input_grad = true);

Tensor relu(const Tensor& x);
void relu_inplace(Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& upstream);
/// Zeroes `grad` wherever `x` <= 0.
void relu_backward_inplace(const Tensor& x, Tensor& grad);

/// Mean over the batch of per-sample squared Euclidean error.
///
/// A rank-1 tensor is one sample; for rank >= 2 the leading axis is the
/// batch axis and S = dim(0).
double mse_loss(const Tensor& pred, const Tensor& target);
Tensor mse_grad(const Tensor& pred, const Tensor& target);

}  // namespace blockcs
