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

#include "blockcs/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "blockcs/error.hpp"

namespace blockcs {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(const char* context, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(context) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

struct DenseLayout {
  std::size_t batch;
  bool batched;
};

DenseLayout dense_layout(const DenseParams& p, const Tensor& x, const char* context) {
  if (p.weight.rank() != 2 || p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(0)) {
    shape_error(context, p.weight.shape(), p.bias.shape());
  }
  if (x.rank() == 1 && x.dim(0) == p.in_dim()) return {1, false};
  if (x.rank() == 2 && x.dim(1) == p.in_dim()) return {x.dim(0), true};
  shape_error(context, p.weight.shape(), x.shape());
}

struct ConvLayout {
  std::size_t batch;
  std::size_t height;
  std::size_t width;
  bool batched;
};

ConvLayout conv_layout(const ConvParams& p, const Tensor& x, const char* context) {
  if (p.kernels.rank() != 4 || p.bias.rank() != 1 || p.bias.dim(0) != p.kernels.dim(0)) {
    shape_error(context, p.kernels.shape(), p.bias.shape());
  }
  if (p.kernels.dim(2) != p.kernels.dim(3)) {
    throw ConfigError(std::string(context) + ": kernels must be square, got " + to_string(p.kernels.shape()));
  }
  if (p.padding != p.kernel_size() / 2) {
    throw ConfigError(std::string(context) + ": padding " + std::to_string(p.padding) +
                      " does not preserve spatial size for kernel " + std::to_string(p.kernel_size()));
  }
  if (x.rank() == 3 && x.dim(0) == p.in_channels()) return {1, x.dim(1), x.dim(2), false};
  if (x.rank() == 4 && x.dim(1) == p.in_channels()) return {x.dim(0), x.dim(2), x.dim(3), true};
  shape_error(context, p.kernels.shape(), x.shape());
}

// Shifted-copy primitives. For tap (ky, kx) the offset is
// (dy, dx) = sign * (ky - pad, kx - pad), with zero fill outside the image.
//   im2col:     col[(c*k + ky)*k + kx, y*W + x]  = src[c, y + dy, x + dx]
//   col2im_add: dst[c, y + dy, x + dx]          += col[(c*k + ky)*k + kx, y*W + x]
// col2im_add is the adjoint of im2col for the same sign.
struct TapRange {
  std::ptrdiff_t dy;
  std::ptrdiff_t dx;
  std::ptrdiff_t lo;  // first x with 0 <= x + dx < W
  std::ptrdiff_t hi;  // one past the last such x
};

TapRange tap_range(std::size_t ky, std::size_t kx, std::size_t pad, int sign, std::size_t width) {
  const auto w = static_cast<std::ptrdiff_t>(width);
  const std::ptrdiff_t dy = sign * (static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad));
  const std::ptrdiff_t dx = sign * (static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad));
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -dx);
  const std::ptrdiff_t hi = std::max(lo, std::min<std::ptrdiff_t>(w, w - dx));
  return {dy, dx, lo, hi};
}

void im2col(const double* src, std::size_t channels, std::size_t height, std::size_t width, std::size_t k,
            std::size_t pad, int sign, double* col) {
  const std::size_t plane = height * width;
  const auto h = static_cast<std::ptrdiff_t>(height);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const TapRange t = tap_range(ky, kx, pad, sign, width);
        double* row = col + ((c * k + ky) * k + kx) * plane;
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          double* out = row + y * static_cast<std::ptrdiff_t>(width);
          const std::ptrdiff_t sy = y + t.dy;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + width, 0.0);
            continue;
          }
          const double* in = src + c * plane + sy * static_cast<std::ptrdiff_t>(width);
          std::fill(out, out + t.lo, 0.0);
          std::copy(in + t.lo + t.dx, in + t.hi + t.dx, out + t.lo);
          std::fill(out + t.hi, out + width, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, std::size_t channels, std::size_t height, std::size_t width, std::size_t k,
                std::size_t pad, int sign, double* dst) {
  const std::size_t plane = height * width;
  const auto h = static_cast<std::ptrdiff_t>(height);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const TapRange t = tap_range(ky, kx, pad, sign, width);
        const double* row = col + ((c * k + ky) * k + kx) * plane;
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = y + t.dy;
          if (sy < 0 || sy >= h) continue;
          const double* in = row + y * static_cast<std::ptrdiff_t>(width);
          double* out = dst + c * plane + sy * static_cast<std::ptrdiff_t>(width) + t.dx;
          for (std::ptrdiff_t x = t.lo; x < t.hi; ++x) out[x] += in[x];
        }
      }
    }
  }
}

// Kernel [O, C, k*k] <-> tap-major [O*k*k, C].
RowMatrix taps_by_input(const Tensor& kernels) {
  const std::size_t o = kernels.dim(0), c = kernels.dim(1), taps = kernels.dim(2) * kernels.dim(3);
  RowMatrix out(o * taps, c);
  for (std::size_t oi = 0; oi < o; ++oi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t t = 0; t < taps; ++t) out(oi * taps + t, ci) = kernels[(oi * c + ci) * taps + t];
  return out;
}

void add_taps_by_input(const RowMatrix& grad, Tensor& kernels) {
  const std::size_t o = kernels.dim(0), c = kernels.dim(1), taps = kernels.dim(2) * kernels.dim(3);
  for (std::size_t oi = 0; oi < o; ++oi)
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t t = 0; t < taps; ++t) kernels[(oi * c + ci) * taps + t] += grad(oi * taps + t, ci);
}

// Convolutions with fewer output than input channels are evaluated on the
// output side so the temporary has O*k*k rows instead of C*k*k.
bool output_side(const ConvParams& p) { return p.kernel_size() != 1 && p.out_channels() < p.in_channels(); }

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
  }
  if (data_.size() != element_count(shape_)) {
    throw ShapeError("tensor of shape " + to_string(shape_) + " needs " + std::to_string(element_count(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) { return vector(std::vector<double>(values)); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const& { return Tensor(*this).reshaped(std::move(shape)); }

Tensor Tensor::reshaped(Shape shape) && {
  if (element_count(shape) != data_.size()) shape_error("reshape", shape_, shape);
  shape_ = std::move(shape);
  return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (a.shape() != b.shape()) shape_error(context, a.shape(), b.shape());
}

DenseParams::DenseParams(Tensor w, Tensor b) : weight(std::move(w)), bias(std::move(b)) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    shape_error("DenseParams", weight.shape(), bias.shape());
  }
}

DenseParams::DenseParams(std::size_t out_dim, std::size_t in_dim)
    : weight({out_dim, in_dim}), bias({out_dim}) {}

ConvParams::ConvParams(Tensor k, Tensor b, std::size_t pad) : kernels(std::move(k)), bias(std::move(b)), padding(pad) {
  if (kernels.rank() != 4 || bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) {
    shape_error("ConvParams", kernels.shape(), bias.shape());
  }
  if (kernels.dim(2) != kernels.dim(3)) {
    throw ConfigError("ConvParams: kernels must be square, got " + to_string(kernels.shape()));
  }
}

ConvParams::ConvParams(std::size_t out_channels, std::size_t in_channels, std::size_t kernel)
    : kernels({out_channels, in_channels, kernel, kernel}), bias({out_channels}), padding(kernel / 2) {}

Tensor dense_forward(const DenseParams& p, const Tensor& x) {
  const auto layout = dense_layout(p, x, "dense_forward");
  const auto out_dim = p.out_dim();
  Tensor out(layout.batched ? Shape{layout.batch, out_dim} : Shape{out_dim});
  ConstMatrixMap w(p.weight.data(), out_dim, p.in_dim());
  ConstMatrixMap in(x.data(), layout.batch, p.in_dim());
  MatrixMap y(out.data(), layout.batch, out_dim);
  y.noalias() = in * w.transpose();
  y.rowwise() += ConstVectorMap(p.bias.data(), out_dim).transpose();
  return out;
}

DenseGrads dense_backward(const DenseParams& p, const Tensor& x, const Tensor& upstream, bool need_input_grad) {
  const auto layout = dense_layout(p, x, "dense_backward");
  const auto out_dim = p.out_dim();
  const Shape expected = layout.batched ? Shape{layout.batch, out_dim} : Shape{out_dim};
  if (upstream.shape() != expected) shape_error("dense_backward upstream", expected, upstream.shape());

  DenseGrads g{Tensor(p.weight.shape()), Tensor(p.bias.shape()), Tensor()};
  ConstMatrixMap w(p.weight.data(), out_dim, p.in_dim());
  ConstMatrixMap in(x.data(), layout.batch, p.in_dim());
  ConstMatrixMap dy(upstream.data(), layout.batch, out_dim);
  MatrixMap(g.weight.data(), out_dim, p.in_dim()).noalias() = dy.transpose() * in;
  VectorMap(g.bias.data(), out_dim) = dy.colwise().sum().transpose();
  if (need_input_grad) {
    g.input = Tensor(x.shape());
    MatrixMap(g.input.data(), layout.batch, p.in_dim()).noalias() = dy * w;
  }
  return g;
}

Tensor conv2d_forward(const ConvParams& p, const Tensor& x) {
  const auto layout = conv_layout(p, x, "conv2d_forward");
  const std::size_t k = p.kernel_size();
  const std::size_t cin = p.in_channels();
  const std::size_t cout = p.out_channels();
  const std::size_t plane = layout.height * layout.width;
  const std::size_t patch = cin * k * k;

  Tensor out(layout.batched ? Shape{layout.batch, cout, layout.height, layout.width}
                            : Shape{cout, layout.height, layout.width});
  ConstVectorMap bias(p.bias.data(), cout);

  if (output_side(p)) {
    // out[o] = sum over taps of shifted (sum_c K[o, c, tap] x[c]).
    const RowMatrix kt = taps_by_input(p.kernels);
    RowMatrix tapped(cout * k * k, plane);
    for (std::size_t b = 0; b < layout.batch; ++b) {
      tapped.noalias() = kt * ConstMatrixMap(x.data() + b * cin * plane, cin, plane);
      double* y = out.data() + b * cout * plane;
      col2im_add(tapped.data(), cout, layout.height, layout.width, k, p.padding, -1, y);
      MatrixMap(y, cout, plane).colwise() += bias;
    }
    return out;
  }

  ConstMatrixMap kern(p.kernels.data(), cout, patch);
  AlignedBuffer col(k == 1 ? 0 : patch * plane);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const double* in = x.data() + b * cin * plane;
    const double* cols = in;
    if (k != 1) {
      im2col(in, cin, layout.height, layout.width, k, p.padding, +1, col.data());
      cols = col.data();
    }
    MatrixMap y(out.data() + b * cout * plane, cout, plane);
    y.noalias() = kern * ConstMatrixMap(cols, patch, plane);
    y.colwise() += bias;
  }
  return out;
}

ConvGrads conv2d_backward(const ConvParams& p, const Tensor& x, const Tensor& upstream, bool need_input_grad) {
  const auto layout = conv_layout(p, x, "conv2d_backward");
  const std::size_t k = p.kernel_size();
  const std::size_t cin = p.in_channels();
  const std::size_t cout = p.out_channels();
  const std::size_t plane = layout.height * layout.width;
  const std::size_t patch = cin * k * k;
  const Shape expected = layout.batched ? Shape{layout.batch, cout, layout.height, layout.width}
                                        : Shape{cout, layout.height, layout.width};
  if (upstream.shape() != expected) shape_error("conv2d_backward upstream", expected, upstream.shape());

  ConvGrads g{Tensor(p.kernels.shape()), Tensor(p.bias.shape()), Tensor()};
  if (need_input_grad) g.input = Tensor(x.shape());
  VectorMap db(g.bias.data(), cout);

  if (output_side(p)) {
    // Shifted copies of the upstream gradient turn both products into GEMMs:
    //   dK[(o, tap), c] = D X^T,  dX = K^T D,  D = im2col(dy) with negated offsets.
    const RowMatrix kt = taps_by_input(p.kernels);
    RowMatrix shifted(cout * k * k, plane);
    RowMatrix dk = RowMatrix::Zero(cout * k * k, cin);
    for (std::size_t b = 0; b < layout.batch; ++b) {
      const double* dy = upstream.data() + b * cout * plane;
      db += ConstMatrixMap(dy, cout, plane).rowwise().sum();
      im2col(dy, cout, layout.height, layout.width, k, p.padding, -1, shifted.data());
      ConstMatrixMap in(x.data() + b * cin * plane, cin, plane);
      dk.noalias() += shifted * in.transpose();
      if (need_input_grad) {
        MatrixMap(g.input.data() + b * cin * plane, cin, plane).noalias() = kt.transpose() * shifted;
      }
    }
    add_taps_by_input(dk, g.kernels);
    return g;
  }

  ConstMatrixMap kern(p.kernels.data(), cout, patch);
  MatrixMap dk(g.kernels.data(), cout, patch);
  AlignedBuffer col(k == 1 ? 0 : patch * plane);
  AlignedBuffer dcol(need_input_grad && k != 1 ? patch * plane : 0);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    const double* in = x.data() + b * cin * plane;
    const double* cols = in;
    if (k != 1) {
      im2col(in, cin, layout.height, layout.width, k, p.padding, +1, col.data());
      cols = col.data();
    }
    ConstMatrixMap dy(upstream.data() + b * cout * plane, cout, plane);
    dk.noalias() += dy * ConstMatrixMap(cols, patch, plane).transpose();
    db += dy.rowwise().sum();
    if (!need_input_grad) continue;
    double* dx = g.input.data() + b * cin * plane;
    if (k == 1) {
      MatrixMap(dx, cin, plane).noalias() = kern.transpose() * dy;
    } else {
      MatrixMap(dcol.data(), patch, plane).noalias() = kern.transpose() * dy;
      col2im_add(dcol.data(), cin, layout.height, layout.width, k, p.padding, +1, dx);
    }
  }
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  relu_inplace(out);
  return out;
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.values()) v = v > 0.0 ? v : 0.0;
}

Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
  require_same_shape(x, upstream, "relu_backward");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? upstream[i] : 0.0;
  return out;
}

void relu_backward_inplace(const Tensor& x, Tensor& grad) {
  require_same_shape(x, grad, "relu_backward");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) grad[i] = 0.0;
  }
}

namespace {
std::size_t sample_count(const Tensor& t) { return t.rank() <= 1 ? 1 : t.dim(0); }
}  // namespace

double mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(sample_count(pred));
}

Tensor mse_grad(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_grad");
  const double scale = 2.0 / static_cast<double>(sample_count(pred));
  Tensor g(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

}  // namespace blockcs
