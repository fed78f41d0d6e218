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
#include <span>
#include <string>
#include <vector>

#include "blockcs/tensor.hpp"

namespace blockcs {

/// Row-major grayscale image with intensities in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  bool operator==(const GrayImage&) const = default;
};

/// Reads 8-bit binary PGM (P5) or PNG. Colour PNGs are converted with
/// luma weights 0.299 / 0.587 / 0.114; alpha is ignored.
GrayImage load_gray(const std::filesystem::path& path);
GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
GrayImage decode_png(const std::filesystem::path& path);

/// 8-bit P5 with round(v * 255) clamped to [0, 255].
void save_pgm(const GrayImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
/// Per-pixel 8-bit quantization used by save_pgm.
std::uint8_t to_byte(double value);
/// Rounds every pixel to the nearest of the 256 levels a PGM can store.
GrayImage quantize_8bit(const GrayImage& image);

enum class BlockMode { overlapping, non_overlapping_padded };

/// Image cut into 33x33 blocks (each a flattened [1089] tensor, row-major).
struct BlockGrid {
  std::vector<Tensor> blocks;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t original_height = 0;
  std::size_t original_width = 0;
  BlockMode mode = BlockMode::non_overlapping_padded;
  std::size_t stride = 0;  // overlapping mode only
};

/// Closed-form count of full blocks for an extent at the given stride.
std::size_t training_positions(std::size_t extent, std::size_t stride = 12);

/// Full blocks at offsets (r * stride, c * stride); partial edge blocks dropped.
BlockGrid extract_training_blocks(const GrayImage& image, std::size_t stride = 12);

/// Zero-pads right/bottom to multiples of 33 and tiles without overlap.
BlockGrid extract_test_blocks(const GrayImage& image);

/// Inverse of extract_test_blocks: tiles, crops to the original size and
/// clamps to [0, 1].
GrayImage reassemble(const BlockGrid& grid);

/// Training blocks stacked as one [S, 1089] tensor.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Tensor blocks);
  static Dataset from_blocks(std::span<const Tensor> blocks);

  std::size_t size() const { return blocks_.empty() ? 0 : blocks_.dim(0); }
  bool empty() const { return size() == 0; }
  const Tensor& blocks() const { return blocks_; }
  Tensor block(std::size_t index) const;
  /// [indices.size(), 1089] batch in the given order.
  Tensor gather(std::span<const std::size_t> indices) const;
  /// First `count` blocks.
  Dataset head(std::size_t count) const;

  std::vector<std::string> sources;  // image files contributing blocks
  std::vector<std::string> skipped;  // unreadable files, with reasons

 private:
  Tensor blocks_;
};

/// Training blocks of every image in `dir` (lexicographic filename order),
/// followed by one seeded shuffle.
Dataset build_dataset(const std::filesystem::path& dir, std::size_t stride, std::uint64_t shuffle_seed);

/// Supported image files in `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace blockcs
