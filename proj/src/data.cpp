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

#include "blockcs/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <random>

#include <png.h>

#include "binary_io.hpp"
#include "blockcs/error.hpp"
#include "blockcs/model.hpp"

namespace blockcs {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

bool is_supported_image(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".pgm" || ext == ".png";
}

class PgmParser {
 public:
  PgmParser(const std::vector<std::uint8_t>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  GrayImage parse() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '5') fail("not a binary (P5) PGM file");
    pos_ = 2;
    const auto width = number("width");
    const auto height = number("height");
    const auto maxval = number("maxval");
    if (width == 0 || height == 0) fail("zero image dimension");
    if (maxval == 0 || maxval > 255) fail("only 8-bit PGM is supported (maxval " + std::to_string(maxval) + ")");
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("missing separator before pixel data");
    ++pos_;
    if (bytes_.size() - pos_ < width * height) fail("truncated pixel data");

    GrayImage image(height, width);
    const double scale = static_cast<double>(maxval);
    for (std::size_t i = 0; i < width * height; ++i) {
      const auto v = bytes_[pos_ + i];
      if (v > maxval) fail("pixel value exceeds maxval");
      image.pixels[i] = static_cast<double>(v) / scale;
    }
    return image;
  }

 private:
  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) fail(std::string("header field '") + what + "' too large");
    }
    if (digits == 0) fail(std::string("missing header field '") + what + "'");
    return value;
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  [[noreturn]] void fail(const std::string& reason) const { throw IoError("'" + origin_ + "': " + reason); }

  const std::vector<std::uint8_t>& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  return PgmParser(bytes, origin).parse();
}

GrayImage decode_png(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(name.c_str(), "rb"));
  if (!file) throw IoError("'" + name + "': cannot open file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + name + "': libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + name + "': not a readable PNG file");
  }
  png_init_io(png, file.get());
  png_read_png(png, info,
               PNG_TRANSFORM_STRIP_16 | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING | PNG_TRANSFORM_EXPAND,
               nullptr);
  const std::size_t width = png_get_image_width(png, info);
  const std::size_t height = png_get_image_height(png, info);
  const std::size_t channels = png_get_channels(png, info);
  png_bytepp rows = png_get_rows(png, info);

  GrayImage image(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const png_bytep row = rows[r];
    for (std::size_t c = 0; c < width; ++c) {
      if (channels >= 3) {
        const double red = row[c * channels];
        const double green = row[c * channels + 1];
        const double blue = row[c * channels + 2];
        image.at(r, c) = (0.299 * red + 0.587 * green + 0.114 * blue) / 255.0;
      } else {
        image.at(r, c) = row[c * channels] / 255.0;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

GrayImage load_gray(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw IoError("'" + path.string() + "': no such file");
  const auto ext = lower_extension(path);
  if (ext == ".png") return decode_png(path);
  if (ext == ".pgm") return decode_pgm(detail::read_file_bytes(path), path.string());
  throw IoError("'" + path.string() + "': unsupported image format '" + ext + "'");
}

std::uint8_t to_byte(double value) {
  const double scaled = std::round(value * 255.0);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

GrayImage quantize_8bit(const GrayImage& image) {
  GrayImage out = image;
  for (double& v : out.pixels) v = to_byte(v) / 255.0;
  return out;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + image.pixels.size());
  for (double v : image.pixels) bytes.push_back(to_byte(v));
  return bytes;
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path) {
  detail::write_file_bytes(path, encode_pgm(image));
}

std::size_t training_positions(std::size_t extent, std::size_t stride) {
  if (extent < kBlockSide) return 0;
  return (extent - kBlockSide) / stride + 1;
}

BlockGrid extract_training_blocks(const GrayImage& image, std::size_t stride) {
  if (stride == 0) throw ConfigError("extract_training_blocks: stride must be positive");
  if (image.height < kBlockSide || image.width < kBlockSide) {
    throw DataError("extract_training_blocks: image " + std::to_string(image.height) + "x" +
                    std::to_string(image.width) + " is smaller than 33x33");
  }
  BlockGrid grid;
  grid.mode = BlockMode::overlapping;
  grid.stride = stride;
  grid.original_height = image.height;
  grid.original_width = image.width;
  grid.grid_rows = training_positions(image.height, stride);
  grid.grid_cols = training_positions(image.width, stride);
  grid.blocks.reserve(grid.grid_rows * grid.grid_cols);
  for (std::size_t br = 0; br < grid.grid_rows; ++br) {
    for (std::size_t bc = 0; bc < grid.grid_cols; ++bc) {
      Tensor block({kBlockSize});
      for (std::size_t r = 0; r < kBlockSide; ++r) {
        const double* src = &image.pixels[(br * stride + r) * image.width + bc * stride];
        std::copy(src, src + kBlockSide, block.data() + r * kBlockSide);
      }
      grid.blocks.push_back(std::move(block));
    }
  }
  return grid;
}

BlockGrid extract_test_blocks(const GrayImage& image) {
  if (image.height == 0 || image.width == 0) throw DataError("extract_test_blocks: empty image");
  BlockGrid grid;
  grid.mode = BlockMode::non_overlapping_padded;
  grid.original_height = image.height;
  grid.original_width = image.width;
  grid.grid_rows = (image.height + kBlockSide - 1) / kBlockSide;
  grid.grid_cols = (image.width + kBlockSide - 1) / kBlockSide;
  grid.blocks.reserve(grid.grid_rows * grid.grid_cols);
  for (std::size_t br = 0; br < grid.grid_rows; ++br) {
    for (std::size_t bc = 0; bc < grid.grid_cols; ++bc) {
      Tensor block({kBlockSize});
      for (std::size_t r = 0; r < kBlockSide; ++r) {
        const std::size_t row = br * kBlockSide + r;
        if (row >= image.height) break;
        for (std::size_t c = 0; c < kBlockSide; ++c) {
          const std::size_t col = bc * kBlockSide + c;
          if (col >= image.width) break;
          block[r * kBlockSide + c] = image.at(row, col);
        }
      }
      grid.blocks.push_back(std::move(block));
    }
  }
  return grid;
}

GrayImage reassemble(const BlockGrid& grid) {
  if (grid.mode != BlockMode::non_overlapping_padded) {
    throw ModeError("reassemble: only non-overlapping padded grids can be reassembled");
  }
  if (grid.blocks.size() != grid.grid_rows * grid.grid_cols) {
    throw ShapeError("reassemble: " + std::to_string(grid.blocks.size()) + " blocks for a " +
                     std::to_string(grid.grid_rows) + "x" + std::to_string(grid.grid_cols) + " grid");
  }
  if (grid.original_height > grid.grid_rows * kBlockSide || grid.original_width > grid.grid_cols * kBlockSide) {
    throw ShapeError("reassemble: original size exceeds the block grid");
  }
  GrayImage image(grid.original_height, grid.original_width);
  for (std::size_t br = 0; br < grid.grid_rows; ++br) {
    for (std::size_t bc = 0; bc < grid.grid_cols; ++bc) {
      const Tensor& block = grid.blocks[br * grid.grid_cols + bc];
      if (block.size() != kBlockSize) {
        throw ShapeError("reassemble: block has shape " + to_string(block.shape()));
      }
      for (std::size_t r = 0; r < kBlockSide; ++r) {
        const std::size_t row = br * kBlockSide + r;
        if (row >= image.height) break;
        for (std::size_t c = 0; c < kBlockSide; ++c) {
          const std::size_t col = bc * kBlockSide + c;
          if (col >= image.width) break;
          image.at(row, col) = std::clamp(block[r * kBlockSide + c], 0.0, 1.0);
        }
      }
    }
  }
  return image;
}

Dataset::Dataset(Tensor blocks) : blocks_(std::move(blocks)) {
  if (blocks_.rank() != 2 || blocks_.dim(1) != kBlockSize) {
    throw ShapeError("Dataset: expected [S, 1089] blocks, got " + to_string(blocks_.shape()));
  }
}

Dataset Dataset::from_blocks(std::span<const Tensor> blocks) {
  if (blocks.empty()) return Dataset();
  std::vector<double> values;
  values.reserve(blocks.size() * kBlockSize);
  for (const auto& b : blocks) {
    if (b.size() != kBlockSize) throw ShapeError("Dataset: block has shape " + to_string(b.shape()));
    values.insert(values.end(), b.values().begin(), b.values().end());
  }
  return Dataset(Tensor({blocks.size(), kBlockSize}, std::move(values)));
}

Tensor Dataset::block(std::size_t index) const {
  if (index >= size()) throw ShapeError("Dataset: block index " + std::to_string(index) + " out of range");
  const double* src = blocks_.data() + index * kBlockSize;
  return Tensor({kBlockSize}, std::vector<double>(src, src + kBlockSize));
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  Tensor batch({indices.size(), kBlockSize});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ShapeError("Dataset: block index out of range");
    const double* src = blocks_.data() + indices[i] * kBlockSize;
    std::copy(src, src + kBlockSize, batch.data() + i * kBlockSize);
  }
  return batch;
}

Dataset Dataset::head(std::size_t count) const {
  count = std::min(count, size());
  if (count == 0) return Dataset();
  std::vector<double> values(blocks_.data(), blocks_.data() + count * kBlockSize);
  Dataset out(Tensor({count, kBlockSize}, std::move(values)));
  out.sources = sources;
  return out;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

Dataset build_dataset(const std::filesystem::path& dir, std::size_t stride, std::uint64_t shuffle_seed) {
  std::vector<Tensor> blocks;
  std::vector<std::string> sources;
  std::vector<std::string> skipped;
  for (const auto& path : list_images(dir)) {
    try {
      auto grid = extract_training_blocks(load_gray(path), stride);
      std::move(grid.blocks.begin(), grid.blocks.end(), std::back_inserter(blocks));
      sources.push_back(path.filename().string());
    } catch (const Error& e) {
      skipped.push_back(path.filename().string() + ": " + e.what());
    }
  }
  if (blocks.empty()) {
    std::string msg = "no training blocks could be built from '" + dir.string() + "'";
    for (const auto& s : skipped) msg += "\n  skipped " + s;
    throw DataError(msg);
  }

  std::vector<std::size_t> order(blocks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> values(blocks.size() * kBlockSize);
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy(blocks[order[i]].data(), blocks[order[i]].data() + kBlockSize, values.data() + i * kBlockSize);
  }
  Dataset dataset(Tensor({blocks.size(), kBlockSize}, std::move(values)));
  dataset.sources = std::move(sources);
  dataset.skipped = std::move(skipped);
  return dataset;
}

}  // namespace blockcs
