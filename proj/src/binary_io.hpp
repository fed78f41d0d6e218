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

// Little-endian primitives shared by the model and optimizer-state files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "blockcs/error.hpp"
#include "blockcs/tensor.hpp"

namespace blockcs::detail {

static_assert(std::endian::native == std::endian::little, "binary container assumes a little-endian host");

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void tensor(const Tensor& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    bytes_.insert(bytes_.end(), p, p + t.size() * sizeof(double));
  }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string file_kind)
      : bytes_(bytes), kind_(std::move(file_kind)) {}

  void section(std::string name) { section_ = std::move(name); }

  void expect_magic(std::string_view tag) {
    need(tag.size());
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
      throw FormatError(kind_ + ": bad magic bytes in section '" + section_ + "'");
    }
    pos_ += tag.size();
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  Tensor tensor(const Shape& expected) {
    const auto rank = get<std::uint32_t>();
    if (rank != expected.size()) fail("rank " + std::to_string(rank) + ", expected " + std::to_string(expected.size()));
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>();
    if (shape != expected) fail("shape " + to_string(shape) + ", expected " + to_string(expected));
    const std::size_t n = element_count(shape);
    need(n * sizeof(double));
    std::vector<double> values(n);
    std::memcpy(values.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return Tensor(std::move(shape), std::move(values));
  }

  void expect_end() {
    if (pos_ != bytes_.size()) {
      throw FormatError(kind_ + ": " + std::to_string(bytes_.size() - pos_) + " trailing bytes after section '" +
                        section_ + "'");
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(kind_ + ": invalid section '" + section_ + "': " + what);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(kind_ + ": truncated in section '" + section_ + "'");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string kind_;
  std::string section_ = "header";
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace blockcs::detail
