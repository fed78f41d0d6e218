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
#include <stdexcept>
#include <string>

namespace blockcs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not agree for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (unsupported rate, bad padding, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Binary file written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Unusable input data (empty dataset, image too small, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// File system failures, with the offending path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for the grid's blocking mode.
class ModeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t iteration, const std::string& what)
      : Error("training diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}

  std::uint64_t iteration() const noexcept { return iteration_; }

 private:
  std::uint64_t iteration_;
};

}  // namespace blockcs
