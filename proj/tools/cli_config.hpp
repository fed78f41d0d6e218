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

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace blockcs::cli {

inline constexpr std::string_view kEnvPrefix = "BLOCKCS_";

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
EnvLookup process_env();

/// Flat `key = value` text; blank lines and lines starting with '#' are ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::string& path);

/// "data-dir" -> "BLOCKCS_DATA_DIR".
std::string env_name(std::string_view key);

/// Field-wise precedence: flags > config file > environment > defaults.
class Settings {
 public:
  Settings(std::map<std::string, std::string> flags, std::map<std::string, std::string> config, EnvLookup env);

  std::optional<std::string> find(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  /// Where the value for `key` came from: "flag", "config", "env" or "default".
  std::string source(const std::string& key) const;

  std::string require(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;

 private:
  std::map<std::string, std::string> flags_;
  std::map<std::string, std::string> config_;
  EnvLookup env_;
};

}  // namespace blockcs::cli
