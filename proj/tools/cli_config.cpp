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

#include "cli_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "blockcs/error.hpp"

namespace blockcs::cli {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(std::string_view(stripped).substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string env_name(std::string_view key) {
  std::string out(kEnvPrefix);
  for (char c : key) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

Settings::Settings(std::map<std::string, std::string> flags, std::map<std::string, std::string> config, EnvLookup env)
    : flags_(std::move(flags)), config_(std::move(config)), env_(std::move(env)) {}

std::optional<std::string> Settings::find(const std::string& key) const {
  if (auto it = flags_.find(key); it != flags_.end()) return it->second;
  if (auto it = config_.find(key); it != config_.end()) return it->second;
  if (env_) return env_(env_name(key));
  return std::nullopt;
}

std::string Settings::get(const std::string& key, const std::string& fallback) const {
  return find(key).value_or(fallback);
}

std::string Settings::source(const std::string& key) const {
  if (flags_.count(key)) return "flag";
  if (config_.count(key)) return "config";
  if (env_ && env_(env_name(key))) return "env";
  return "default";
}

std::string Settings::require(const std::string& key) const {
  auto v = find(key);
  if (!v || v->empty()) throw ConfigError("missing required setting --" + key);
  return *v;
}

std::uint64_t Settings::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc() || res.ptr != v->data() + v->size()) {
    throw ConfigError("--" + key + ": expected a non-negative integer, got '" + *v + "'");
  }
  return out;
}

double Settings::get_double(const std::string& key, double fallback) const {
  const auto v = find(key);
  if (!v) return fallback;
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v->size()) throw ConfigError("--" + key + ": expected a number, got '" + *v + "'");
  return out;
}

}  // namespace blockcs::cli
