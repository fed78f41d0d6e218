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

#include <atomic>
#include <ostream>
#include <string>
#include <vector>

#include "cli_config.hpp"

namespace blockcs::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
  kExitInterrupted = 130,
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  EnvLookup env = process_env();
  /// Set asynchronously (SIGINT) to stop training after the current step.
  const std::atomic<bool>* stop = nullptr;
};

/// Parses `args` (without the program name) and runs the subcommand.
int run(const std::vector<std::string>& args, Context& ctx);

}  // namespace blockcs::cli
