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
#include <ostream>
#include <string>
#include <vector>

namespace blockcs {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyCheck {
  std::string name;
  std::function<CheckOutcome()> run;
};

inline constexpr double kGradCheckTolerance = 1e-6;
// Every checked op is affine (dense, conv) or quadratic (mse) in each input,
// so central differences carry no truncation error and a large step keeps
// round-off far below the tolerance. ReLU inputs must sit > 10 * eps from 0.
inline constexpr double kGradCheckEps = 1e-3;

/// Gradient checks for every layer type plus blocking round trips.
std::vector<VerifyCheck> default_checks();

/// Check that fails: a dense layer whose backward pass is scaled by 1.01.
VerifyCheck perturbed_backward_check();

/// Runs every check, printing one PASS/FAIL line each; true iff all pass.
bool run_checks(const std::vector<VerifyCheck>& checks, std::ostream& out);

}  // namespace blockcs
