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

#include "blockcs/verify.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#include "blockcs/data.hpp"
#include "blockcs/gradcheck.hpp"
#include "blockcs/model.hpp"

namespace blockcs {

namespace {

VerifyCheck gradient_check(std::string name, std::function<std::unique_ptr<GradCheckCase>()> make) {
  return {name, [name, make = std::move(make)] {
            auto layer = make();
            const auto r = grad_check(*layer, kGradCheckEps, 0);
            char buf[160];
            std::snprintf(buf, sizeof buf, "max rel err %.3e over %zu entries (worst: %s[%zu])",
                          r.max_relative_error, r.entries_checked, r.worst_variable.c_str(), r.worst_index);
            return CheckOutcome{name, r.max_relative_error < kGradCheckTolerance, buf};
          }};
}

GrayImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(0, 255);
  GrayImage img(h, w);
  for (auto& v : img.pixels) v = dist(rng) / 255.0;
  return img;
}

VerifyCheck round_trip_check(std::size_t h, std::size_t w) {
  std::string name = "blocking round trip " + std::to_string(h) + "x" + std::to_string(w);
  return {name, [name, h, w] {
            const GrayImage img = random_image(h, w, h * 1000 + w);
            const BlockGrid grid = extract_test_blocks(img);
            const bool ok = reassemble(grid) == img;
            return CheckOutcome{name, ok, std::to_string(grid.blocks.size()) + " blocks"};
          }};
}

VerifyCheck training_count_check(std::size_t h, std::size_t w) {
  std::string name = "training block count " + std::to_string(h) + "x" + std::to_string(w);
  return {name, [name, h, w] {
            const std::size_t expected = ((h - kBlockSide) / 12 + 1) * ((w - kBlockSide) / 12 + 1);
            const std::size_t got = extract_training_blocks(random_image(h, w, 7), 12).blocks.size();
            return CheckOutcome{name, got == expected,
                                std::to_string(got) + " blocks, expected " + std::to_string(expected)};
          }};
}

}  // namespace

std::vector<VerifyCheck> default_checks() {
  std::vector<VerifyCheck> checks;
  checks.push_back(gradient_check("gradient dense 4x3", [] { return make_dense_case(4, 3, 0, 1); }));
  checks.push_back(gradient_check("gradient dense batched", [] { return make_dense_case(6, 9, 3, 2); }));
  checks.push_back(gradient_check("gradient conv 11x11", [] { return make_conv_case(3, 2, 11, 13, 13, 0, 3); }));
  checks.push_back(gradient_check("gradient conv 1x1", [] { return make_conv_case(4, 3, 1, 7, 7, 2, 4); }));
  checks.push_back(gradient_check("gradient conv 7x7", [] { return make_conv_case(1, 3, 7, 9, 9, 0, 5); }));
  checks.push_back(gradient_check("gradient conv 3x3", [] { return make_conv_case(2, 2, 3, 5, 5, 0, 6); }));
  checks.push_back(gradient_check("gradient relu", [] { return make_relu_case(64, 0.05, 7); }));
  checks.push_back(gradient_check("gradient mse", [] { return make_mse_case(3, 17, 8); }));
  for (const auto& [h, w] : {std::pair<std::size_t, std::size_t>{33, 33}, {34, 34}, {256, 256}, {512, 512},
                             {45, 100}}) {
    checks.push_back(round_trip_check(h, w));
  }
  checks.push_back(training_count_check(256, 256));
  checks.push_back(training_count_check(44, 33));
  return checks;
}

VerifyCheck perturbed_backward_check() {
  return gradient_check("gradient dense (perturbed backward)",
                        [] { return make_perturbed_case(make_dense_case(4, 3, 0, 1), 0.01); });
}

bool run_checks(const std::vector<VerifyCheck>& checks, std::ostream& out) {
  bool all = true;
  for (const auto& check : checks) {
    const auto start = std::chrono::steady_clock::now();
    CheckOutcome outcome;
    try {
      outcome = check.run();
    } catch (const std::exception& e) {
      outcome = {check.name, false, std::string("exception: ") + e.what()};
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out << (outcome.passed ? "PASS " : "FAIL ") << check.name << "  (" << outcome.detail << ", " << ms << " ms)\n";
    all = all && outcome.passed;
  }
  return all;
}

}  // namespace blockcs
