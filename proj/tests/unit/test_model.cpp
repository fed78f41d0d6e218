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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "blockcs/error.hpp"
#include "blockcs/model.hpp"
#include "support.hpp"

using namespace blockcs;
using testing::random_tensor;

namespace {

Model zeroed(Model m) {
  for (Tensor* p : m.parameters()) p->fill(0.0);
  return m;
}

Tensor random_blocks(std::size_t batch, std::uint64_t seed) {
  return random_tensor({batch, kBlockSize}, seed, 0.0, 1.0);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("measurement counts are floor(rate * 1089)") {
  const std::size_t expected[] = {272, 108, 43, 10};
  for (std::size_t i = 0; i < kAllRates.size(); ++i) {
    const auto r = kAllRates[i];
    CHECK(measurement_count(r) == expected[i]);
    CHECK(measurement_count(r) == static_cast<std::size_t>(std::floor(rate_value(r) * 1089.0)));
  }
}

TEST_CASE("rate parsing accepts only the four table labels") {
  CHECK(parse_rate("0.25") == MeasurementRate::k0_25);
  CHECK(parse_rate("0.10") == MeasurementRate::k0_10);
  CHECK(parse_rate("0.1") == MeasurementRate::k0_10);
  CHECK(parse_rate("0.04") == MeasurementRate::k0_04);
  CHECK(parse_rate("0.01") == MeasurementRate::k0_01);
  CHECK_THROWS_AS(parse_rate("0.5"), ConfigError);
  CHECK_THROWS_AS(parse_rate("0.2"), ConfigError);
  CHECK_THROWS_AS(parse_rate(""), ConfigError);
  CHECK_THROWS_AS(rate_from_value(0.3), ConfigError);
  for (auto r : kAllRates) CHECK(parse_rate(rate_label(r)) == r);
}

TEST_CASE("layer shapes at every rate") {
  // SL, FC1-3, CONV1-6 as (out, in[, k, k]).
  const std::size_t sl[] = {272, 108, 43, 10};
  for (std::size_t i = 0; i < kAllRates.size(); ++i) {
    CAPTURE(rate_label(kAllRates[i]));
    const Model m = build_model(kAllRates[i], 0);
    CHECK(m.sampling.weight.shape() == Shape{sl[i], 1089});
    CHECK(m.sampling.bias.shape() == Shape{sl[i]});
    CHECK(m.sda[0].weight.shape() == Shape{1089, sl[i]});
    CHECK(m.sda[1].weight.shape() == Shape{272, 1089});
    CHECK(m.sda[2].weight.shape() == Shape{1089, 272});
    CHECK(m.sda[0].bias.shape() == Shape{1089});
    CHECK(m.sda[1].bias.shape() == Shape{272});
    CHECK(m.sda[2].bias.shape() == Shape{1089});
    const Shape conv[] = {{64, 1, 11, 11}, {32, 64, 1, 1}, {1, 32, 7, 7},
                          {64, 1, 11, 11}, {32, 64, 1, 1}, {1, 32, 7, 7}};
    for (std::size_t l = 0; l < 6; ++l) {
      CHECK(m.conv[l].kernels.shape() == conv[l]);
      CHECK(m.conv[l].bias.shape() == Shape{conv[l][0]});
      CHECK(m.conv[l].padding == conv[l][2] / 2);
    }
    const auto rows = describe_layers(m);
    REQUIRE(rows.size() == 10);
    CHECK(rows[0].name == "SL");
    CHECK(rows[9].name == "CONV6");
    const auto shapes = parameter_shapes(kAllRates[i]);
    const auto params = m.parameters();
    REQUIRE(shapes.size() == Model::kParameterCount);
    for (std::size_t p = 0; p < shapes.size(); ++p) CHECK(params[p]->shape() == shapes[p]);
  }
}

TEST_CASE("initialization: zero biases, fan-in scaled Gaussian weights") {
  const Model m = build_model(MeasurementRate::k0_25, 3);
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); i += 2) {
    const Tensor& w = *params[i];
    const Tensor& b = *params[i + 1];
    for (double v : b.values()) CHECK(v == 0.0);
    const std::size_t fan_in = w.size() / w.dim(0);
    double sum = 0, sq = 0;
    for (double v : w.values()) {
      sum += v;
      sq += v * v;
    }
    const double n = static_cast<double>(w.size());
    const double var = sq / n - (sum / n) * (sum / n);
    const double expected = 2.0 / static_cast<double>(fan_in);
    // Loose statistical band; the smallest tensor has 1568 entries.
    CHECK(var == doctest::Approx(expected).epsilon(0.15));
    CHECK(std::abs(sum / n) < 4.0 * std::sqrt(expected / n));
  }
}

TEST_CASE("build_model is deterministic per seed") {
  CHECK(build_model(MeasurementRate::k0_04, 9) == build_model(MeasurementRate::k0_04, 9));
  CHECK_FALSE(build_model(MeasurementRate::k0_04, 9) == build_model(MeasurementRate::k0_04, 10));
}

TEST_CASE("sample") {
  const Model m = build_model(MeasurementRate::k0_01, 0);
  CHECK(sample(m, random_tensor({kBlockSize}, 1, 0, 1)).shape() == Shape{10});
  CHECK(sample(m, Tensor({kBlockSize})) == Tensor({10}));
  const Tensor y = sample(m, random_blocks(6, 2));
  CHECK(y.shape() == Shape{6, 10});
  for (double v : y.values()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(sample(m, Tensor({1000})), ShapeError);
}

TEST_CASE("initial reconstruction") {
  const Model m = build_model(MeasurementRate::k0_25, 0);
  const Tensor y = sample(m, random_blocks(3, 4));
  const Tensor x0 = initial_reconstruct(m, y);
  CHECK(x0.shape() == Shape{3, kBlockSize});
  for (double v : x0.values()) CHECK(v >= 0.0);
  CHECK(initial_reconstruct(zeroed(m), Tensor({272})) == Tensor({kBlockSize}));
  // Any y, including negative entries, still gives a non-negative block.
  for (double v : initial_reconstruct(m, random_tensor({272}, 5)).values()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(initial_reconstruct(m, Tensor({108})), ShapeError);
}

TEST_CASE("deep reconstruction keeps the 33x33 map") {
  const Model m = build_model(MeasurementRate::k0_10, 1);
  const Tensor x = random_tensor({1, 33, 33}, 6, 0, 1);
  CHECK(deep_reconstruct(m, x).shape() == Shape{1, 33, 33});
  CHECK(deep_reconstruct(m, random_tensor({2, 1, 33, 33}, 7, 0, 1)).shape() == Shape{2, 1, 33, 33});
  CHECK(deep_reconstruct(zeroed(m), x) == Tensor({1, 33, 33}));
  CHECK_THROWS_AS(deep_reconstruct(m, Tensor({1, 32, 33})), ShapeError);
}

TEST_CASE("feature map channel counts through the CNN") {
  const Model m = build_model(MeasurementRate::k0_25, 0);
  const auto trace = forward_trace(m, random_blocks(2, 8));
  const std::size_t channels[] = {64, 32, 1, 64, 32, 1};
  for (std::size_t l = 0; l < 6; ++l) CHECK(trace.conv[l].shape() == Shape{2, channels[l], 33, 33});
}

TEST_CASE("forward equals the three stages in sequence") {
  for (auto r : kAllRates) {
    const Model m = build_model(r, 2);
    const Tensor x = random_tensor({kBlockSize}, 9, 0, 1);
    const Tensor staged =
        deep_reconstruct(m, initial_reconstruct(m, sample(m, x)).reshaped({1, 33, 33})).reshaped({kBlockSize});
    const Tensor full = forward(m, x);
    CHECK(full.shape() == Shape{kBlockSize});
    CHECK(full == staged);
    CHECK(full.all_finite());
  }
}

TEST_CASE("batched forward matches per-block forward") {
  const Model m = build_model(MeasurementRate::k0_04, 5);
  const Tensor xb = random_blocks(3, 10);
  const Tensor yb = forward(m, xb);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor x({kBlockSize}, std::vector<double>(xb.data() + b * kBlockSize, xb.data() + (b + 1) * kBlockSize));
    const Tensor y = forward(m, x);
    for (std::size_t i = 0; i < kBlockSize; ++i) CHECK(yb[b * kBlockSize + i] == doctest::Approx(y[i]).epsilon(1e-12));
  }
}

TEST_CASE("full-model backward agrees with finite differences on sampled entries") {
  const Model base = build_model(MeasurementRate::k0_01, 11);
  const Tensor blocks = random_blocks(2, 12);
  auto loss_of = [&](const Model& m) { return mse_loss(forward_trace(m, blocks).output(), blocks); };
  const auto trace = forward_trace(base, blocks);
  const auto grads = backward(base, trace, mse_grad(trace.output(), blocks));
  REQUIRE(grads.size() == Model::kParameterCount);

  // ReLU on every hidden layer makes the loss piecewise quadratic in any
  // single parameter, so a central difference is exact unless the step
  // crosses a kink. Accept agreement at any of several steps.
  std::mt19937_64 rng(13);
  for (std::size_t p = 0; p < Model::kParameterCount; ++p) {
    CAPTURE(Model::parameter_names()[p]);
    std::uniform_int_distribution<std::size_t> pick(0, grads[p].size() - 1);
    for (int trial = 0; trial < 3; ++trial) {
      const std::size_t idx = pick(rng);
      const double analytic = grads[p][idx];
      double best = std::numeric_limits<double>::infinity();
      for (double eps : {1e-5, 1e-6, 1e-7}) {
        Model plus = base, minus = base;
        (*plus.parameters()[p])[idx] += eps;
        (*minus.parameters()[p])[idx] -= eps;
        const double numeric = (loss_of(plus) - loss_of(minus)) / (2 * eps);
        best = std::min(best, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-3}));
      }
      CAPTURE(analytic);
      CHECK(best <= 1e-5);
    }
  }
}

TEST_CASE("partial trace stops after the SDA") {
  const Model m = build_model(MeasurementRate::k0_10, 1);
  const Tensor blocks = random_blocks(2, 3);
  const auto trace = forward_trace(m, blocks, false);
  CHECK(trace.output() == trace.sda[2]);
  const auto grads = backward(m, trace, mse_grad(trace.output(), blocks));
  REQUIRE(grads.size() == Model::kParameterCount);
  for (std::size_t p = 0; p < Model::kParameterCount; ++p) {
    CAPTURE(p);
    CHECK(grads[p].empty() == (p >= Model::kFcParameterCount));
  }
}

TEST_CASE("model file round trip") {
  testing::TempDir dir("model");
  const Model m = build_model(MeasurementRate::k0_25, 77);
  save_model(m, dir / "m.bcsm");
  const Model loaded = load_model(dir / "m.bcsm");
  CHECK(loaded == m);
  CHECK(loaded.rate == MeasurementRate::k0_25);
  CHECK(loaded.seed == 77);
  CHECK(serialize_model(loaded) == testing::read_bytes(dir / "m.bcsm"));
}

TEST_CASE("model file errors") {
  testing::TempDir dir("model-err");
  const auto bytes = serialize_model(build_model(MeasurementRate::k0_01, 0));

  SUBCASE("empty file") {
    testing::write_bytes(dir / "empty", {});
    CHECK_THROWS_AS(load_model(dir / "empty"), FormatError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_model(dir / "nope"), IoError); }
  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
  }
  SUBCASE("version mismatch") {
    auto bad = bytes;
    bad[8] = 99;  // version follows the 8-byte magic
    CHECK_THROWS_AS(deserialize_model(bad), VersionError);
  }
  SUBCASE("truncation names the section") {
    for (std::size_t cut : {std::size_t{4}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
      std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<long>(cut));
      try {
        deserialize_model(part);
        FAIL("expected FormatError");
      } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("section") != std::string::npos);
      }
    }
  }
  SUBCASE("trailing bytes") {
    auto bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(deserialize_model(bad), FormatError);
  }
}

}  // TEST_SUITE
