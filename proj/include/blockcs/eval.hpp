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
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blockcs/data.hpp"
#include "blockcs/model.hpp"
#include "blockcs/tensor.hpp"

namespace blockcs {

/// 10 log10(1 / MSE) on [0, 1] images; +inf when the images are identical.
double psnr(const GrayImage& reference, const GrayImage& candidate);

/// Classical linear sampling: phi [m, 1089] with i.i.d. N(0, 1/m) entries.
struct GaussianBaseline {
  MeasurementRate rate = MeasurementRate::k0_25;
  std::uint64_t seed = 0;
  Tensor phi;
};

GaussianBaseline make_gaussian_baseline(MeasurementRate rate, std::uint64_t seed);

/// y = phi x, without any nonlinearity. Accepts [1089] or [B, 1089].
Tensor baseline_sample(const GaussianBaseline& baseline, const Tensor& block);

inline constexpr double kDefaultTikhonovLambda = 1e-3;

/// Solves argmin_x |phi x - y|^2 + lambda |x|^2 through the normal equations
/// (phi^T phi + lambda I) x = phi^T y. The Cholesky factor is computed once.
class TikhonovSolver {
 public:
  TikhonovSolver(const Tensor& phi, double lambda = kDefaultTikhonovLambda);
  ~TikhonovSolver();
  TikhonovSolver(TikhonovSolver&&) noexcept;
  TikhonovSolver& operator=(TikhonovSolver&&) noexcept;

  /// y is [m] or [B, m]; the result is [n] or [B, n].
  Tensor solve(const Tensor& y) const;
  double lambda() const { return lambda_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double lambda_;
};

Tensor baseline_reconstruct(const Tensor& phi, const Tensor& y, double lambda = kDefaultTikhonovLambda);

/// Test-mode blocking, learned pipeline per block, reassembly.
GrayImage reconstruct_image(const Model& model, const GrayImage& image);
GrayImage reconstruct_image(const GaussianBaseline& baseline, const TikhonovSolver& solver, const GrayImage& image);

struct EvalEntry {
  std::string image;
  MeasurementRate rate;
  std::string method;  // "learned" or "gaussian"
  double psnr_db;
  double recon_seconds;
  bool operator==(const EvalEntry&) const = default;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  std::map<std::string, std::string> metadata;

  /// Metadata as "# key=value" lines, then image,rate,method,psnr_db,recon_seconds.
  std::string to_csv() const;
  static EvalReport from_csv(const std::string& text);
  /// Aligned table: one row per (image, method), one column per rate, plus means.
  std::string to_table() const;
  /// Mean PSNR over images for (rate, method); nullopt when there are no rows.
  std::optional<double> mean_psnr(MeasurementRate rate, const std::string& method) const;
  std::vector<MeasurementRate> rates() const;
  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  std::uint64_t baseline_seed = 0;
  double lambda = kDefaultTikhonovLambda;
  bool include_baseline = true;
  /// Rates to evaluate; empty means every rate with a model.
  std::vector<MeasurementRate> rates;
};

/// Rows ordered by (image filename, rate 0.25 -> 0.01, learned then gaussian).
EvalReport evaluate(const std::map<MeasurementRate, Model>& models, const std::filesystem::path& test_dir,
                    const EvalOptions& options = {});

struct TimingStats {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> samples;
};

/// Wall-clock time of reconstructing `image` from precomputed measurements
/// (sampling excluded), repeated `repeats` >= 3 times.
TimingStats time_reconstruction(const Model& model, const GrayImage& image, int repeats = 5);

/// 64-bit FNV-1a, hex encoded; used to fingerprint model files in reports.
std::string fingerprint(const std::vector<std::uint8_t>& bytes);

}  // namespace blockcs
