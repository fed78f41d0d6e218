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

#include "blockcs/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "blockcs/error.hpp"
#include "blockcs/train.hpp"

namespace blockcs {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

// Blocks per batched forward pass; bounds the 64-channel feature maps.
constexpr std::size_t kReconstructChunk = 32;

Tensor stack_blocks(const std::vector<Tensor>& blocks) { return Dataset::from_blocks(blocks).blocks(); }

std::vector<Tensor> unstack_blocks(const Tensor& stacked) {
  std::vector<Tensor> out;
  out.reserve(stacked.dim(0));
  for (std::size_t i = 0; i < stacked.dim(0); ++i) {
    const double* src = stacked.data() + i * kBlockSize;
    out.emplace_back(Shape{kBlockSize}, std::vector<double>(src, src + kBlockSize));
  }
  return out;
}

template <typename Fn>
Tensor map_chunks(const Tensor& input, std::size_t out_width, Fn&& fn) {
  const std::size_t rows = input.dim(0);
  const std::size_t in_width = input.dim(1);
  Tensor out({rows, out_width});
  for (std::size_t start = 0; start < rows; start += kReconstructChunk) {
    const std::size_t n = std::min(kReconstructChunk, rows - start);
    Tensor chunk({n, in_width}, std::vector<double>(input.data() + start * in_width,
                                                     input.data() + (start + n) * in_width));
    const Tensor result = fn(chunk);
    std::copy(result.data(), result.data() + n * out_width, out.data() + start * out_width);
  }
  return out;
}

Tensor reconstruct_from_measurements(const Model& model, const Tensor& measurements) {
  return map_chunks(measurements, kBlockSize, [&](const Tensor& y) {
    const std::size_t n = y.dim(0);
    Tensor initial = initial_reconstruct(model, y);
    return deep_reconstruct(model, std::move(initial).reshaped({n, 1, kBlockSide, kBlockSide}))
        .reshaped({n, kBlockSize});
  });
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double psnr(const GrayImage& reference, const GrayImage& candidate) {
  if (reference.height != candidate.height || reference.width != candidate.width) {
    throw ShapeError("psnr: image sizes differ (" + std::to_string(reference.height) + "x" +
                     std::to_string(reference.width) + " vs " + std::to_string(candidate.height) + "x" +
                     std::to_string(candidate.width) + ")");
  }
  if (reference.pixels.empty()) throw ShapeError("psnr: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = reference.pixels[i] - candidate.pixels[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(reference.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

GaussianBaseline make_gaussian_baseline(MeasurementRate rate, std::uint64_t seed) {
  const std::size_t m = measurement_count(rate);
  GaussianBaseline b{rate, seed, Tensor({m, kBlockSize})};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
  for (auto& v : b.phi.values()) v = dist(rng);
  return b;
}

Tensor baseline_sample(const GaussianBaseline& baseline, const Tensor& block) {
  const std::size_t m = baseline.phi.dim(0);
  return dense_forward(DenseParams(baseline.phi, Tensor({m})), block);
}

struct TikhonovSolver::Impl {
  RowMatrix phi;
  Eigen::LLT<Eigen::MatrixXd> factor;
};

TikhonovSolver::TikhonovSolver(const Tensor& phi, double lambda) : impl_(std::make_unique<Impl>()), lambda_(lambda) {
  if (phi.rank() != 2) throw ShapeError("TikhonovSolver: phi must be a matrix, got " + to_string(phi.shape()));
  if (!(lambda > 0.0)) throw ConfigError("TikhonovSolver: lambda must be > 0");
  const std::size_t m = phi.dim(0);
  const std::size_t n = phi.dim(1);
  impl_->phi = ConstMatrixMap(phi.data(), m, n);
  Eigen::MatrixXd gram = impl_->phi.transpose() * impl_->phi;
  gram.diagonal().array() += lambda;
  impl_->factor.compute(gram);
  if (impl_->factor.info() != Eigen::Success) throw ConfigError("TikhonovSolver: normal matrix not positive definite");
}

TikhonovSolver::~TikhonovSolver() = default;
TikhonovSolver::TikhonovSolver(TikhonovSolver&&) noexcept = default;
TikhonovSolver& TikhonovSolver::operator=(TikhonovSolver&&) noexcept = default;

Tensor TikhonovSolver::solve(const Tensor& y) const {
  const std::size_t m = static_cast<std::size_t>(impl_->phi.rows());
  const std::size_t n = static_cast<std::size_t>(impl_->phi.cols());
  const bool single = y.rank() == 1;
  if (!(single && y.dim(0) == m) && !(y.rank() == 2 && y.dim(1) == m)) {
    throw ShapeError("TikhonovSolver: measurements " + to_string(y.shape()) + " do not match phi [" +
                     std::to_string(m) + ", " + std::to_string(n) + "]");
  }
  const std::size_t batch = single ? 1 : y.dim(0);
  // Columns are samples: rhs = phi^T Y^T.
  Eigen::MatrixXd rhs = impl_->phi.transpose() * ConstMatrixMap(y.data(), batch, m).transpose();
  Eigen::MatrixXd x = impl_->factor.solve(rhs);
  Tensor out(single ? Shape{n} : Shape{batch, n});
  MatrixMap(out.data(), batch, n) = x.transpose();
  return out;
}

Tensor baseline_reconstruct(const Tensor& phi, const Tensor& y, double lambda) {
  return TikhonovSolver(phi, lambda).solve(y);
}

GrayImage reconstruct_image(const Model& model, const GrayImage& image) {
  BlockGrid grid = extract_test_blocks(image);
  const Tensor blocks = stack_blocks(grid.blocks);
  const Tensor measurements = map_chunks(blocks, measurement_count(model.rate),
                                         [&](const Tensor& chunk) { return sample(model, chunk); });
  grid.blocks = unstack_blocks(reconstruct_from_measurements(model, measurements));
  return reassemble(grid);
}

GrayImage reconstruct_image(const GaussianBaseline& baseline, const TikhonovSolver& solver, const GrayImage& image) {
  BlockGrid grid = extract_test_blocks(image);
  const Tensor measurements = baseline_sample(baseline, stack_blocks(grid.blocks));
  grid.blocks = unstack_blocks(solver.solve(measurements));
  return reassemble(grid);
}

TimingStats time_reconstruction(const Model& model, const GrayImage& image, int repeats) {
  if (repeats < 3) throw ConfigError("time_reconstruction: repeats must be >= 3");
  BlockGrid grid = extract_test_blocks(image);
  const Tensor measurements = map_chunks(stack_blocks(grid.blocks), measurement_count(model.rate),
                                         [&](const Tensor& chunk) { return sample(model, chunk); });
  TimingStats stats;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    grid.blocks = unstack_blocks(reconstruct_from_measurements(model, measurements));
    const GrayImage out = reassemble(grid);
    stats.samples.push_back(seconds_since(start));
  }
  std::vector<double> sorted = stats.samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  stats.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  stats.min = sorted.front();
  stats.max = sorted.back();
  return stats;
}

std::string fingerprint(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

EvalReport evaluate(const std::map<MeasurementRate, Model>& models, const std::filesystem::path& test_dir,
                    const EvalOptions& options) {
  if (models.empty()) throw ConfigError("evaluate: no models supplied");
  std::vector<MeasurementRate> rates = options.rates;
  if (rates.empty()) {
    for (const auto& [rate, model] : models) rates.push_back(rate);
  }
  for (auto rate : rates) {
    if (!models.count(rate)) throw ConfigError("evaluate: no model for measurement rate " + rate_label(rate));
  }
  // Highest rate first, matching the reporting order.
  std::vector<MeasurementRate> ordered;
  for (auto rate : kAllRates) {
    if (std::find(rates.begin(), rates.end(), rate) != rates.end()) ordered.push_back(rate);
  }

  const auto files = list_images(test_dir);
  if (files.empty()) throw DataError("evaluate: no test images in '" + test_dir.string() + "'");

  EvalReport report;
  report.metadata["baseline_seed"] = std::to_string(options.baseline_seed);
  report.metadata["lambda"] = format_double(options.lambda);
  report.metadata["timestamp"] = utc_timestamp();
  for (auto rate : ordered) {
    const Model& model = models.at(rate);
    report.metadata["model_" + rate_label(rate)] = fingerprint(serialize_model(model));
    report.metadata["model_seed_" + rate_label(rate)] = std::to_string(model.seed);
  }

  std::map<MeasurementRate, std::pair<GaussianBaseline, TikhonovSolver>> baselines;
  if (options.include_baseline) {
    for (auto rate : ordered) {
      auto b = make_gaussian_baseline(rate, options.baseline_seed);
      TikhonovSolver solver(b.phi, options.lambda);
      baselines.emplace(rate, std::make_pair(std::move(b), std::move(solver)));
    }
  }

  for (const auto& path : files) {
    const GrayImage original = load_gray(path);
    const std::string name = path.filename().string();
    for (auto rate : ordered) {
      const Model& model = models.at(rate);
      BlockGrid grid = extract_test_blocks(original);
      const Tensor measurements = map_chunks(stack_blocks(grid.blocks), measurement_count(rate),
                                             [&](const Tensor& chunk) { return sample(model, chunk); });
      auto start = std::chrono::steady_clock::now();
      grid.blocks = unstack_blocks(reconstruct_from_measurements(model, measurements));
      GrayImage learned = reassemble(grid);
      double seconds = seconds_since(start);
      report.entries.push_back({name, rate, "learned", psnr(original, quantize_8bit(learned)), seconds});

      if (!options.include_baseline) continue;
      const auto& [baseline, solver] = baselines.at(rate);
      BlockGrid bgrid = extract_test_blocks(original);
      const Tensor y = baseline_sample(baseline, stack_blocks(bgrid.blocks));
      start = std::chrono::steady_clock::now();
      bgrid.blocks = unstack_blocks(solver.solve(y));
      GrayImage classical = reassemble(bgrid);
      seconds = seconds_since(start);
      report.entries.push_back({name, rate, "gaussian", psnr(original, quantize_8bit(classical)), seconds});
    }
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::string out;
  for (const auto& [key, value] : metadata) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw FormatError("report metadata '" + key + "' cannot be serialized");
    }
    out += "# " + key + "=" + value + "\n";
  }
  out += "image,rate,method,psnr_db,recon_seconds\n";
  for (const auto& e : entries) {
    if (e.image.find_first_of(",\n") != std::string::npos || e.method.find_first_of(",\n") != std::string::npos) {
      throw FormatError("report entry '" + e.image + "' contains a separator character");
    }
    out += e.image + "," + rate_label(e.rate) + "," + e.method + "," + format_double(e.psnr_db) + "," +
           format_double(e.recon_seconds) + "\n";
  }
  return out;
}

EvalReport EvalReport::from_csv(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!header_seen && line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("report CSV: malformed metadata line '" + line + "'");
      report.metadata[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!header_seen) {
      if (line != "image,rate,method,psnr_db,recon_seconds") throw FormatError("report CSV: missing header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 5) throw FormatError("report CSV: expected 5 fields in '" + line + "'");
    try {
      report.entries.push_back(
          {fields[0], parse_rate(fields[1]), fields[2], std::stod(fields[3]), std::stod(fields[4])});
    } catch (const std::exception& e) {
      throw FormatError("report CSV: bad row '" + line + "': " + e.what());
    }
  }
  if (!header_seen) throw FormatError("report CSV: missing header");
  return report;
}

std::vector<MeasurementRate> EvalReport::rates() const {
  std::vector<MeasurementRate> out;
  for (auto rate : kAllRates) {
    if (std::any_of(entries.begin(), entries.end(), [rate](const EvalEntry& e) { return e.rate == rate; })) {
      out.push_back(rate);
    }
  }
  return out;
}

std::optional<double> EvalReport::mean_psnr(MeasurementRate rate, const std::string& method) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.rate == rate && e.method == method) {
      sum += e.psnr_db;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string EvalReport::to_table() const {
  const auto cols = rates();
  std::vector<std::string> images;
  std::vector<std::string> methods;
  for (const auto& e : entries) {
    if (std::find(images.begin(), images.end(), e.image) == images.end()) images.push_back(e.image);
    if (std::find(methods.begin(), methods.end(), e.method) == methods.end()) methods.push_back(e.method);
  }
  std::size_t name_width = 5;
  for (const auto& img : images) name_width = std::max(name_width, img.size());

  std::ostringstream out;
  auto cell = [&out](std::optional<double> v) {
    if (!v) {
      out << std::setw(9) << "-";
    } else if (std::isinf(*v)) {
      out << std::setw(9) << "inf";
    } else {
      out << std::setw(9) << std::fixed << std::setprecision(2) << *v;
    }
  };
  out << std::left << std::setw(static_cast<int>(name_width) + 2) << "Image" << std::setw(10) << "Method"
      << std::right;
  for (auto rate : cols) out << std::setw(9) << rate_label(rate);
  out << "\n";

  auto emit_rows = [&](const std::string& label, auto&& lookup) {
    bool first = true;
    for (const auto& method : methods) {
      out << std::left << std::setw(static_cast<int>(name_width) + 2) << (first ? label : "") << std::setw(10)
          << method << std::right;
      for (auto rate : cols) cell(lookup(rate, method));
      out << "\n";
      first = false;
    }
  };
  for (const auto& img : images) {
    emit_rows(img, [&](MeasurementRate rate, const std::string& method) -> std::optional<double> {
      for (const auto& e : entries) {
        if (e.image == img && e.rate == rate && e.method == method) return e.psnr_db;
      }
      return std::nullopt;
    });
  }
  emit_rows("Mean", [&](MeasurementRate rate, const std::string& method) { return mean_psnr(rate, method); });
  return out.str();
}

}  // namespace blockcs
