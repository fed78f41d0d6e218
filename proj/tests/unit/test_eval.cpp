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
#include "blockcs/eval.hpp"
#include "support.hpp"

using namespace blockcs;
using testing::random_image;
using testing::random_tensor;

namespace {

// Direct loops; independent of the library's Eigen path.
Tensor matvec(const Tensor& a, const Tensor& x) {
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor y({m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += a[i * n + j] * x[j];
  return y;
}

double objective(const Tensor& phi, const Tensor& x, const Tensor& y, double lambda) {
  const Tensor r = matvec(phi, x);
  double out = 0;
  for (std::size_t i = 0; i < y.size(); ++i) out += (r[i] - y[i]) * (r[i] - y[i]);
  for (double v : x.values()) out += lambda * v * v;
  return out;
}

std::map<MeasurementRate, Model> two_models() {
  return {{MeasurementRate::k0_25, build_model(MeasurementRate::k0_25, 1)},
          {MeasurementRate::k0_01, build_model(MeasurementRate::k0_01, 2)}};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("psnr examples") {
  const GrayImage a = random_image(16, 16, 1);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  CHECK(psnr(GrayImage(4, 4, 0.0), GrayImage(4, 4, 1.0)) == 0.0);

  GrayImage mid(8, 8);
  for (std::size_t i = 0; i < mid.pixels.size(); ++i) mid.pixels[i] = (50.0 + static_cast<double>(i)) / 255.0;
  GrayImage shifted = mid;
  for (double& v : shifted.pixels) v += 1.0 / 255.0;
  CHECK(psnr(mid, shifted) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-9));
  CHECK(psnr(mid, shifted) == doctest::Approx(48.13).epsilon(1e-4));

  CHECK_THROWS_AS(psnr(GrayImage(2, 2), GrayImage(2, 3)), ShapeError);
}

TEST_CASE("psnr is symmetric and decreasing in error") {
  const GrayImage a = random_image(10, 12, 2), b = random_image(10, 12, 3);
  CHECK(psnr(a, b) == psnr(b, a));
  double prev = std::numeric_limits<double>::infinity();
  for (double offset : {0.001, 0.01, 0.05, 0.2}) {
    GrayImage c(4, 4, 0.5);
    for (double& v : c.pixels) v += offset;
    const double p = psnr(GrayImage(4, 4, 0.5), c);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("gaussian baseline matrix") {
  for (auto r : kAllRates) {
    const GaussianBaseline b = make_gaussian_baseline(r, 4);
    const std::size_t m = measurement_count(r);
    CHECK(b.phi.shape() == Shape{m, kBlockSize});
    double sq = 0;
    for (double v : b.phi.values()) sq += v * v;
    CHECK(sq / static_cast<double>(b.phi.size()) == doctest::Approx(1.0 / static_cast<double>(m)).epsilon(0.1));
  }
  CHECK(make_gaussian_baseline(MeasurementRate::k0_10, 3).phi == make_gaussian_baseline(MeasurementRate::k0_10, 3).phi);
  const GaussianBaseline b = make_gaussian_baseline(MeasurementRate::k0_04, 5);
  const Tensor x = random_tensor({kBlockSize}, 6, 0, 1);
  const Tensor y = baseline_sample(b, x), expect = matvec(b.phi, x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("tikhonov: identity operator") {
  Tensor eye({kBlockSize, kBlockSize});
  for (std::size_t i = 0; i < kBlockSize; ++i) eye[i * kBlockSize + i] = 1.0;
  const Tensor y = random_tensor({kBlockSize}, 7, 0, 1);
  const Tensor x = baseline_reconstruct(eye, y, 1e-6);
  for (std::size_t i = 0; i < kBlockSize; ++i) REQUIRE(std::abs(x[i] - y[i]) < 1e-3);
}

TEST_CASE("tikhonov: zero measurement gives zero") {
  const GaussianBaseline b = make_gaussian_baseline(MeasurementRate::k0_25, 0);
  CHECK(baseline_reconstruct(b.phi, Tensor({272})) == Tensor({kBlockSize}));
}

TEST_CASE("tikhonov: the solution minimizes the regularized objective") {
  const double lambda = kDefaultTikhonovLambda;
  const GaussianBaseline b = make_gaussian_baseline(MeasurementRate::k0_25, 8);
  const TikhonovSolver solver(b.phi, lambda);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Tensor x = random_tensor({kBlockSize}, 20 + seed, 0, 1);
    const Tensor y = matvec(b.phi, x);
    const Tensor xh = solver.solve(y);
    const double best = objective(b.phi, xh, y, lambda);
    // The true block is a feasible point; so is any perturbation of x-hat.
    CHECK(best <= objective(b.phi, x, y, lambda) + 1e-9);
    for (std::uint64_t k = 0; k < 3; ++k) {
      Tensor z = xh;
      const Tensor d = random_tensor({kBlockSize}, 100 + k);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += 1e-3 * d[i];
      CHECK(best <= objective(b.phi, z, y, lambda) + 1e-9);
    }
    // Normal equations: phi^T (phi x - y) + lambda x = 0.
    const Tensor r = matvec(b.phi, xh);
    double worst = 0;
    for (std::size_t j = 0; j < kBlockSize; ++j) {
      double g = lambda * xh[j];
      for (std::size_t i = 0; i < y.size(); ++i) g += b.phi[i * kBlockSize + j] * (r[i] - y[i]);
      worst = std::max(worst, std::abs(g));
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("tikhonov: batched solve matches single solves") {
  const GaussianBaseline b = make_gaussian_baseline(MeasurementRate::k0_10, 2);
  const TikhonovSolver solver(b.phi);
  const Tensor ys = random_tensor({3, 108}, 5);
  const Tensor xs = solver.solve(ys);
  REQUIRE(xs.shape() == Shape{3, kBlockSize});
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor x = solver.solve(Tensor({108}, std::vector<double>(ys.data() + k * 108, ys.data() + (k + 1) * 108)));
    for (std::size_t i = 0; i < kBlockSize; ++i) REQUIRE(xs[k * kBlockSize + i] == doctest::Approx(x[i]).epsilon(1e-10));
  }
}

TEST_CASE("image reconstruction keeps dimensions and range") {
  const Model m = build_model(MeasurementRate::k0_04, 0);
  const GrayImage img = random_image(70, 50, 9);
  const GrayImage out = reconstruct_image(m, img);
  CHECK(out.height == 70);
  CHECK(out.width == 50);
  for (double v : out.pixels) REQUIRE((v >= 0.0 && v <= 1.0));
  const GaussianBaseline b = make_gaussian_baseline(MeasurementRate::k0_04, 0);
  const GrayImage base = reconstruct_image(b, TikhonovSolver(b.phi), img);
  CHECK(base.height == 70);
}

TEST_CASE("evaluate: structure and ordering") {
  testing::TempDir dir("eval");
  for (int i = 0; i < 3; ++i) save_pgm(random_image(40, 35, 30 + i), dir / ("img" + std::to_string(i) + ".pgm"));
  const EvalReport report = evaluate(two_models(), dir.path());
  REQUIRE(report.entries.size() == 3 * 2 * 2);
  // Image-major; 0.25 before 0.01; learned before gaussian.
  CHECK(report.entries[0].image == "img0.pgm");
  CHECK(report.entries[0].rate == MeasurementRate::k0_25);
  CHECK(report.entries[0].method == "learned");
  CHECK(report.entries[1].method == "gaussian");
  CHECK(report.entries[2].rate == MeasurementRate::k0_01);
  CHECK(report.entries[4].image == "img1.pgm");
  for (const auto& e : report.entries) {
    CHECK(std::isfinite(e.psnr_db));
    CHECK(e.recon_seconds >= 0.0);
  }
  CHECK(report.rates() == std::vector<MeasurementRate>{MeasurementRate::k0_25, MeasurementRate::k0_01});
  CHECK(report.metadata.count("timestamp") == 1);
  CHECK(report.metadata.at("model_0.25") == fingerprint(serialize_model(two_models().at(MeasurementRate::k0_25))));
  CHECK(report.mean_psnr(MeasurementRate::k0_25, "learned").has_value());
  CHECK_FALSE(report.mean_psnr(MeasurementRate::k0_10, "learned").has_value());

  SUBCASE("PSNR path is deterministic") {
    const EvalReport again = evaluate(two_models(), dir.path());
    for (std::size_t i = 0; i < report.entries.size(); ++i) CHECK(again.entries[i].psnr_db == report.entries[i].psnr_db);
  }
  SUBCASE("rate subset and baseline toggle") {
    EvalOptions opt;
    opt.rates = {MeasurementRate::k0_01};
    opt.include_baseline = false;
    CHECK(evaluate(two_models(), dir.path(), opt).entries.size() == 3);
    opt.rates = {MeasurementRate::k0_10};
    CHECK_THROWS_AS(evaluate(two_models(), dir.path(), opt), ConfigError);
  }
}

TEST_CASE("evaluate errors") {
  testing::TempDir dir("eval-empty");
  CHECK_THROWS_AS(evaluate(two_models(), dir.path()), DataError);
  CHECK_THROWS_AS(evaluate({}, dir.path()), ConfigError);
}

TEST_CASE("report CSV round trip, including +inf") {
  EvalReport r;
  r.metadata["baseline_seed"] = "0";
  r.entries.push_back({"a.pgm", MeasurementRate::k0_25, "learned", std::numeric_limits<double>::infinity(), 0.25});
  r.entries.push_back({"a.pgm", MeasurementRate::k0_25, "gaussian", 7.1234567890123, 1e-3});
  const std::string csv = r.to_csv();
  CHECK(csv.find("# baseline_seed=0") != std::string::npos);
  CHECK(csv.find("image,rate,method,psnr_db,recon_seconds") != std::string::npos);
  CHECK(csv.find(",inf,") != std::string::npos);
  CHECK(EvalReport::from_csv(csv) == r);
  const std::string table = r.to_table();
  CHECK(table.find("Mean") != std::string::npos);
  CHECK(table.find("0.25") != std::string::npos);
  CHECK_THROWS_AS(EvalReport::from_csv("x,y\n"), FormatError);
}

TEST_CASE("timing") {
  const Model m = build_model(MeasurementRate::k0_04, 0);
  const TimingStats t = time_reconstruction(m, random_image(64, 64, 1), 3);
  CHECK(t.samples.size() == 3);
  CHECK(t.min <= t.median);
  CHECK(t.median <= t.max);
  CHECK_THROWS_AS(time_reconstruction(m, random_image(33, 33, 1), 2), ConfigError);
  const double small = time_reconstruction(m, random_image(128, 128, 2), 3).median;
  const double large = time_reconstruction(m, random_image(512, 512, 3), 3).median;
  CHECK(large > small);
}

TEST_CASE("fingerprint is 64-bit FNV-1a") {
  CHECK(fingerprint({}) == "cbf29ce484222325");
  CHECK(fingerprint({'a'}) == "af63dc4c8601ec8c");
}

}  // TEST_SUITE
