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

#include <sstream>

#include "blockcs/data.hpp"
#include "blockcs/error.hpp"
#include "blockcs/eval.hpp"
#include "blockcs/model.hpp"
#include "blockcs/train.hpp"
#include "cli_config.hpp"
#include "commands.hpp"
#include "support.hpp"

using namespace blockcs;
using namespace blockcs::cli;

namespace {

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation invoke(const std::vector<std::string>& args, std::map<std::string, std::string> env = {},
                  const std::atomic<bool>* stop = nullptr) {
  std::ostringstream out, err;
  Context ctx{out, err};
  ctx.env = [env](const std::string& name) -> std::optional<std::string> {
    if (auto it = env.find(name); it != env.end()) return it->second;
    return std::nullopt;
  };
  ctx.stop = stop;
  const int code = run(args, ctx);
  return {code, out.str(), err.str()};
}

std::string tiny_dir() { return (testing::data_dir() / "tiny").string(); }

std::size_t count_lines(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) n += line.find(needle) != std::string::npos;
  return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config text parsing") {
  const auto kv = parse_config_text("# comment\n\nrate = 0.25\n  batch=4  \nout=a=b\n");
  CHECK(kv.at("rate") == "0.25");
  CHECK(kv.at("batch") == "4");
  CHECK(kv.at("out") == "a=b");
  CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("=1\n"), ConfigError);
}

TEST_CASE("environment names") {
  CHECK(env_name("data-dir") == "BLOCKCS_DATA_DIR");
  CHECK(env_name("rate") == "BLOCKCS_RATE");
}

TEST_CASE("precedence: flag > config > env > default, per field") {
  const EnvLookup env = [](const std::string& n) -> std::optional<std::string> {
    if (n == "BLOCKCS_A" || n == "BLOCKCS_B" || n == "BLOCKCS_C") return "env";
    return std::nullopt;
  };
  const Settings s({{"a", "flag"}}, {{"a", "config"}, {"b", "config"}}, env);
  CHECK(s.get("a", "default") == "flag");
  CHECK(s.get("b", "default") == "config");
  CHECK(s.get("c", "default") == "env");
  CHECK(s.get("d", "default") == "default");
  CHECK(s.source("a") == "flag");
  CHECK(s.source("c") == "env");
  CHECK(s.source("d") == "default");
  CHECK_THROWS_AS(s.require("d"), ConfigError);
}

TEST_CASE("numeric settings are validated") {
  const Settings s({{"n", "12"}, {"bad", "12x"}, {"neg", "-1"}, {"x", "1e-3"}}, {}, nullptr);
  CHECK(s.get_u64("n", 0) == 12);
  CHECK(s.get_u64("missing", 7) == 7);
  CHECK_THROWS_AS(s.get_u64("bad", 0), ConfigError);
  CHECK_THROWS_AS(s.get_u64("neg", 0), ConfigError);
  CHECK(s.get_double("x", 0) == 1e-3);
  CHECK_THROWS_AS(s.get_double("bad", 0), ConfigError);
}

TEST_CASE("usage errors exit 1") {
  testing::TempDir dir("cli-usage");
  CHECK(invoke({}).code == kExitUsage);
  CHECK(invoke({"frobnicate"}).code == kExitUsage);
  const auto bad_rate =
      invoke({"train", "--rate", "0.5", "--data-dir", tiny_dir(), "--out", (dir / "m").string()});
  CHECK(bad_rate.code == kExitUsage);
  CHECK(bad_rate.err.find("0.5") != std::string::npos);
  CHECK(invoke({"train", "--data-dir", tiny_dir(), "--out", (dir / "m").string()}).code == kExitUsage);
  CHECK(invoke({"train", "--rate", "0.25", "--data-dir", tiny_dir(), "--out", (dir / "m").string(), "--batch",
                "zero"})
            .code == kExitUsage);
  CHECK(invoke({"--help"}).code == kExitOk);
}

TEST_CASE("train writes model, loss history and optimizer sidecar") {
  testing::TempDir dir("cli-train");
  const std::string out = (dir / "r25.bcsm").string();
  const std::vector<std::string> args = {"train", "--rate", "0.25", "--data-dir", tiny_dir(), "--out", out,
                                         "--optimizer", "adam", "--iterations", "100", "--seed", "0", "--batch", "2"};
  const auto first = invoke(args);
  REQUIRE(first.code == kExitOk);
  const Model m = load_model(out);
  CHECK(m.rate == MeasurementRate::k0_25);
  const LossHistory h = LossHistory::from_csv(testing::read_text(out + ".loss.csv"));
  REQUIRE(h.records.size() == 2);
  CHECK(h.records[0].iteration == 0);
  CHECK(h.records[1].iteration == 100);
  const OptimizerState st = load_optimizer_state(out + ".opt", MeasurementRate::k0_25);
  CHECK(st.step == 100);

  SUBCASE("same invocation, byte-identical outputs") {
    const auto model_bytes = testing::read_bytes(out);
    const auto loss_text = testing::read_text(out + ".loss.csv");
    REQUIRE(invoke(args).code == kExitOk);
    CHECK(testing::read_bytes(out) == model_bytes);
    CHECK(testing::read_text(out + ".loss.csv") == loss_text);
  }
}

TEST_CASE("train settings from config file and environment") {
  testing::TempDir dir("cli-config");
  {
    std::ofstream cfg(dir / "train.cfg");
    cfg << "rate = 0.01\niterations = 3\nbatch = 8\n";
  }
  const std::string out = (dir / "m.bcsm").string();
  // Flag beats config (batch), config beats env (iterations), env fills the rest.
  const auto r = invoke({"train", "--config", (dir / "train.cfg").string(), "--out", out, "--batch", "1"},
                        {{"BLOCKCS_DATA_DIR", tiny_dir()}, {"BLOCKCS_ITERATIONS", "50"}, {"BLOCKCS_SEED", "4"}});
  REQUIRE(r.code == kExitOk);
  const Model m = load_model(out);
  CHECK(m.rate == MeasurementRate::k0_01);
  CHECK(m.seed == 4);
  CHECK(LossHistory::from_csv(testing::read_text(out + ".loss.csv")).records.back().iteration == 3);
  CHECK(invoke({"train", "--config", (dir / "nope.cfg").string(), "--out", out}).code == kExitData);
}

TEST_CASE("train with selection prints every variant") {
  testing::TempDir dir("cli-select");
  const auto r = invoke({"train", "--rate", "0.01", "--data-dir", tiny_dir(), "--out", (dir / "m").string(),
                         "--optimizer", "select", "--pretrain", "auto", "--iterations", "2", "--pretrain-iterations",
                         "2", "--batch", "1"});
  REQUIRE(r.code == kExitOk);
  CHECK(count_lines(r.out, "variant ") == 4);
  CHECK(count_lines(r.out, "<- selected") == 1);
}

TEST_CASE("train data errors and divergence") {
  testing::TempDir dir("cli-train-err");
  CHECK(invoke({"train", "--rate", "0.25", "--data-dir", (dir / "missing").string(), "--out",
                (dir / "m").string()})
            .code == kExitData);
  const auto diverged = invoke({"train", "--rate", "0.01", "--data-dir", tiny_dir(), "--out", (dir / "m").string(),
                                "--optimizer", "sgd", "--lr", "1e200", "--iterations", "20", "--batch", "1"});
  CHECK(diverged.code == kExitDivergence);
  CHECK(diverged.err.find("iteration") != std::string::npos);
}

TEST_CASE("interrupted training still writes a checkpoint") {
  testing::TempDir dir("cli-stop");
  std::atomic<bool> stop{true};
  const std::string out = (dir / "m.bcsm").string();
  const auto r = invoke({"train", "--rate", "0.01", "--data-dir", tiny_dir(), "--out", out, "--batch", "1"}, {}, &stop);
  CHECK(r.code == kExitInterrupted);
  CHECK(load_model(out) == build_model(MeasurementRate::k0_01, 0));
  CHECK(std::filesystem::exists(out + ".opt"));
  CHECK(std::filesystem::exists(out + ".loss.csv"));
}

TEST_CASE("reconstruct") {
  testing::TempDir dir("cli-recon");
  save_model(build_model(MeasurementRate::k0_10, 0), dir / "m.bcsm");
  const std::string in = (testing::data_dir() / "holdout" / "camera.pgm").string();
  const std::string out = (dir / "out.pgm").string();
  REQUIRE(invoke({"reconstruct", "--model", (dir / "m.bcsm").string(), "--in", in, "--out", out}).code == kExitOk);
  const auto bytes = testing::read_bytes(out);
  const GrayImage img = decode_pgm(bytes);
  CHECK(img.height == 256);
  CHECK(img.width == 256);
  // 8-bit PGM: header says maxval 255, so every stored value is in range.
  CHECK(std::string(bytes.begin(), bytes.begin() + 15) == "P5\n256 256\n255\n");
  CHECK(invoke({"reconstruct", "--model", (dir / "none.bcsm").string(), "--in", in, "--out", out}).code ==
        kExitData);
  CHECK(invoke({"reconstruct", "--model", (dir / "m.bcsm").string(), "--in", (dir / "no.pgm").string(), "--out",
                out})
            .code == kExitData);
}

TEST_CASE("evaluate") {
  testing::TempDir dir("cli-eval");
  std::filesystem::create_directories(dir / "models");
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "empty");
  save_model(build_model(MeasurementRate::k0_25, 0), dir / "models" / "a.bcsm");
  save_model(build_model(MeasurementRate::k0_01, 0), dir / "models" / "b.bcsm");
  testing::write_bytes(dir / "models" / "notes.txt", {'h', 'i'});
  for (int i = 0; i < 3; ++i) save_pgm(testing::random_image(40, 40, i), dir / "images" / ("i" + std::to_string(i) + ".pgm"));

  const std::string report = (dir / "report.csv").string();
  const std::vector<std::string> args = {"evaluate", "--models", (dir / "models").string(), "--test-dir",
                                         (dir / "images").string(), "--report", report};
  const auto r = invoke(args);
  REQUIRE(r.code == kExitOk);
  const std::string csv = testing::read_text(report);
  CHECK(count_lines(csv, ",learned,") == 6);
  CHECK(count_lines(csv, ",gaussian,") == 6);
  CHECK(std::filesystem::exists(dir / "report.txt"));
  CHECK(count_lines(r.out, "mean PSNR") == 2);

  SUBCASE("re-run differs only in timestamp and timing") {
    REQUIRE(invoke(args).code == kExitOk);
    const EvalReport a = EvalReport::from_csv(csv), b = EvalReport::from_csv(testing::read_text(report));
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      CHECK(a.entries[i].image == b.entries[i].image);
      CHECK(a.entries[i].psnr_db == b.entries[i].psnr_db);
    }
    auto strip = [](std::map<std::string, std::string> m) {
      m.erase("timestamp");
      return m;
    };
    CHECK(strip(a.metadata) == strip(b.metadata));
  }
  SUBCASE("errors") {
    CHECK(invoke({"evaluate", "--models", (dir / "models").string(), "--test-dir", (dir / "empty").string(),
                  "--report", report})
              .code == kExitData);
    CHECK(invoke({"evaluate", "--models", (dir / "empty").string(), "--test-dir", (dir / "images").string(),
                  "--report", report})
              .code == kExitData);
    save_model(build_model(MeasurementRate::k0_25, 1), dir / "models" / "c.bcsm");
    CHECK(invoke(args).code == kExitData);
  }
}

TEST_CASE("verify") {
  const auto ok = invoke({"verify"});
  CHECK(ok.code == kExitOk);
  CHECK(count_lines(ok.out, "FAIL") == 0);
  CHECK(count_lines(ok.out, "PASS") >= 10);
  const auto bad = invoke({"verify", "--inject-fault"});
  CHECK(bad.code != kExitOk);
  CHECK(count_lines(bad.out, "FAIL") == 1);
}

}  // TEST_SUITE
