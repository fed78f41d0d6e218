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

#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include <CLI11.hpp>

#include "blockcs/data.hpp"
#include "blockcs/error.hpp"
#include "blockcs/eval.hpp"
#include "blockcs/model.hpp"
#include "blockcs/train.hpp"
#include "blockcs/verify.hpp"

namespace fs = std::filesystem;

namespace blockcs::cli {

namespace {

// Every setting is declared as a string option without a default so that an
// absent flag falls through to the config file / environment layers.
struct OptionSet {
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::string config_path;

  void add(const std::string& key, const std::string& help) {
    app->add_option("--" + key, values[key], help);
  }

  Settings settings(const EnvLookup& env) {
    std::map<std::string, std::string> flags;
    for (auto& [key, value] : values) {
      if (app->count("--" + key) > 0) flags[key] = value;
    }
    std::map<std::string, std::string> config;
    if (!config_path.empty()) config = load_config_file(config_path);
    return Settings(std::move(flags), std::move(config), env);
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string format_loss(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_checkpoint(const TrainResult& result, const fs::path& model_path, const fs::path& loss_path) {
  save_model(result.model, model_path);
  fs::path opt_path = model_path;
  opt_path += ".opt";
  save_optimizer_state(result.optimizer_state, result.model.rate, opt_path);
  write_text(loss_path, result.history.to_csv());
}

int cmd_train(const Settings& s, Context& ctx) {
  const MeasurementRate rate = parse_rate(s.require("rate"));
  const fs::path data_dir = s.require("data-dir");
  const fs::path out_path = s.require("out");
  fs::path loss_path = s.get("loss-csv", "");
  if (loss_path.empty()) {
    loss_path = out_path;
    loss_path += ".loss.csv";
  }

  TrainConfig cfg;
  cfg.iterations = s.get_u64("iterations", cfg.iterations);
  cfg.batch_size = s.get_u64("batch", cfg.batch_size);
  cfg.seed = s.get_u64("seed", cfg.seed);
  cfg.learning_rate = s.get_double("lr", cfg.learning_rate);
  cfg.pretrain_iterations = s.get_u64("pretrain-iterations", cfg.pretrain_iterations);
  cfg.pretrain = parse_pretrain(s.get("pretrain", "off"));
  const std::string optimizer = s.get("optimizer", "adam");
  const bool select = optimizer == "select";
  if (!select) cfg.optimizer = parse_optimizer(optimizer);
  const std::size_t stride = s.get_u64("stride", 12);
  if (stride == 0) throw ConfigError("--stride must be positive");
  cfg.validate();

  const Dataset dataset = build_dataset(data_dir, stride, cfg.seed);
  ctx.out << "dataset: " << dataset.size() << " blocks from " << dataset.sources.size() << " image(s)\n";

  TrainCallbacks callbacks;
  callbacks.on_log = [&](const LossRecord& r) {
    ctx.out << "iter " << r.iteration << " loss " << format_loss(r.loss) << '\n' << std::flush;
  };
  if (ctx.stop) {
    const std::atomic<bool>* stop = ctx.stop;
    callbacks.should_stop = [stop] { return stop->load(); };
  }

  TrainResult result;
  if (select || cfg.pretrain == PretrainPolicy::automatic) {
    std::vector<Optimizer> optimizers;
    if (!select) optimizers.push_back(cfg.optimizer);
    SelectionResult sel = train_with_selection(rate, dataset, cfg, optimizers, callbacks);
    for (std::size_t i = 0; i < sel.variants.size(); ++i) {
      const VariantReport& v = sel.variants[i];
      ctx.out << "variant " << to_string(v.optimizer) << (v.pretrained ? "+pretrain" : "")
              << " final_loss " << format_loss(v.final_loss) << (i == sel.best_index ? "  <- selected" : "")
              << '\n';
    }
    result = std::move(sel.best);
  } else {
    Model model = build_model(rate, cfg.seed);
    if (cfg.pretrain == PretrainPolicy::on) {
      TrainResult pre = pretrain(std::move(model), dataset, cfg, callbacks);
      if (pre.interrupted) {
        result = std::move(pre);
      } else {
        model = std::move(pre.model);
      }
    }
    if (!result.interrupted) result = train(std::move(model), dataset, cfg, callbacks);
  }

  write_checkpoint(result, out_path, loss_path);
  if (result.interrupted) {
    ctx.err << "interrupted after " << result.iterations_completed << " iterations; checkpoint written to "
            << out_path.string() << '\n';
    return kExitInterrupted;
  }
  ctx.out << "wrote " << out_path.string() << " and " << loss_path.string() << '\n';
  return kExitOk;
}

int cmd_reconstruct(const Settings& s, Context& ctx) {
  const Model model = load_model(s.require("model"));
  const GrayImage input = load_gray(s.require("in"));
  const fs::path out_path = s.require("out");
  const GrayImage output = reconstruct_image(model, input);
  save_pgm(output, out_path);
  ctx.out << "rate " << rate_label(model.rate) << ": " << input.width << "x" << input.height << " -> "
          << out_path.string() << '\n';
  return kExitOk;
}

bool has_model_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  return in.gcount() == 8 && std::string(magic, 8) == "BCSMODEL";
}

std::map<MeasurementRate, Model> load_model_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("model directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && has_model_magic(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::map<MeasurementRate, Model> models;
  std::map<MeasurementRate, fs::path> origin;
  for (const auto& f : files) {
    Model m = load_model(f);
    if (origin.count(m.rate)) {
      throw DataError("two models for rate " + rate_label(m.rate) + ": '" + origin[m.rate].string() + "' and '" +
                      f.string() + "'");
    }
    origin[m.rate] = f;
    models.emplace(m.rate, std::move(m));
  }
  if (models.empty()) throw DataError("no model files in '" + dir.string() + "'");
  return models;
}

int cmd_evaluate(const Settings& s, Context& ctx) {
  const auto models = load_model_dir(s.require("models"));
  const fs::path test_dir = s.require("test-dir");
  const fs::path report_path = s.require("report");
  EvalOptions options;
  options.baseline_seed = s.get_u64("seed", 0);
  const EvalReport report = evaluate(models, test_dir, options);

  write_text(report_path, report.to_csv());
  fs::path table_path = report_path;
  table_path.replace_extension(".txt");
  const std::string table = report.to_table();
  write_text(table_path, table);

  ctx.out << table;
  for (MeasurementRate r : report.rates()) {
    ctx.out << "mean PSNR @ " << rate_label(r) << ": learned " << format_loss(*report.mean_psnr(r, "learned"));
    if (auto g = report.mean_psnr(r, "gaussian")) ctx.out << " dB, gaussian " << format_loss(*g);
    ctx.out << " dB\n";
  }
  return kExitOk;
}

int cmd_verify(bool inject_fault, Context& ctx) {
  auto checks = default_checks();
  if (inject_fault) checks.push_back(perturbed_backward_check());
  return run_checks(checks, ctx.out) ? kExitOk : kExitDivergence;
}

}  // namespace

int run(const std::vector<std::string>& args, Context& ctx) {
  CLI::App app{"Learned block compressed sensing: training, reconstruction and evaluation.", "blockcs"};
  app.require_subcommand(1);

  OptionSet train_opts, recon_opts, eval_opts;

  train_opts.app = app.add_subcommand("train", "Train a model for one measurement rate");
  train_opts.add("rate", "Measurement rate: 0.25, 0.10, 0.04 or 0.01");
  train_opts.add("data-dir", "Directory of training images (.pgm/.png)");
  train_opts.add("out", "Output model file");
  train_opts.add("iterations", "Training iterations (mini-batch steps), default 10000");
  train_opts.add("batch", "Mini-batch size, default 64");
  train_opts.add("optimizer", "sgd, adam or select, default adam");
  train_opts.add("pretrain", "on, off or auto, default off");
  train_opts.add("seed", "Seed for initialization and shuffling, default 0");
  train_opts.add("lr", "Learning rate, default 0.001");
  train_opts.add("pretrain-iterations", "Pre-training iterations, default 1000");
  train_opts.add("stride", "Training block stride in pixels, default 12");
  train_opts.add("loss-csv", "Loss history output, default <out>.loss.csv");

  recon_opts.app = app.add_subcommand("reconstruct", "Sample and reconstruct one image");
  recon_opts.add("model", "Model file");
  recon_opts.add("in", "Input image (.pgm/.png)");
  recon_opts.add("out", "Output PGM");

  eval_opts.app = app.add_subcommand("evaluate", "PSNR/timing sweep against the Gaussian baseline");
  eval_opts.add("models", "Directory with one model file per rate");
  eval_opts.add("test-dir", "Directory of test images");
  eval_opts.add("report", "Report CSV path; the table goes next to it as .txt");
  eval_opts.add("seed", "Gaussian baseline seed, default 0");

  for (OptionSet* o : {&train_opts, &recon_opts, &eval_opts}) {
    o->app->add_option("--config", o->config_path, "key=value settings file");
  }

  CLI::App* verify = app.add_subcommand("verify", "Gradient checks and blocking round trips");
  bool inject_fault = false;
  verify->add_flag("--inject-fault", inject_fault)->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, ctx.out, ctx.err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_opts.app) return cmd_train(train_opts.settings(ctx.env), ctx);
    if (*recon_opts.app) return cmd_reconstruct(recon_opts.settings(ctx.env), ctx);
    if (*eval_opts.app) return cmd_evaluate(eval_opts.settings(ctx.env), ctx);
    return cmd_verify(inject_fault, ctx);
  } catch (const ConfigError& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    ctx.err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace blockcs::cli
