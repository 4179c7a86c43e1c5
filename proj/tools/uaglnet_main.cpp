// SPDX-License-Identifier: Apache-2.0
//
// uaglnet command-line interface.
//
//   uaglnet train [--config FILE] [--preset desk] [--out CKPT] [--log FILE] [--key=value ...]
//   uaglnet eval --checkpoint CKPT [--split validation|test] [--scenes N] [--report FILE]
//                [--metrics FILE] [--key=value ...]
//   uaglnet eval --pred-mask PGM --target-mask PGM [--report FILE] [--metrics FILE]
//   uaglnet predict --checkpoint CKPT --image PPM --out PGM
//   uaglnet export-uncertainty --checkpoint CKPT --image PPM --prefix PATH
//   uaglnet count-params [--config FILE] [--preset desk] [--key=value ...]
//   uaglnet gradcheck [--instances N] [--seed S] [--filter NAME]
//   uaglnet synth --seed S --image PPM --mask PGM [--key=value ...]
//
// Setting UAGLNET_F64=1 runs train, eval, predict and export-uncertainty in
// 64-bit arithmetic. gradcheck always runs in 64-bit.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "uaglnet/checkpoint.hpp"
#include "uaglnet/data.hpp"
#include "uaglnet/gradcheck.hpp"
#include "uaglnet/metrics.hpp"
#include "uaglnet/model.hpp"
#include "uaglnet/trainer.hpp"

namespace {

using namespace uaglnet;

KeyValues overrides_from(const std::vector<std::string>& extras) {
  KeyValues kv;
  for (const auto& arg : extras) {
    const auto eq = arg.find('=');
    if (arg.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2) {
      throw ConfigError("unexpected argument '" + arg + "' (config overrides use --key=value)");
    }
    kv[arg.substr(2, eq - 2)] = arg.substr(eq + 1);
  }
  return kv;
}

RunConfig base_config(const std::string& preset) {
  if (preset.empty() || preset == "full") return RunConfig{};
  if (preset == "desk") return desk_config();
  throw ConfigError("unknown preset '" + preset + "' (expected desk or full)");
}

RunConfig resolve_config(const std::string& preset, const std::string& file,
                         const std::vector<std::string>& extras) {
  RunConfig cfg = base_config(preset);
  if (!file.empty()) cfg = apply_key_values(cfg, load_key_values(file));
  cfg = apply_key_values(cfg, overrides_from(extras));
  cfg.model.validate();
  cfg.data.validate();
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void emit_report(const ConfusionCounts& counts, const std::string& report,
                 const std::string& metrics_path) {
  const auto m = metrics_from_counts(counts);
  const auto table = format_report_table(counts, m);
  std::cout << table;
  if (!report.empty()) write_text(report, table);
  if (!metrics_path.empty()) write_text(metrics_path, format_report_key_values(counts, m));
}

template <typename T>
int run_train(const RunConfig& cfg, const TrainOptions& opts) {
  TrainOptions o = opts;
  o.progress = &std::cout;
  const auto s = train<T>(cfg, o);
  std::cout << "steps=" << s.steps << " first_loss=" << s.first_loss
            << " last_loss=" << s.last_loss << " val_iou=" << s.final_eval.metrics.iou
            << " seconds=" << s.seconds << '\n';
  return 0;
}

template <typename T>
UaglNet<T> model_from(const Checkpoint& ck, const RunConfig& cfg) {
  UaglNet<T> model(cfg.model, cfg.model.seed);
  load_parameters(model, ck);
  return model;
}

template <typename T>
ConfusionCounts run_eval(const Checkpoint& ck, const RunConfig& cfg, Split split, int scenes) {
  const auto model = model_from<T>(ck, cfg);
  const auto data = make_scenes(cfg.data, split, scenes);
  return evaluate_scenes(model, data, cfg.model.tile, cfg.model.threshold, cfg.model.seed).counts;
}

template <typename T>
Inference run_infer(const Checkpoint& ck, const RunConfig& cfg, const std::string& image_path) {
  const auto model = model_from<T>(ck, cfg);
  return infer_image(model, load_image(image_path), cfg.model.tile, cfg.model.seed);
}

TensorF threshold_mask(const TensorF& logits, double threshold) {
  std::vector<float> v(logits.data().begin(), logits.data().end());
  for (auto& x : v) x = 1.0 / (1.0 + std::exp(-static_cast<double>(x))) >= threshold ? 1.0f : 0.0f;
  return TensorF(logits.shape(), std::move(v));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAGLNet building extraction"};
  app.require_subcommand(1);

  std::string preset, config_file, out_path = "uaglnet.ckpt", log_path, resume_path;
  auto* train_cmd = app.add_subcommand("train", "train on synthetic scenes");
  train_cmd->add_option("--preset", preset, "desk or full defaults");
  train_cmd->add_option("--config", config_file, "key=value config file");
  train_cmd->add_option("--out", out_path, "checkpoint written after training");
  train_cmd->add_option("--log", log_path, "append-only step log");
  train_cmd->add_option("--resume", resume_path, "continue from a checkpoint");
  train_cmd->allow_extras();

  std::string checkpoint, split_name = "validation", report, metrics_path, pred_mask, target_mask;
  int scenes = 0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or a predicted mask");
  eval_cmd->add_option("--checkpoint", checkpoint);
  eval_cmd->add_option("--split", split_name, "validation or test");
  eval_cmd->add_option("--scenes", scenes, "number of scenes (default val_scenes)");
  eval_cmd->add_option("--pred-mask", pred_mask);
  eval_cmd->add_option("--target-mask", target_mask);
  eval_cmd->add_option("--report", report, "plain-text report path");
  eval_cmd->add_option("--metrics", metrics_path, "key=value metrics path");
  eval_cmd->allow_extras();

  std::string image_path, mask_out, prefix;
  auto* predict_cmd = app.add_subcommand("predict", "write a binary mask for an image");
  predict_cmd->add_option("--checkpoint", checkpoint)->required();
  predict_cmd->add_option("--image", image_path)->required();
  predict_cmd->add_option("--out", mask_out)->required();
  predict_cmd->allow_extras();

  auto* export_cmd = app.add_subcommand("export-uncertainty", "write U_L and U_G as graymaps");
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--image", image_path)->required();
  export_cmd->add_option("--prefix", prefix)->required();
  export_cmd->allow_extras();

  auto* count_cmd = app.add_subcommand("count-params", "parameter count per module");
  count_cmd->add_option("--preset", preset);
  count_cmd->add_option("--config", config_file);
  count_cmd->allow_extras();

  int instances = 10;
  std::uint64_t seed = 0;
  std::string filter;
  auto* grad_cmd = app.add_subcommand("gradcheck", "autodiff vs central differences");
  grad_cmd->add_option("--instances", instances);
  grad_cmd->add_option("--seed", seed);
  grad_cmd->add_option("--filter", filter);

  std::string synth_mask;
  auto* synth_cmd = app.add_subcommand("synth", "write one synthetic scene");
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--image", image_path)->required();
  synth_cmd->add_option("--mask", synth_mask)->required();
  synth_cmd->add_option("--preset", preset);
  synth_cmd->allow_extras();

  CLI11_PARSE(app, argc, argv);

  try {
    const bool f64 = f64_requested();
    if (*train_cmd) {
      const auto cfg = resolve_config(preset, config_file, train_cmd->remaining());
      const TrainOptions opts{out_path, log_path, resume_path, nullptr};
      return f64 ? run_train<double>(cfg, opts) : run_train<float>(cfg, opts);
    }
    if (*eval_cmd) {
      if (!pred_mask.empty() || !target_mask.empty()) {
        if (pred_mask.empty() || target_mask.empty()) {
          throw ConfigError("--pred-mask and --target-mask go together");
        }
        emit_report(confusion_counts_binary(load_image(pred_mask), load_image(target_mask)), report,
                    metrics_path);
        return 0;
      }
      if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --pred-mask/--target-mask");
      const auto ck = load_checkpoint(checkpoint);
      auto cfg = apply_key_values(config_from_checkpoint(ck), overrides_from(eval_cmd->remaining()));
      cfg.data.validate();
      Split split = Split::Validation;
      if (split_name == "test") split = Split::Test;
      else if (split_name != "validation") throw ConfigError("--split must be validation or test");
      const int n = scenes > 0 ? scenes : cfg.data.val_scenes;
      const auto counts = f64 ? run_eval<double>(ck, cfg, split, n) : run_eval<float>(ck, cfg, split, n);
      emit_report(counts, report, metrics_path);
      return 0;
    }
    if (*predict_cmd || *export_cmd) {
      const auto ck = load_checkpoint(checkpoint);
      auto* cmd = *predict_cmd ? predict_cmd : export_cmd;
      const auto cfg = apply_key_values(config_from_checkpoint(ck), overrides_from(cmd->remaining()));
      const auto inf = f64 ? run_infer<double>(ck, cfg, image_path) : run_infer<float>(ck, cfg, image_path);
      if (*predict_cmd) {
        save_mask(mask_out, threshold_mask(inf.logits, cfg.model.threshold));
        std::cout << "wrote " << mask_out << '\n';
      } else {
        save_image(prefix + "_local.pgm", inf.u_local);
        save_image(prefix + "_global.pgm", inf.u_global);
        std::cout << "wrote " << prefix << "_local.pgm and " << prefix << "_global.pgm\n";
      }
      return 0;
    }
    if (*count_cmd) {
      const auto cfg = resolve_config(preset, config_file, count_cmd->remaining());
      for (const auto& [name, n] : parameter_breakdown(cfg.model)) {
        std::cout << name << '=' << n << '\n';
      }
      return 0;
    }
    if (*grad_cmd) {
      bool ok = true;
      for (const auto& r : run_gradchecks(instances, seed, filter)) {
        std::printf("%-22s instances=%d max_error=%.3e %s\n", r.name.c_str(), r.instances,
                    r.max_error, r.passed ? "PASS" : "FAIL");
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
    if (*synth_cmd) {
      const auto cfg = resolve_config(preset, "", synth_cmd->remaining());
      const auto scene = generate_synthetic_scene(seed, cfg.data.scene_size, options_for(cfg.data));
      save_image(image_path, scene.image);
      save_mask(synth_mask, scene.mask);
      return 0;
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
