// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration. Every field of ModelConfig and DatasetSpec has
// a key of the same name; files hold one `key = value` per line, `#` starts a
// comment, and command-line `--key=value` flags override file entries.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uaglnet/tensor.hpp"

namespace uaglnet {

using KeyValues = std::map<std::string, std::string>;

struct ModelConfig {
  // Architecture
  std::array<Index, 4> widths{64, 128, 256, 512};
  std::array<int, 4> depths{2, 2, 4, 1};
  int mkfm_groups = 4;
  int heads_stage3 = 8;
  int heads_stage4 = 16;
  std::array<int, 4> ffn_ratios{4, 4, 4, 2};
  Index fusion_dim = 64;
  std::vector<int> local_levels{1, 2, 3};
  std::vector<int> global_levels{3, 4};
  double norm_eps = 1e-6;

  // Uncertainty-aggregated decoder
  bool use_uad = true;
  int samples = 8;
  double sigma_floor = 1e-4;
  bool uncertainty_grad = false;
  bool zero_sigma = false;

  // Objectives
  double gamma = 1.0;
  double eta = 0.2;
  double lambda1 = 0.5;
  double lambda2 = 0.5;

  // Optimization
  double drop_path = 0.2;
  double lr = 5e-4;
  double lr_min = 0.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int restart_epochs = 10;
  int restart_mult = 2;
  int epochs = 10;
  int steps_per_epoch = 50;
  int max_steps = 0;
  int batch_size = 4;
  int val_every = 50;
  std::uint64_t seed = 0;

  // Inference
  Index tile = 512;
  double threshold = 0.5;

  void validate() const;
  /// Kernel size of the largest depthwise group, 2n + 1.
  int largest_kernel() const { return 2 * mkfm_groups + 1; }
  int total_steps() const { return max_steps > 0 ? max_steps : epochs * steps_per_epoch; }
};

/// Synthetic data source for training and evaluation.
struct DatasetSpec {
  Index scene_size = 64;
  Index crop_size = 64;
  int train_scenes = 0;  // 0: a fresh scene for every sample
  int val_scenes = 16;
  int difficulty = 0;
  double noise_std = -1.0;  // on the 0..255 scale; negative derives from difficulty
  int degrade = 1;
  std::uint64_t data_seed = 1;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  DatasetSpec data;
};

KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::string& path);

/// Applies entries on top of `base`. Unknown keys raise ConfigError.
RunConfig apply_key_values(RunConfig base, const KeyValues& kv);
inline RunConfig config_from_key_values(const KeyValues& kv) { return apply_key_values({}, kv); }
KeyValues to_key_values(const RunConfig& config);
std::string to_text(const RunConfig& config);

/// Reduced desk-scale configuration: widths 16/32/64/128, fusion width 16,
/// 64x64 scenes, batch 8, lr 4e-3, drop path 0.1, boundary weight 0.05.
RunConfig desk_config();

}  // namespace uaglnet
