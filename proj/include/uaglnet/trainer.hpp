// SPDX-License-Identifier: Apache-2.0
//
// Training loop, tiled inference, evaluation and checkpoint plumbing.
//
// One step draws batch_size synthetic scenes, augments them, runs each item
// through the network, stacks logits, targets and Gaussian fields along axis 0,
// and takes one AdamW step on the total loss. All randomness after parameter
// initialization comes from the trainer's rng, whose state is checkpointed.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "uaglnet/checkpoint.hpp"
#include "uaglnet/config.hpp"
#include "uaglnet/data.hpp"
#include "uaglnet/metrics.hpp"
#include "uaglnet/model.hpp"
#include "uaglnet/optim.hpp"

namespace uaglnet {

/// Raised when the loss turns non-finite; the message lists the step and the
/// scene seeds of the offending batch.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::int64_t step, std::vector<std::uint64_t> seeds)
      : std::runtime_error(what), step_(step), seeds_(std::move(seeds)) {}
  std::int64_t step() const { return step_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }

 private:
  std::int64_t step_;
  std::vector<std::uint64_t> seeds_;
};

enum class Split : std::uint64_t { Train = 1, Validation = 2, Test = 3 };

/// Seed of scene `index` in a split, derived from the dataset seed.
std::uint64_t scene_seed(std::uint64_t data_seed, Split split, std::uint64_t index);
/// The held-out scenes of a split at full scene size.
std::vector<Scene> make_scenes(const DatasetSpec& spec, Split split, int count);

/// True when UAGLNET_F64 asks for 64-bit arithmetic.
bool f64_requested();

struct StepRecord {
  std::int64_t step = 0;  // 1-based index of the step just taken
  std::int64_t epoch = 0;
  double lr = 0;
  double loss = 0, seg = 0, dice = 0, bce = 0, boundary = 0, unc_global = 0, unc_local = 0;
  std::vector<std::uint64_t> seeds;
};

struct Inference {
  TensorF logits;      // [1, H, W]
  TensorF u_local;     // [1, H, W], bilinear x4 of U_L
  TensorF u_global;
};

/// Tiles the image, runs the model on each tile without gradients, and
/// reassembles to the source size. Tile i samples from a stream derived from
/// (seed, i), so results do not depend on call order.
template <typename T>
Inference infer_image(const UaglNet<T>& model, const TensorF& image, Index tile,
                         std::uint64_t seed = 0);

struct EvalResult {
  ConfusionCounts counts;
  Metrics metrics;
};

template <typename T>
EvalResult evaluate_scenes(const UaglNet<T>& model, const std::vector<Scene>& scenes, Index tile,
                           double threshold, std::uint64_t seed = 0);

template <typename T>
class Trainer {
 public:
  explicit Trainer(const RunConfig& cfg);

  StepRecord step();
  EvalResult validate() const;

  std::int64_t steps_done() const { return optimizer_.steps(); }
  const RunConfig& config() const { return cfg_; }
  UaglNet<T>& model() { return model_; }
  const UaglNet<T>& model() const { return model_; }
  Rng& rng() { return rng_; }

  /// Parameters, Adam moments, step, epoch, rng state and config text.
  Checkpoint checkpoint() const;
  /// Restores a checkpoint written by a trainer with the same architecture.
  void restore(const Checkpoint& ck);

 private:
  RunConfig cfg_;
  UaglNet<T> model_;
  AdamW<T> optimizer_;
  CosineWarmRestarts schedule_;
  Rng rng_;
  std::vector<Scene> validation_;
};

/// Parameter values from a checkpoint into `model`. Names and shapes must
/// match; the first mismatch is reported by parameter name.
template <typename T>
void load_parameters(UaglNet<T>& model, const Checkpoint& ck);
RunConfig config_from_checkpoint(const Checkpoint& ck);

struct TrainOptions {
  std::string checkpoint_path;  // written after the last step when non-empty
  std::string log_path;         // appended to, one key=value record per step
  std::string resume_path;
  std::ostream* progress = nullptr;
};

struct TrainSummary {
  std::int64_t steps = 0;
  double first_loss = 0, last_loss = 0;
  std::vector<std::pair<std::int64_t, double>> val_iou;
  EvalResult final_eval;
  double seconds = 0;
};

/// Runs `trainer` up to the configured step count, validating every
/// val_every steps and at the end.
template <typename T>
TrainSummary run_training(Trainer<T>& trainer, const TrainOptions& options);
template <typename T>
TrainSummary train(const RunConfig& cfg, const TrainOptions& options);

/// Formats a StepRecord as `key=value` pairs separated by spaces.
std::string format_step_record(const StepRecord& r);

}  // namespace uaglnet
