// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "op_util.hpp"
#include "uaglnet/losses.hpp"

namespace uaglnet {

std::uint64_t scene_seed(std::uint64_t data_seed, Split split, std::uint64_t index) {
  return Rng::derive(data_seed * 4 + static_cast<std::uint64_t>(split), index).next_u64();
}

std::vector<Scene> make_scenes(const DatasetSpec& spec, Split split, int count) {
  spec.validate();
  const auto opts = options_for(spec);
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(generate_synthetic_scene(scene_seed(spec.data_seed, split, static_cast<std::uint64_t>(i)),
                                           spec.scene_size, opts));
  }
  return out;
}

bool f64_requested() {
  const char* v = std::getenv("UAGLNET_F64");
  if (!v) return false;
  const std::string s(v);
  return !(s.empty() || s == "0" || s == "false" || s == "off" || s == "no");
}

template <typename T>
Inference infer_image(const UaglNet<T>& model, const TensorF& image, Index tile,
                         std::uint64_t seed) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw DimensionError("infer_image: expected a [3, H, W] image, got " + shape_str(image.shape()));
  }
  NoGradGuard guard;
  const auto tiles = tile_image(image, tile);
  TileSet logits{tiles.grid, {}}, u_local{tiles.grid, {}}, u_global{tiles.grid, {}};
  for (std::size_t i = 0; i < tiles.tiles.size(); ++i) {
    Rng sampler = Rng::derive(seed, i);
    const auto out = model.forward(cast<T>(tiles.tiles[i]), ForwardContext{}, sampler);
    logits.tiles.push_back(cast<float>(out.logits));
    u_local.tiles.push_back(cast<float>(bilinear_upsample(out.uncertainty.local, 4)));
    u_global.tiles.push_back(cast<float>(bilinear_upsample(out.uncertainty.global, 4)));
  }
  return {reassemble_cropped(logits), reassemble_cropped(u_local), reassemble_cropped(u_global)};
}

template <typename T>
EvalResult evaluate_scenes(const UaglNet<T>& model, const std::vector<Scene>& scenes, Index tile,
                           double threshold, std::uint64_t seed) {
  EvalResult r;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto inf = infer_image(model, scenes[i].image, tile, Rng::derive(seed, i).next_u64());
    r.counts += confusion_counts(inf.logits, scenes[i].mask, threshold);
  }
  r.metrics = metrics_from_counts(r.counts);
  return r;
}

namespace {

CosineWarmRestarts schedule_for(const ModelConfig& m) {
  return {m.lr, m.lr_min, static_cast<std::int64_t>(m.restart_epochs) * m.steps_per_epoch,
          m.restart_mult};
}

AdamWHyper hyper_for(const ModelConfig& m) {
  return {m.beta1, m.beta2, m.adam_eps, m.weight_decay};
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
double value(const Tensor<T>& t) {
  return t.defined() ? static_cast<double>(t.item()) : 0.0;
}

}  // namespace

template <typename T>
Trainer<T>::Trainer(const RunConfig& cfg)
    : cfg_(cfg),
      model_(cfg.model, cfg.model.seed),
      optimizer_(model_.params(), hyper_for(cfg.model)),
      schedule_(schedule_for(cfg.model)),
      rng_(Rng::derive(cfg.model.seed, 1)) {
  cfg_.data.validate();
  validation_ = make_scenes(cfg_.data, Split::Validation, cfg_.data.val_scenes);
}

template <typename T>
StepRecord Trainer<T>::step() {
  const auto& m = cfg_.model;
  const auto& d = cfg_.data;
  const std::int64_t index = steps_done();
  StepRecord rec;
  rec.step = index + 1;
  rec.epoch = index / m.steps_per_epoch;
  rec.lr = schedule_.at(index);

  const auto opts = options_for(d);
  const ForwardContext ctx{true, &rng_};
  std::vector<Tensor<T>> logits, masks, mu_l, sigma_l, mu_g, sigma_g;
  for (int b = 0; b < m.batch_size; ++b) {
    const std::uint64_t pick =
        d.train_scenes > 0 ? static_cast<std::uint64_t>(rng_.uniform_int(0, d.train_scenes - 1))
                           : static_cast<std::uint64_t>(index * m.batch_size + b);
    const auto seed = scene_seed(d.data_seed, Split::Train, pick);
    rec.seeds.push_back(seed);
    const auto scene = augment(generate_synthetic_scene(seed, d.scene_size, opts), rng_, d.crop_size);
    const auto out = model_.forward(cast<T>(scene.image), ctx, rng_);
    logits.push_back(out.logits);
    masks.push_back(cast<T>(scene.mask));
    if (m.use_uad) {
      mu_l.push_back(out.field_local.mu);
      sigma_l.push_back(out.field_local.sigma);
      mu_g.push_back(out.field_global.mu);
      sigma_g.push_back(out.field_global.sigma);
    }
  }
  const auto stack = [](const std::vector<Tensor<T>>& v) {
    return v.size() == 1 ? v.front() : concat(v, 0);
  };
  GaussianField<T> local, global;
  if (m.use_uad) {
    local = {stack(mu_l), stack(sigma_l)};
    global = {stack(mu_g), stack(sigma_g)};
  }
  const auto diverged = [&rec](const char* what) {
    std::ostringstream os;
    os << "non-finite " << what << " at step " << rec.step << "; batch scene seeds:";
    for (auto s : rec.seeds) os << ' ' << s;
    return TrainingDiverged(os.str(), rec.step, rec.seeds);
  };
  // The losses validate their inputs, so a blown-up forward pass must be caught here.
  for (const auto* group : {&logits, &sigma_l, &sigma_g}) {
    for (const auto& t : *group) {
      if (!all_finite(t)) throw diverged("network output");
    }
  }
  const LossWeights w{m.gamma, m.eta, m.lambda1, m.lambda2};
  const auto loss = total_loss(stack(logits), stack(masks), local, global, w, rng_, m.use_uad);

  rec.loss = value(loss.total);
  rec.seg = value(loss.seg.total);
  rec.dice = value(loss.seg.dice);
  rec.bce = value(loss.seg.bce);
  rec.boundary = value(loss.seg.boundary);
  rec.unc_global = value(loss.unc_global.total);
  rec.unc_local = value(loss.unc_local.total);
  if (!std::isfinite(rec.loss)) throw diverged("loss");

  model_.params().zero_grad();
  backward(loss.total);
  optimizer_.step(rec.lr);
  return rec;
}

template <typename T>
EvalResult Trainer<T>::validate() const {
  return evaluate_scenes(model_, validation_, cfg_.model.tile, cfg_.model.threshold,
                         cfg_.model.seed);
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  Checkpoint ck;
  ck.put_text("state/config", to_text(cfg_));
  ck.put_i64("state/step", steps_done());
  ck.put_i64("state/epoch", steps_done() / cfg_.model.steps_per_epoch);
  ck.put_text("state/rng", rng_.state());
  const auto& entries = model_.params().entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& [name, t] = entries[k];
    ck.put_floats<T>("param/" + name, t.shape(), t.data());
    ck.put_floats<T>("adam_m/" + name, t.shape(), optimizer_.first_moment()[k]);
    ck.put_floats<T>("adam_v/" + name, t.shape(), optimizer_.second_moment()[k]);
  }
  return ck;
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& ck) {
  load_parameters(model_, ck);
  std::vector<std::vector<T>> m, v;
  for (const auto& [name, _] : model_.params().entries()) {
    m.push_back(ck.floats<T>("adam_m/" + name));
    v.push_back(ck.floats<T>("adam_v/" + name));
  }
  optimizer_.restore(ck.i64("state/step"), std::move(m), std::move(v));
  rng_.set_state(ck.text("state/rng"));
}

template <typename T>
void load_parameters(UaglNet<T>& model, const Checkpoint& ck) {
  for (const auto& [name, t] : model.params().entries()) {
    const auto* a = ck.find("param/" + name);
    if (!a) throw ConfigError("checkpoint is missing parameter '" + name + "'");
    if (a->shape != t.shape()) {
      throw ConfigError("parameter '" + name + "': checkpoint shape " + shape_str(a->shape) +
                        " does not match model shape " + shape_str(t.shape()));
    }
  }
  for (const auto& [name, t] : model.params().entries()) {
    const auto values = ck.floats<T>("param/" + name);
    Tensor<T> p = t;
    std::copy(values.begin(), values.end(), p.data_mut().begin());
  }
}

RunConfig config_from_checkpoint(const Checkpoint& ck) {
  return config_from_key_values(parse_key_values(ck.text("state/config")));
}

std::string format_step_record(const StepRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "step=%lld epoch=%lld lr=%.6g loss=%.6g seg=%.6g dice=%.6g bce=%.6g "
                "boundary=%.6g unc_global=%.6g unc_local=%.6g",
                static_cast<long long>(r.step), static_cast<long long>(r.epoch), r.lr, r.loss,
                r.seg, r.dice, r.bce, r.boundary, r.unc_global, r.unc_local);
  return buf;
}

template <typename T>
TrainSummary run_training(Trainer<T>& trainer, const TrainOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  if (!options.resume_path.empty()) trainer.restore(load_checkpoint(options.resume_path));
  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, std::ios::app);
    if (!log) throw std::runtime_error("cannot open log " + options.log_path);
  }
  const auto& m = trainer.config().model;
  const std::int64_t total = m.total_steps();
  TrainSummary summary;
  bool evaluated_last = false;
  while (trainer.steps_done() < total) {
    StepRecord rec;
    try {
      rec = trainer.step();
    } catch (const TrainingDiverged& e) {
      if (log) {
        log << "event=diverged step=" << e.step() << " seeds=";
        for (std::size_t i = 0; i < e.seeds().size(); ++i) log << (i ? "," : "") << e.seeds()[i];
        log << '\n';
      }
      throw;
    }
    if (summary.steps == 0) summary.first_loss = rec.loss;
    summary.last_loss = rec.loss;
    ++summary.steps;
    std::string line = format_step_record(rec);
    evaluated_last = false;
    if (rec.step % m.val_every == 0 || rec.step == total) {
      summary.final_eval = trainer.validate();
      summary.val_iou.emplace_back(rec.step, summary.final_eval.metrics.iou);
      char buf[96];
      std::snprintf(buf, sizeof buf, " val_iou=%.4f val_f1=%.4f", summary.final_eval.metrics.iou,
                    summary.final_eval.metrics.f1);
      line += buf;
      evaluated_last = true;
      if (options.progress) *options.progress << line << std::endl;
    }
    if (log) log << line << '\n' << std::flush;
  }
  if (!evaluated_last) summary.final_eval = trainer.validate();
  if (!options.checkpoint_path.empty()) save_checkpoint(options.checkpoint_path, trainer.checkpoint());
  summary.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

template <typename T>
TrainSummary train(const RunConfig& cfg, const TrainOptions& options) {
  Trainer<T> trainer(cfg);
  return run_training(trainer, options);
}

#define UAGLNET_INST(T)                                                                        \
  template Inference infer_image(const UaglNet<T>&, const TensorF&, Index, std::uint64_t);  \
  template EvalResult evaluate_scenes(const UaglNet<T>&, const std::vector<Scene>&, Index,     \
                                      double, std::uint64_t);                                  \
  template class Trainer<T>;                                                                   \
  template void load_parameters(UaglNet<T>&, const Checkpoint&);                               \
  template TrainSummary run_training(Trainer<T>&, const TrainOptions&);                        \
  template TrainSummary train<T>(const RunConfig&, const TrainOptions&);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
