// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "uaglnet/checkpoint.hpp"
#include "uaglnet/trainer.hpp"

using namespace uaglnet;
using uaglnet::testing::bitwise_equal;
using uaglnet::testing::fill_store;
using uaglnet::testing::make;

namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.model.widths = {8, 16, 16, 16};
  c.model.heads_stage3 = 2;
  c.model.heads_stage4 = 4;
  c.model.fusion_dim = 4;
  c.model.batch_size = 2;
  c.model.steps_per_epoch = 5;
  c.model.epochs = 2;
  c.model.tile = 32;
  c.model.lr = 2e-3;
  c.data.scene_size = 32;
  c.data.crop_size = 32;
  c.data.val_scenes = 2;
  return c;
}

template <typename T>
bool same_parameters(const UaglNet<T>& a, const UaglNet<T>& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    if (ea[i].first != eb[i].first || !bitwise_equal(ea[i].second, eb[i].second)) return false;
  }
  return true;
}

}  // namespace

TEST(Schedule, CosineWithDoublingRestarts) {
  const CosineWarmRestarts s{1.0, 0.0, 10, 2};
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_NEAR(s.at(5), 0.5, 1e-15);
  EXPECT_NEAR(s.at(9), 0.5 * (1 + std::cos(std::numbers::pi * 0.9)), 1e-15);
  EXPECT_EQ(s.at(10), 1.0);
  EXPECT_NEAR(s.at(20), 0.5, 1e-15);
  EXPECT_EQ(s.at(30), 1.0);
  const CosineWarmRestarts floor{1.0, 0.2, 4, 1};
  EXPECT_NEAR(floor.at(2), 0.6, 1e-15);
  EXPECT_EQ(floor.at(8), 1.0);
}

TEST(AdamW, MatchesHandComputedSteps) {
  ParamStore<double> store;
  Rng rng(1);
  auto w = ParamBuilder<double>(store, rng).constant("w", Shape{2}, 0.0);
  std::copy_n(std::vector<double>{0.5, -2.0}.begin(), 2, w.data_mut().begin());
  const AdamWHyper h{0.9, 0.999, 1e-8, 0.1};
  AdamW<double> opt(store, h);
  const std::vector<double> c{3.0, -0.5};
  double ref[2] = {0.5, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    w.zero_grad();
    // loss = sum(c * w^2) so g = 2 c w.
    backward(sum(mul(make({2}, {c[0], c[1]}), square(w))));
    opt.step(0.01);
    for (int i = 0; i < 2; ++i) {
      const double g = 2 * c[static_cast<std::size_t>(i)] * ref[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mhat = m[i] / (1 - std::pow(0.9, t));
      const double vhat = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * 0.1 * ref[i];
      ref[i] -= 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    }
    EXPECT_NEAR(w[0], ref[0], 1e-15);
    EXPECT_NEAR(w[1], ref[1], 1e-15);
  }
  EXPECT_EQ(opt.steps(), 3);
}

TEST(AdamW, ZeroLearningRateFreezesEverything) {
  auto cfg = tiny_run();
  cfg.model.lr = 0.0;
  Trainer<double> trainer(cfg);
  const UaglNet<double> initial(cfg.model, cfg.model.seed);
  trainer.step();
  trainer.step();
  EXPECT_TRUE(same_parameters(trainer.model(), initial));
}

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  Checkpoint ck;
  const std::vector<float> f{1.5f, -2.0f, 3.25f, 0.0f, 7.0f, -1e-3f};
  const std::vector<double> d{std::numbers::pi, -1e300};
  ck.put_f32("a", {2, 3}, f);
  ck.put_f64("b", {2}, d);
  ck.put_i64("step", 1234567890123LL);
  ck.put_text("config", "lr = 0.1\nwidths = 1,2,3,4\n");
  const auto bytes = encode_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 8), "UAGLNCKP");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.floats<float>("a"), f);
  EXPECT_EQ(back.floats<double>("b"), d);
  EXPECT_EQ(back.get("a").shape, (Shape{2, 3}));
  EXPECT_EQ(back.i64("step"), 1234567890123LL);
  EXPECT_EQ(back.text("config"), "lr = 0.1\nwidths = 1,2,3,4\n");
  EXPECT_EQ(encode_checkpoint(back), bytes);
  EXPECT_THROW(back.get("missing"), ConfigError);
}

TEST(Checkpoint, CorruptInputReportsOffsets) {
  Checkpoint ck;
  ck.put_i64("step", 3);
  const auto bytes = encode_checkpoint(ck);
  auto offset_of = [](const std::string& b) -> std::size_t {
    try {
      decode_checkpoint(b);
    } catch (const ParseError& e) {
      return e.offset();
    }
    ADD_FAILURE() << "no ParseError";
    return 0;
  };
  auto bad_magic = bytes;
  bad_magic[3] = 'X';
  EXPECT_EQ(offset_of(bad_magic), 0u);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_EQ(offset_of(bad_version), 8u);
  EXPECT_GT(offset_of(bytes.substr(0, bytes.size() - 3)), 16u);
  EXPECT_EQ(offset_of(bytes + "junk"), bytes.size());
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto cfg = tiny_run();
  Trainer<double> straight(cfg);
  std::vector<double> losses;
  for (int i = 0; i < 4; ++i) losses.push_back(straight.step().loss);

  Trainer<double> first(cfg);
  first.step();
  first.step();
  const auto bytes = encode_checkpoint(first.checkpoint());
  Trainer<double> resumed(cfg);
  resumed.restore(decode_checkpoint(bytes));
  EXPECT_EQ(resumed.steps_done(), 2);
  EXPECT_EQ(resumed.step().loss, losses[2]);
  EXPECT_EQ(resumed.step().loss, losses[3]);
  EXPECT_TRUE(same_parameters(resumed.model(), straight.model()));
  EXPECT_EQ(encode_checkpoint(resumed.checkpoint()), encode_checkpoint(straight.checkpoint()));
}

TEST(Trainer, SameSeedSameLossCurve) {
  const auto cfg = tiny_run();
  Trainer<float> a(cfg), b(cfg);
  for (int i = 0; i < 3; ++i) {
    const auto ra = a.step(), rb = b.step();
    EXPECT_EQ(ra.loss, rb.loss);
    EXPECT_EQ(ra.seeds, rb.seeds);
  }
}

TEST(Trainer, NanLossAbortsWithBatchSeeds) {
  const auto cfg = tiny_run();
  Trainer<double> trainer(cfg);
  fill_store(trainer.model().params(), std::nan(""));
  try {
    trainer.step();
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_EQ(e.seeds().size(), 2u);
    EXPECT_NE(std::string(e.what()).find(std::to_string(e.seeds()[0])), std::string::npos);
  }
}

TEST(Trainer, LossHalvesWithinTwoHundredSteps) {
  auto cfg = desk_config();
  cfg.model.max_steps = 200;
  Trainer<float> trainer(cfg);
  double head = 0, tail = 0;
  for (int i = 0; i < 200; ++i) {
    const double loss = trainer.step().loss;
    if (i < 10) head += loss;
    if (i >= 190) tail += loss;
  }
  EXPECT_LE(tail, 0.5 * head) << "first-10 mean " << head / 10 << ", last-10 mean " << tail / 10;
}

TEST(Evaluate, UntrainedIouNearForegroundPrior) {
  auto cfg = desk_config();
  cfg.data.val_scenes = 8;
  const UaglNet<float> model(cfg.model, cfg.model.seed);
  const auto scenes = make_scenes(cfg.data, Split::Validation, 8);
  double fg = 0;
  for (const auto& s : scenes) {
    for (float v : s.mask.data()) fg += v;
  }
  fg /= 8.0 * 64 * 64;
  const auto r = evaluate_scenes(model, scenes, cfg.model.tile, 0.5);
  EXPECT_NEAR(r.metrics.iou, fg, 0.1) << "foreground fraction " << fg;
  const auto again = evaluate_scenes(model, scenes, cfg.model.tile, 0.5);
  EXPECT_EQ(again.counts, r.counts);
}

TEST(Evaluate, TiledInferenceCoversOddSizes) {
  const auto cfg = tiny_run();
  const UaglNet<float> model(cfg.model, 0);
  const auto scene = generate_synthetic_scene(4, 64);
  const auto img = crop(scene.image, 0, 0, 50, 40);
  const auto inf = infer_image(model, img, 32, 9);
  EXPECT_EQ(inf.logits.shape(), (Shape{1, 50, 40}));
  EXPECT_EQ(inf.u_local.shape(), (Shape{1, 50, 40}));
  EXPECT_TRUE(bitwise_equal(infer_image(model, img, 32, 9).logits, inf.logits));
}

TEST(LoadParameters, MismatchNamesTheParameter) {
  const auto cfg = tiny_run();
  Trainer<float> trainer(cfg);
  auto other = cfg.model;
  other.fusion_dim = 8;
  UaglNet<float> wrong(other, 0);
  try {
    load_parameters(wrong, trainer.checkpoint());
    FAIL() << "expected a mismatch";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("fusion."), std::string::npos) << e.what();
  }
  UaglNet<float> right(cfg.model, 5);
  load_parameters(right, trainer.checkpoint());
  EXPECT_TRUE(same_parameters(right, trainer.model()));
  const auto restored = config_from_checkpoint(trainer.checkpoint());
  EXPECT_EQ(to_text(restored), to_text(cfg));
}

TEST(Config, ParseOverrideAndRoundTrip) {
  const auto kv = parse_key_values("# comment\nlr = 0.25  # trailing\n\nwidths=8, 16,16 ,16\nuse_uad = false\n");
  const auto cfg = apply_key_values(desk_config(), kv);
  EXPECT_EQ(cfg.model.lr, 0.25);
  EXPECT_EQ(cfg.model.widths[1], 16);
  EXPECT_FALSE(cfg.model.use_uad);
  EXPECT_EQ(cfg.model.fusion_dim, 16);
  const auto back = config_from_key_values(parse_key_values(to_text(cfg)));
  EXPECT_EQ(to_text(back), to_text(cfg));
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) -> std::string {
    try {
      apply_key_values({}, parse_key_values(text));
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message("learning_rate = 1").find("learning_rate"), std::string::npos);
  EXPECT_NE(message("batch_size = two").find("batch_size"), std::string::npos);
  EXPECT_NE(message("widths = 1,2,3").find("widths"), std::string::npos);
  EXPECT_NE(message("use_uad = maybe").find("use_uad"), std::string::npos);
  EXPECT_THROW(parse_key_values("no equals sign"), ConfigError);
  auto cfg = desk_config();
  cfg.model.widths[2] = 60;
  EXPECT_THROW(cfg.model.validate(), ConfigError);
}

TEST(Config, DeskPresetMatchesShippedFile) {
  const auto file = apply_key_values({}, load_key_values(std::string(UAGLNET_SOURCE_DIR) + "/configs/desk.cfg"));
  EXPECT_EQ(to_text(file), to_text(desk_config()));
}
