// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// The desk-scale comparison report goes to argv[1] (default
// acceptance_report.txt).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "param_oracle.hpp"
#include "uaglnet/checkpoint.hpp"
#include "uaglnet/gradcheck.hpp"
#include "uaglnet/losses.hpp"
#include "uaglnet/trainer.hpp"

using namespace uaglnet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Runs a criterion body, turning an escaped exception into a FAIL line.
void criterion(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(id, ok, what, detail);
  } catch (const std::exception& e) {
    report(id, false, what, std::string("exception: ") + e.what());
  }
}

std::pair<bool, std::string> gradient_suite() {
  const auto t0 = Clock::now();
  const auto results = run_gradchecks(10, 2024);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string worst_name, failed;
  bool ok = !results.empty();
  for (const auto& r : results) {
    if (r.max_error > worst) {
      worst = r.max_error;
      worst_name = r.name;
    }
    if (!r.passed || r.instances < 10 || !(r.max_error < 1e-4)) {
      ok = false;
      failed += " " + r.name;
    }
  }
  std::ostringstream d;
  d << results.size() << " cases x 10 instances, worst " << worst_name << " " << worst << ", "
    << fmt("%.1f", secs) << " s";
  if (!failed.empty()) d << ", failed:" << failed;
  return {ok && secs < 120, d.str()};
}

std::pair<bool, std::string> shape_suite() {
  const ModelConfig cfg;
  ParamStore<float> store;
  Rng rng(7);
  const auto encoder = EncoderParams<float>::make(ParamBuilder<float>(store, rng), cfg);
  const auto fusion = FusionParams<float>::make(ParamBuilder<float>(store, rng), cfg);
  NoGradGuard guard;
  const auto image = rand_uniform<float>({3, 512, 512}, rng, 0, 1);
  const auto t0 = Clock::now();
  const auto pyr = encoder_forward(image, encoder, {});
  const double enc_secs = seconds_since(t0);
  const Shape want[4] = {{64, 128, 128}, {128, 64, 64}, {256, 32, 32}, {512, 16, 16}};
  bool ok = true;
  std::ostringstream d;
  for (int l = 0; l < 4; ++l) {
    const auto& s = pyr.levels[static_cast<std::size_t>(l)].shape();
    ok = ok && s == want[l];
    d << shape_str(s) << ' ';
  }
  const auto fused = fuse(pyr, fusion);
  ok = ok && fused.local.shape() == fused.global.shape();
  const double secs = seconds_since(t0);
  d << "F_L " << shape_str(fused.local.shape()) << " F_G " << shape_str(fused.global.shape())
    << ", encoder " << fmt("%.1f", enc_secs) << " s, with fusion " << fmt("%.1f", secs) << " s";
  return {ok && secs < 60, d.str()};
}

std::pair<bool, std::string> parameter_oracle() {
  bool ok = true;
  std::ostringstream d;
  for (const auto& cfg : {ModelConfig{}, desk_config().model}) {
    const auto s = testing::stage_counts(cfg);
    const Index oracle = std::accumulate(s.begin(), s.end(), Index{0});
    const Index counted = count_parameters(cfg, "encoder.");
    ok = ok && oracle == counted;
    d << "widths " << cfg.widths[0] << "..: oracle " << oracle << " implementation " << counted << "; ";
  }
  d << "full model " << count_parameters(ModelConfig{});
  return {ok, d.str()};
}

std::pair<bool, std::string> uad_reduction() {
  Rng rng(11);
  bool ok = true;
  for (int trial = 0; trial < 5; ++trial) {
    const auto fl = randn<double>({16, 12, 12}, rng, 3.0);
    const auto fg = randn<double>({16, 12, 12}, rng, 3.0);
    const auto zero = Tensor<double>::zeros({1, 12, 12});
    const auto one = Tensor<double>::ones({1, 12, 12});
    const auto sum_out = aggregate(fl, fg, zero, zero);
    const auto ref = add(fl, fg);
    ok = ok && std::equal(sum_out.data().begin(), sum_out.data().end(), ref.data().begin());
    const auto none = aggregate(fl, fg, one, one);
    for (double v : none.data()) ok = ok && v == 0.0;
  }
  return {ok, "U=0 gives F_L+F_G bitwise, U=1 gives exact zeros, 5 random 16x12x12 pairs"};
}

std::pair<bool, std::string> reparameterization_stats() {
  Rng rng(12);
  const Index n = 64;
  const auto mu = randn<double>({1, 8, 8}, rng, 2.0);
  const auto sigma = rand_uniform<double>({1, 8, 8}, rng, 0.1, 3.0);
  Rng draws(13);
  const auto samples = reparameterized_samples(GaussianField<double>{mu, sigma}, 10000, draws);
  double worst_mean = 0, worst_var = 0;
  bool ok = true;
  for (Index i = 0; i < n; ++i) {
    double m = 0;
    for (const auto& s : samples) m += s[i];
    m /= 10000.0;
    double v = 0;
    for (const auto& s : samples) v += (s[i] - m) * (s[i] - m);
    v /= 9999.0;
    const double mean_z = std::abs(m - mu[i]) / (sigma[i] / 100.0);
    const double var_rel = std::abs(v - sigma[i] * sigma[i]) / (sigma[i] * sigma[i]);
    worst_mean = std::max(worst_mean, mean_z);
    worst_var = std::max(worst_var, var_rel);
    ok = ok && mean_z < 4.0 && var_rel < 0.1;
  }
  return {ok, "64 pixels, worst mean offset " + fmt("%.2f", worst_mean) + " sigma/100, worst variance error " +
                  fmt("%.3f", worst_var)};
}

std::pair<bool, std::string> loss_spot_checks() {
  auto kl = [](double m, double s) {
    return kl_standard_normal(GaussianField<double>{Tensor<double>::full({1, 1, 1}, m),
                                                    Tensor<double>::full({1, 1, 1}, s)})
        .item();
  };
  const double k0 = kl(0, 1), k1 = kl(1, 1), k2 = kl(0, 2);
  const double b = bce_loss(Tensor<double>::zeros({1, 4, 4}), Tensor<double>::ones({1, 4, 4})).item();
  const double dice = dice_loss(Tensor<double>::zeros({1, 2, 2}),
                                Tensor<double>(Shape{1, 2, 2}, std::vector<double>{1, 1, 0, 0}))
                          .item();
  const bool ok = std::abs(k0) < 1e-6 && std::abs(k1 - 0.5) < 1e-6 && std::abs(k2 - 0.8069) < 1e-4 &&
                  std::abs(k2 - 0.5 * (3 - std::log(4.0))) < 1e-6 && std::abs(b - std::log(2.0)) < 1e-9 &&
                  std::abs(dice - 0.4) < 1e-9;
  std::ostringstream d;
  d.precision(10);
  d << "KL " << k0 << ", " << k1 << ", " << k2 << "; BCE " << b << "; dice " << dice;
  return {ok, d.str()};
}

std::pair<bool, std::string> metrics_oracle() {
  Rng rng(14);
  double worst = 0, worst_identity = 0;
  bool counts_ok = true;
  for (int pair = 0; pair < 1000; ++pair) {
    TensorD pred({1, 16, 16}, 0.0), truth({1, 16, 16}, 0.0);
    const double p_density = rng.uniform(0.0, 1.0), t_density = rng.uniform(0.0, 1.0);
    auto pv = pred.data_mut();
    auto tv = truth.data_mut();
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < 256; ++i) {
      pv[i] = rng.uniform(0.0, 1.0) < p_density ? 1.0 : 0.0;
      tv[i] = rng.uniform(0.0, 1.0) < t_density ? 1.0 : 0.0;
      if (pv[i] == 1 && tv[i] == 1) tp += 1;
      if (pv[i] == 1 && tv[i] == 0) fp += 1;
      if (pv[i] == 0 && tv[i] == 1) fn += 1;
      if (pv[i] == 0 && tv[i] == 0) tn += 1;
    }
    const auto c = confusion_counts_binary(pred, truth);
    counts_ok = counts_ok && c.tp == tp && c.fp == fp && c.fn == fn && c.tn == tn;
    const auto m = metrics_from_counts(c);
    const double ref_p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double ref_r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double ref_f1 = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    const double ref_iou = tp + fp + fn > 0 ? tp / (tp + fp + fn) : 0.0;
    worst = std::max({worst, std::abs(m.precision - ref_p), std::abs(m.recall - ref_r), std::abs(m.f1 - ref_f1),
                      std::abs(m.iou - ref_iou)});
    worst_identity = std::max(worst_identity, std::abs(m.f1 - 2 * m.iou / (1 + m.iou)));
  }
  const bool ok = counts_ok && worst <= 1e-12 && worst_identity <= 1e-12;
  std::ostringstream d;
  d << "1000 pairs of 16x16, counts " << (counts_ok ? "exact" : "MISMATCH") << ", worst metric error " << worst
    << ", worst F1/IoU identity error " << worst_identity;
  return {ok, d.str()};
}

struct DeskRun {
  Checkpoint checkpoint;
  TrainSummary summary;
  EvalResult test;
};

const int kTestScenes = 64;

template <typename T>
DeskRun desk_run(bool use_uad) {
  auto cfg = desk_config();
  cfg.model.use_uad = use_uad;
  Trainer<T> trainer(cfg);
  DeskRun r;
  r.summary = run_training(trainer, {});
  r.checkpoint = trainer.checkpoint();
  r.test = evaluate_scenes(trainer.model(), make_scenes(cfg.data, Split::Test, kTestScenes), cfg.model.tile,
                           cfg.model.threshold);
  return r;
}

template <typename T>
EvalResult evaluate_checkpoint(const Checkpoint& ck, int difficulty) {
  auto cfg = config_from_checkpoint(ck);
  UaglNet<T> model(cfg.model, cfg.model.seed);
  load_parameters(model, ck);
  cfg.data.difficulty = difficulty;
  return evaluate_scenes(model, make_scenes(cfg.data, Split::Test, kTestScenes), cfg.model.tile,
                         cfg.model.threshold);
}

std::string metrics_header(const std::string& first) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-22s %8s %8s %8s %8s\n", first.c_str(), "prec", "recall", "f1", "iou");
  return buf;
}

std::string metrics_row(const std::string& name, const Metrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-22s %8.4f %8.4f %8.4f %8.4f\n", name.c_str(), m.precision, m.recall, m.f1,
                m.iou);
  return buf;
}

template <typename T>
int run(const std::string& report_path) {
  criterion(1, "gradient suite at 64-bit", gradient_suite);
  criterion(2, "encoder and fusion shapes at 512x512", shape_suite);
  criterion(3, "encoder parameter count equals the analytic oracle", parameter_oracle);
  criterion(4, "aggregation reduces exactly at U=0 and U=1", uad_reduction);
  criterion(5, "reparameterization statistics over 10000 samples", reparameterization_stats);
  criterion(6, "closed-form loss values", loss_spot_checks);
  criterion(7, "metrics agree with brute-force enumeration", metrics_oracle);

  DeskRun on, off;
  bool trained = false;
  criterion(8, "desk-scale convergence, UAD on and off", [&] {
    on = desk_run<T>(true);
    off = desk_run<T>(false);
    trained = true;
    const bool ok = on.test.metrics.iou >= 0.85 && off.test.metrics.iou >= 0.85 && on.summary.seconds < 900 &&
                    off.summary.seconds < 900;
    std::ostringstream d;
    d << "test IoU on " << fmt("%.4f", on.test.metrics.iou) << " in " << fmt("%.0f", on.summary.seconds)
      << " s, off " << fmt("%.4f", off.test.metrics.iou) << " in " << fmt("%.0f", off.summary.seconds)
      << " s, " << on.summary.steps << " steps each";
    return std::pair{ok, d.str()};
  });

  std::ostringstream table;
  criterion(9, "robustness harness runs noise and x16 degradation", [&] {
    if (!trained) return std::pair{false, std::string("no trained models")};
    table << metrics_header("condition, UAD");
    const char* names[] = {"clean", "noise std 5", "resolution /16", "noise + resolution"};
    std::ostringstream d;
    bool ok = true;
    for (int difficulty = 0; difficulty < 4; ++difficulty) {
      const auto a = evaluate_checkpoint<T>(on.checkpoint, difficulty);
      const auto b = evaluate_checkpoint<T>(off.checkpoint, difficulty);
      table << metrics_row(std::string(names[difficulty]) + ", on", a.metrics);
      table << metrics_row(std::string(names[difficulty]) + ", off", b.metrics);
      ok = ok && a.counts.total() == b.counts.total() && a.counts.total() == kTestScenes * 64 * 64;
      if (difficulty > 0) {
        d << names[difficulty] << " on " << fmt("%.4f", a.metrics.iou) << " off " << fmt("%.4f", b.metrics.iou)
          << "; ";
      }
    }
    return std::pair{ok, d.str() + "table in " + report_path};
  });

  criterion(10, "identical seeds give byte-identical checkpoints", [&] {
    if (!trained) return std::pair{false, std::string("no trained models")};
    const auto again = desk_run<T>(true);
    const auto a = encode_checkpoint(on.checkpoint), b = encode_checkpoint(again.checkpoint);
    return std::pair{a == b, std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
  });

  std::ofstream out(report_path);
  out << "Desk-scale comparison, " << kTestScenes << " held-out 64x64 test scenes\n\n";
  out << metrics_header("model");
  if (trained) {
    out << metrics_row("UAD on", on.test.metrics) << metrics_row("UAD off (U = 0)", off.test.metrics);
    out << "\nvalidation IoU during training (step: on / off)\n";
    for (std::size_t i = 0; i < on.summary.val_iou.size() && i < off.summary.val_iou.size(); ++i) {
      out << "  " << on.summary.val_iou[i].first << ": " << fmt("%.4f", on.summary.val_iou[i].second) << " / "
          << fmt("%.4f", off.summary.val_iou[i].second) << '\n';
    }
    out << "\nRobustness (same checkpoints, degraded test scenes)\n" << table.str();
  }
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string report_path = argc > 1 ? argv[1] : "acceptance_report.txt";
  return f64_requested() ? run<double>(report_path) : run<float>(report_path);
}
