// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "uaglnet/decoder.hpp"
#include "uaglnet/model.hpp"

using namespace uaglnet;
using uaglnet::testing::bitwise_equal;
using uaglnet::testing::fill_store;
using uaglnet::testing::make;
using uaglnet::testing::max_abs_diff;
using uaglnet::testing::values;

namespace {

struct Heads {
  ParamStore<double> store;
  Rng rng{21};
  GaussianHeads<double> heads = GaussianHeads<double>::make(ParamBuilder<double>(store, rng), 4);
};

GaussianField<double> field(Tensor<double> mu, Tensor<double> sigma) { return {std::move(mu), std::move(sigma)}; }

}  // namespace

TEST(Distribution, ZeroHeadsGiveFlatField) {
  Heads h;
  fill_store(h.store, 0.0);
  const auto g = predict_distribution(Tensor<double>::zeros({4, 3, 3}), h.heads);
  const double expected = std::log(2.0) + 1e-4;
  for (double v : values(g.mu)) EXPECT_EQ(v, 0.0);
  for (double v : values(g.sigma)) EXPECT_NEAR(v, expected, 1e-15);
}

TEST(Distribution, SigmaStaysPositive) {
  Heads h;
  Rng rng(1);
  const auto g = predict_distribution(randn<double>({4, 5, 5}, rng, 1e3), h.heads);
  EXPECT_EQ(g.mu.shape(), (Shape{1, 5, 5}));
  for (double v : values(g.sigma)) EXPECT_GE(v, 1e-4);
}

TEST(Distribution, ZeroSigmaModeCollapsesSamples) {
  Heads h;
  Rng rng(2), draws(3);
  const auto g = predict_distribution(randn<double>({4, 3, 3}, rng), h.heads, SigmaMode{1e-4, true});
  for (double v : values(g.sigma)) EXPECT_EQ(v, 0.0);
  const auto samples = reparameterized_samples(g, 8, draws);
  for (const auto& s : samples) EXPECT_TRUE(bitwise_equal(s, g.mu));
  for (double v : values(uncertainty_map(samples))) EXPECT_EQ(v, 0.0);
}

TEST(Sampling, NeedsTwoSamples) {
  Rng rng(4);
  const auto g = field(Tensor<double>::zeros({1, 2, 2}), Tensor<double>::ones({1, 2, 2}));
  EXPECT_THROW(reparameterized_samples(g, 1, rng), ValueError);
  EXPECT_THROW(sample_variance<double>({g.mu}), ValueError);
}

TEST(Sampling, SameSeedSameSamples) {
  const auto g = field(make({1, 1, 3}, {0, 1, -2}), make({1, 1, 3}, {0.5, 1, 2}));
  Rng a(5), b(5);
  const auto sa = reparameterized_samples(g, 8, a);
  const auto sb = reparameterized_samples(g, 8, b);
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_TRUE(bitwise_equal(sa[i], sb[i]));
  EXPECT_TRUE(bitwise_equal(uncertainty_map(sa), uncertainty_map(sb)));
}

TEST(Sampling, MomentsMatchTheField) {
  const auto mu = make({1, 1, 3}, {0.0, 1.5, -2.0});
  const auto sigma = make({1, 1, 3}, {1.0, 0.3, 2.5});
  Rng rng(6);
  const auto samples = reparameterized_samples(field(mu, sigma), 10000, rng);
  for (Index i = 0; i < 3; ++i) {
    double m = 0;
    for (const auto& s : samples) m += s[i];
    m /= 10000.0;
    double v = 0;
    for (const auto& s : samples) v += (s[i] - m) * (s[i] - m);
    v /= 9999.0;
    EXPECT_LT(std::abs(m - mu[i]), 4 * sigma[i] / 100.0);
    EXPECT_LT(std::abs(v - sigma[i] * sigma[i]), 0.1 * sigma[i] * sigma[i]);
  }
}

TEST(Sampling, ReparameterizationDerivativesAreExact) {
  auto mu = make({1, 1, 3}, {0.2, -1, 3});
  auto sigma = make({1, 1, 3}, {0.5, 2, 1});
  const auto eps = make({1, 1, 3}, {-1.25, 0.5, 2.0});
  mu.requires_grad_();
  sigma.requires_grad_();
  backward(sum(reparameterize(field(mu, sigma), eps)));
  for (Index i = 0; i < 3; ++i) {
    EXPECT_EQ(mu.grad()[i], 1.0);
    EXPECT_EQ(sigma.grad()[i], eps[i]);
  }
}

TEST(Variance, UnbiasedAgainstTwoPass) {
  Rng rng(7);
  std::vector<Tensor<double>> samples;
  for (int t = 0; t < 5; ++t) samples.push_back(randn<double>({1, 2, 3}, rng));
  const auto v = sample_variance(samples);
  for (Index i = 0; i < 6; ++i) {
    double m = 0, s = 0;
    for (const auto& x : samples) m += x[i];
    m /= 5;
    for (const auto& x : samples) s += (x[i] - m) * (x[i] - m);
    EXPECT_NEAR(v[i], s / 4, 1e-14);
  }
}

TEST(Uncertainty, IdenticalSamplesGiveZero) {
  const auto x = make({1, 2, 2}, {0.3, -1, 4, 2});
  for (double v : values(uncertainty_map<double>({x, x, x}))) EXPECT_EQ(v, 0.0);
}

TEST(Uncertainty, SinglePeakNormalizesToOne) {
  // Two samples: unbiased variance is d^2 / 2, so d = 2*sqrt(2) gives 4 and d = sqrt(2) gives 1.
  const double r = std::sqrt(2.0);
  const auto a = make({1, 2, 2}, {0, 0, 0, 0});
  const auto b = make({1, 2, 2}, {2 * r, r, r, r});
  const auto u = uncertainty_map<double>({a, b});
  EXPECT_EQ(u[0], 1.0);
  for (Index i = 1; i < 4; ++i) EXPECT_EQ(u[i], 0.0);
}

TEST(Uncertainty, BoundedAndShiftInvariant) {
  Rng rng(8);
  std::vector<Tensor<double>> samples, shifted;
  for (int t = 0; t < 8; ++t) {
    samples.push_back(randn<double>({1, 6, 6}, rng));
    shifted.push_back(add_scalar(samples.back(), 3.25));
  }
  const auto u = uncertainty_map(samples);
  for (double v : values(u)) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LT(max_abs_diff(u, uncertainty_map(shifted)), 1e-12);
}

TEST(Uncertainty, MinMaxOfFlatMapIsZero) {
  for (double v : values(minmax_normalize(Tensor<double>::full({1, 3, 3}, 7.0)))) EXPECT_EQ(v, 0.0);
}

TEST(Aggregate, ReducesExactly) {
  Rng rng(9);
  const auto fl = randn<double>({4, 3, 3}, rng);
  const auto fg = randn<double>({4, 3, 3}, rng);
  const auto zero = Tensor<double>::zeros({1, 3, 3});
  const auto one = Tensor<double>::ones({1, 3, 3});
  EXPECT_TRUE(bitwise_equal(aggregate(fl, fg, zero, zero), add(fg, fl)));
  for (double v : values(aggregate(fl, fg, one, one))) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Aggregate, ScalarArithmetic) {
  const auto out = aggregate(make({1, 1, 1}, {2}), make({1, 1, 1}, {4}), make({1, 1, 1}, {0.5}),
                             make({1, 1, 1}, {0.25}));
  EXPECT_EQ(out.item(), 4.0);
}

TEST(Aggregate, ShapeMismatchThrows) {
  const auto f = Tensor<double>::zeros({2, 3, 3});
  EXPECT_THROW(aggregate(f, Tensor<double>::zeros({2, 3, 4}), Tensor<double>::zeros({1, 3, 3}),
                         Tensor<double>::zeros({1, 3, 3})),
               DimensionError);
  EXPECT_THROW(aggregate(f, f, Tensor<double>::zeros({2, 3, 3}), Tensor<double>::zeros({1, 3, 3})),
               DimensionError);
}

TEST(SegHead, ZeroWeightsAndShape) {
  ParamStore<double> store;
  Rng rng(10);
  const auto head = Conv2dLayer<double>::make(ParamBuilder<double>(store, rng), 4, 1, 1, 1, 0);
  const auto logits = segmentation_head(randn<double>({4, 8, 6}, rng), head);
  EXPECT_EQ(logits.shape(), (Shape{1, 32, 24}));
  fill_store(store, 0.0);
  for (double v : values(sigmoid(segmentation_head(randn<double>({4, 8, 6}, rng), head)))) EXPECT_EQ(v, 0.5);
}

TEST(Model, FullConfigLogitShape) {
  ModelConfig cfg;
  cfg.widths = {16, 32, 64, 128};
  cfg.fusion_dim = 16;
  const UaglNet<float> model(cfg, 0);
  Rng rng(11), draws(12);
  NoGradGuard guard;
  const auto out = model.forward(rand_uniform<float>({3, 512, 512}, rng, 0, 1), {}, draws);
  EXPECT_EQ(out.logits.shape(), (Shape{1, 512, 512}));
  EXPECT_EQ(out.uncertainty.local.shape(), (Shape{1, 128, 128}));
}

TEST(Model, UadOffUsesZeroUncertainty) {
  auto cfg = desk_config().model;
  cfg.use_uad = false;
  const UaglNet<double> model(cfg, 0);
  Rng rng(13), draws(14);
  const auto out = model.forward(rand_uniform<double>({3, 64, 64}, rng, 0, 1), {}, draws);
  for (double v : values(out.uncertainty.local)) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(bitwise_equal(out.fused_out, add(out.fused.global, out.fused.local)));
}

TEST(Model, UncertaintyDetachedByDefault) {
  auto cfg = desk_config().model;
  const UaglNet<double> model(cfg, 0);
  Rng rng(15), draws(16);
  const auto out = model.forward(rand_uniform<double>({3, 64, 64}, rng, 0, 1), {}, draws);
  EXPECT_FALSE(out.uncertainty.local.requires_grad());
  cfg.uncertainty_grad = true;
  const UaglNet<double> coupled(cfg, 0);
  Rng rng2(15), draws2(16);
  EXPECT_TRUE(coupled.forward(rand_uniform<double>({3, 64, 64}, rng2, 0, 1), {}, draws2)
                  .uncertainty.local.requires_grad());
}
