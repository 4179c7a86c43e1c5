// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "uaglnet/gradcheck.hpp"
#include "uaglnet/losses.hpp"

using namespace uaglnet;
using uaglnet::testing::make;
using uaglnet::testing::random_mask;
using uaglnet::testing::values;

namespace {

GaussianField<double> field(Tensor<double> mu, Tensor<double> sigma) { return {std::move(mu), std::move(sigma)}; }

double softplus_ref(double x) { return std::log1p(std::exp(x)); }

}  // namespace

TEST(Bce, LogitZeroCostsLnTwo) {
  EXPECT_NEAR(bce_loss(Tensor<double>::zeros({1, 3, 3}), make({1, 3, 3}, {0, 1, 1, 0, 1, 0, 0, 0, 1})).item(),
              std::log(2.0), 1e-15);
}

TEST(Bce, MixedTwoPixelCase) {
  const double loss = bce_loss(make({1, 1, 2}, {1, -1}), make({1, 1, 2}, {1, 1})).item();
  EXPECT_NEAR(loss, 0.5 * (softplus_ref(-1) + softplus_ref(1)), 1e-14);
  EXPECT_NEAR(loss, 0.5 * (0.3133 + 1.3133), 1e-4);
}

TEST(Bce, ConfidentCorrectApproachesZero) {
  EXPECT_LT(bce_loss(make({1, 1, 2}, {40, -40}), make({1, 1, 2}, {1, 0})).item(), 1e-15);
}

TEST(Bce, NonBinaryTargetThrows) {
  EXPECT_THROW(bce_loss(Tensor<double>::zeros({1, 1, 2}), make({1, 1, 2}, {1, 0.5})), ValueError);
}

TEST(Dice, WorkedExample) {
  EXPECT_NEAR(dice_loss(Tensor<double>::zeros({1, 2, 2}), make({1, 2, 2}, {1, 0, 1, 0})).item(), 0.4, 1e-15);
}

TEST(Dice, MatchAndDisjoint) {
  const auto y = make({1, 4, 4}, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const auto logits = add_scalar(scale(y, 60.0), -30.0);
  EXPECT_LT(dice_loss(logits, y).item(), 1e-3);
  EXPECT_GT(dice_loss(neg(logits), y).item(), 0.9);
}

TEST(Boundary, ConstantMaskHasNoInteriorEdges) {
  for (double v : values(interior(boundary_extract(Tensor<double>::ones({1, 5, 5}))))) EXPECT_EQ(v, 0.0);
  for (double v : values(boundary_extract(Tensor<double>::zeros({1, 5, 5})))) EXPECT_EQ(v, 0.0);
}

TEST(Boundary, SinglePixelLightsItsNeighbourhood) {
  Tensor<double> m({1, 5, 5}, 0.0);
  m.data_mut()[12] = 1.0;
  const auto b = boundary_extract(m);
  for (Index y = 0; y < 5; ++y) {
    for (Index x = 0; x < 5; ++x) {
      const bool near = std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1;
      EXPECT_EQ(b.at({0, y, x}), near ? 1.0 : 0.0) << y << "," << x;
    }
  }
}

TEST(Boundary, HalfPlaneMarksTheTwoEdgeRows) {
  Tensor<double> m({1, 8, 6}, 0.0);
  for (Index i = 4 * 6; i < 48; ++i) m.data_mut()[static_cast<std::size_t>(i)] = 1.0;
  const auto b = interior(boundary_extract(m));
  // Interior row r corresponds to full row r + 1.
  for (Index r = 0; r < 6; ++r) {
    for (Index c = 0; c < 4; ++c) {
      const bool edge = r + 1 == 3 || r + 1 == 4;
      EXPECT_EQ(b.at({0, r, c}) > 0, edge) << r << "," << c;
    }
  }
}

TEST(SegLoss, GammaZeroIsDicePlusBce) {
  Rng rng(1);
  const auto s = randn<double>({2, 6, 6}, rng, 2.0);
  const auto y = random_mask({2, 6, 6}, rng);
  const auto l = seg_loss(s, y, 0.0);
  EXPECT_EQ(l.total.item(), dice_loss(s, y).item() + bce_loss(s, y).item());
  EXPECT_EQ(l.boundary.item(), 0.0);
  const auto g = seg_loss(s, y, 2.0);
  EXPECT_EQ(g.total.item(), l.total.item() + 2.0 * boundary_loss(s, y).item());
}

TEST(SegLoss, PerfectPredictionIsNearZero) {
  Tensor<double> y({1, 12, 12}, 0.0);
  for (Index r = 3; r < 9; ++r) {
    for (Index c = 2; c < 7; ++c) y.data_mut()[static_cast<std::size_t>(r * 12 + c)] = 1.0;
  }
  const auto logits = add_scalar(scale(y, 60.0), -30.0);
  EXPECT_LT(seg_loss(logits, y, 1.0).total.item(), 0.01);
}

TEST(SegLoss, FiniteOnWideLogits) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = rand_uniform<double>({1, 8, 8}, rng, -10, 10);
    const auto y = random_mask({1, 8, 8}, rng);
    const auto l = seg_loss(s, y, 1.0);
    EXPECT_TRUE(std::isfinite(l.total.item()));
    EXPECT_GE(l.total.item(), 0.0);
  }
}

TEST(SegLoss, MovingTowardTargetLowersLoss) {
  for (double target : {0.0, 1.0}) {
    const auto y = make({1, 1, 1}, {target});
    double previous = INFINITY;
    for (double step = 0; step <= 6; step += 0.5) {
      const double logit = target > 0 ? -3 + step : 3 - step;
      const double loss = seg_loss(make({1, 1, 1}, {logit}), y, 0.0).total.item();
      EXPECT_LT(loss, previous);
      previous = loss;
    }
  }
}

TEST(Kl, ClosedFormValues) {
  EXPECT_EQ(kl_standard_normal(field(make({1, 1, 1}, {0}), make({1, 1, 1}, {1}))).item(), 0.0);
  EXPECT_NEAR(kl_standard_normal(field(make({1, 1, 1}, {1}), make({1, 1, 1}, {1}))).item(), 0.5, 1e-15);
  EXPECT_NEAR(kl_standard_normal(field(make({1, 1, 1}, {0}), make({1, 1, 1}, {2}))).item(),
              0.5 * (4 - 1 - std::log(4.0)), 1e-14);
  EXPECT_NEAR(kl_standard_normal(field(make({1, 1, 1}, {0}), make({1, 1, 1}, {2}))).item(), 0.8069, 1e-4);
}

TEST(Kl, PositiveAwayFromStandardNormal) {
  for (double mu = -2; mu <= 2; mu += 0.5) {
    for (double sigma = 0.25; sigma <= 3; sigma += 0.25) {
      const double kl = kl_standard_normal(field(make({1, 1, 1}, {mu}), make({1, 1, 1}, {sigma}))).item();
      if (mu == 0 && sigma == 1) {
        EXPECT_EQ(kl, 0.0);
      } else {
        EXPECT_GT(kl, 0.0) << mu << " " << sigma;
      }
    }
  }
}

TEST(Kl, NonPositiveSigmaThrows) {
  EXPECT_THROW(kl_standard_normal(field(make({1, 1, 2}, {0, 0}), make({1, 1, 2}, {1, 0}))), ValueError);
  EXPECT_THROW(kl_standard_normal(field(make({1, 1, 2}, {0, 0}), make({1, 1, 2}, {1, -1}))), ValueError);
}

TEST(ResizeNearest, PicksCentreSamples) {
  Tensor<double> m({1, 4, 4}, 0.0);
  for (Index i = 0; i < 16; ++i) m.data_mut()[static_cast<std::size_t>(i)] = static_cast<double>(i);
  const auto r = resize_nearest(m, 2, 2);
  EXPECT_EQ(r.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(values(r), (std::vector<double>{5, 7, 13, 15}));
  EXPECT_EQ(values(resize_nearest(m, 4, 4)), values(m));
}

TEST(UncertaintyLoss, EtaZeroIsSampleBce) {
  Rng rng(3);
  const auto g = field(randn<double>({1, 2, 2}, rng), rand_uniform<double>({1, 2, 2}, rng, 0.2, 1));
  const auto y = make({1, 4, 4}, {0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0});
  Rng a(4), b(4);
  const auto u = uncertainty_loss(g, y, 0.0, a);
  const auto sample = reparameterize(g, randn<double>({1, 2, 2}, b));
  EXPECT_EQ(u.total.item(), bce_loss(sample, make({1, 2, 2}, {0, 1, 1, 0})).item());
}

TEST(UncertaintyLoss, SameSeedSameValue) {
  Rng rng(5);
  const auto g = field(randn<double>({1, 3, 3}, rng), Tensor<double>::full({1, 3, 3}, 1e-4));
  const auto y = random_mask({1, 12, 12}, rng);
  Rng a(6), b(6);
  EXPECT_EQ(uncertainty_loss(g, y, 0.2, a).total.item(), uncertainty_loss(g, y, 0.2, b).total.item());
}

TEST(UncertaintyLoss, MuGradientWithFrozenNoise) {
  Rng rng(7);
  auto mu = randn<double>({1, 3, 3}, rng);
  const auto sigma = rand_uniform<double>({1, 3, 3}, rng, 0.3, 1.2);
  const auto y = random_mask({1, 6, 6}, rng);
  auto f = [&] {
    Rng frozen(8);
    return uncertainty_loss(field(mu, sigma), y, 0.2, frozen).total;
  };
  mu.requires_grad_();
  backward(f());
  const std::vector<double> analytic(mu.grad().begin(), mu.grad().end());
  NoGradGuard guard;
  const auto numeric = finite_difference_gradient<double>([&] { return f().item(); }, mu, 1e-5);
  for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_LT(gradient_error(analytic[i], numeric[i]), 1e-4);
}

TEST(TotalLoss, ZeroLambdasEqualSegLoss) {
  Rng rng(9);
  const auto s = randn<double>({1, 8, 8}, rng);
  const auto y = random_mask({1, 8, 8}, rng);
  const auto gl = field(randn<double>({1, 2, 2}, rng), Tensor<double>::ones({1, 2, 2}));
  const auto gg = field(randn<double>({1, 2, 2}, rng), Tensor<double>::ones({1, 2, 2}));
  LossWeights w;
  w.lambda1 = w.lambda2 = 0;
  Rng r(10);
  EXPECT_EQ(total_loss(s, y, gl, gg, w, r).total.item(), seg_loss(s, y, w.gamma).total.item());
}

TEST(TotalLoss, ExactWeightedSumWithGlobalDrawnFirst) {
  Rng rng(11);
  const auto s = randn<double>({1, 8, 8}, rng);
  const auto y = random_mask({1, 8, 8}, rng);
  const auto gl = field(randn<double>({1, 2, 2}, rng), rand_uniform<double>({1, 2, 2}, rng, 0.5, 1.5));
  const auto gg = field(randn<double>({1, 2, 2}, rng), rand_uniform<double>({1, 2, 2}, rng, 0.5, 1.5));
  const LossWeights w{1.0, 0.2, 0.5, 0.5};
  Rng a(12), b(12);
  const auto t = total_loss(s, y, gl, gg, w, a);
  const double seg = seg_loss(s, y, 1.0).total.item();
  const double ug = uncertainty_loss(gg, y, 0.2, b).total.item();
  const double ul = uncertainty_loss(gl, y, 0.2, b).total.item();
  EXPECT_EQ(t.total.item(), (seg + 0.5 * ug) + 0.5 * ul);
  EXPECT_EQ(t.unc_global.total.item(), ug);
}

TEST(TotalLoss, NegativeWeightsAreConfigErrors) {
  const auto z = Tensor<double>::zeros({1, 4, 4});
  const auto g = field(Tensor<double>::zeros({1, 1, 1}), Tensor<double>::ones({1, 1, 1}));
  Rng rng(13);
  EXPECT_THROW(total_loss(z, z, g, g, LossWeights{1.0, -0.1, 0.5, 0.5}, rng), ConfigError);
}
