// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Logit maps and targets are [B, H, W] (a batch stacked
// along axis 0, or a single [1, H, W] item). Every function returns a
// Shape{1} tensor.
//
//   seg   = dice(S, Y) + bce(S, Y) + gamma * bce(|S|, |Y|)
//   unc   = bce(x*, Y_down) + eta * KL(N(mu, sigma^2) || N(0, 1))
//   total = seg + lambda1 * unc(global) + lambda2 * unc(local)
//
// |.| is the clamped absolute Laplacian response; x* is one fresh sample.
#pragma once

#include "uaglnet/decoder.hpp"
#include "uaglnet/rng.hpp"
#include "uaglnet/tensor.hpp"

namespace uaglnet {

struct LossWeights {
  double gamma = 1.0;
  double eta = 0.2;
  double lambda1 = 0.5;
  double lambda2 = 0.5;

  void validate() const;
};

/// Throws ValueError unless every entry is exactly 0 or 1.
template <typename T>
void require_binary(const Tensor<T>& target, const char* op);

/// mean(softplus(x) - x * y), the stable form of sigmoid cross-entropy.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target);
/// Cross-entropy on probabilities clamped to [eps, 1 - eps].
template <typename T>
Tensor<T> bce_prob_loss(const Tensor<T>& prob, const Tensor<T>& target, T eps = T(1e-6));
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, T smooth = T(1));

/// |Laplacian(mask)| clamped to [0, 1] with zero padding, per item.
template <typename T>
Tensor<T> boundary_extract(const Tensor<T>& mask);
/// Drops the one-pixel frame of a [B, H, W] map.
template <typename T>
Tensor<T> interior(const Tensor<T>& map);
/// bce(|sigmoid(S)|, |Y|) over the interior pixels.
template <typename T>
Tensor<T> boundary_loss(const Tensor<T>& logits, const Tensor<T>& target);

template <typename T>
struct SegLoss {
  Tensor<T> total, dice, bce, boundary;
};
template <typename T>
SegLoss<T> seg_loss(const Tensor<T>& logits, const Tensor<T>& target, double gamma);

template <typename T>
Tensor<T> kl_standard_normal(const GaussianField<T>& g);

/// Nearest-neighbour resize of a [B, H, W] label map to [B, h, w].
template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& map, Index height, Index width);

template <typename T>
struct UncLoss {
  Tensor<T> total, bce, kl;
};
template <typename T>
UncLoss<T> uncertainty_loss(const GaussianField<T>& g, const Tensor<T>& target, double eta,
                            Rng& rng);

template <typename T>
struct TotalLoss {
  Tensor<T> total;
  SegLoss<T> seg;
  UncLoss<T> unc_global;  // empty when the uncertainty terms are off
  UncLoss<T> unc_local;
};
/// With `with_uncertainty` false the two uncertainty terms are dropped. The
/// global sample is drawn before the local one.
template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& logits, const Tensor<T>& target,
                        const GaussianField<T>& local, const GaussianField<T>& global,
                        const LossWeights& w, Rng& rng, bool with_uncertainty = true);

}  // namespace uaglnet
