// SPDX-License-Identifier: Apache-2.0
//
// Uncertainty-aggregated decoder. Each branch feature gets a per-pixel
// Gaussian (mu, sigma) from two 1x1 heads; T reparameterized samples give a
// variance map that is min-max normalized into an uncertainty map U. The
// branches are then merged as
//
//   F_out = (1 - U_G) * F_G + (1 - U_L) * F_L
//
// and a 1x1 head plus a x4 bilinear upsample produces the logit map.
#pragma once

#include <vector>

#include "uaglnet/config.hpp"
#include "uaglnet/nn.hpp"

namespace uaglnet {

template <typename T>
struct GaussianField {
  Tensor<T> mu;     // [1, h, w] per item, [B, h, w] once a batch is stacked
  Tensor<T> sigma;  // same shape, > 0 unless produced in zero-sigma mode
};

template <typename T>
struct UncertaintyPair {
  Tensor<T> local;   // U_L
  Tensor<T> global;  // U_G
};

template <typename T>
struct GaussianHeads {
  Conv2dLayer<T> mu;
  Conv2dLayer<T> sigma;

  static GaussianHeads make(ParamBuilder<T> b, Index channels);
};

template <typename T>
struct DecoderParams {
  GaussianHeads<T> local;
  GaussianHeads<T> global;
  Conv2dLayer<T> seg_head;

  static DecoderParams make(ParamBuilder<T> b, Index fusion_dim);
};

/// How sigma is made positive.
struct SigmaMode {
  double floor = 1e-4;
  bool zero = false;  // force sigma = 0; every sample then equals mu
};

template <typename T>
GaussianField<T> predict_distribution(const Tensor<T>& feature, const GaussianHeads<T>& heads,
                                      const SigmaMode& mode = {});

/// mu + sigma * eps for `count` independent standard-normal eps draws.
template <typename T>
std::vector<Tensor<T>> reparameterized_samples(const GaussianField<T>& g, int count, Rng& rng);
/// One sample with a caller-supplied eps, for frozen-noise gradient checks.
template <typename T>
Tensor<T> reparameterize(const GaussianField<T>& g, const Tensor<T>& eps);

/// Unbiased per-pixel variance across samples. Deviations are taken from the
/// first sample, so identical samples give exactly zero.
template <typename T>
Tensor<T> sample_variance(const std::vector<Tensor<T>>& samples);
/// Min-max normalization over the whole map; a flat map maps to zeros.
template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& x);
template <typename T>
Tensor<T> uncertainty_map(const std::vector<Tensor<T>>& samples);

/// U maps are [1, h, w] and broadcast over the channels of F_L / F_G.
template <typename T>
Tensor<T> aggregate(const Tensor<T>& local, const Tensor<T>& global, const Tensor<T>& u_local,
                    const Tensor<T>& u_global);

/// [D_f, H/4, W/4] -> logits [1, H, W].
template <typename T>
Tensor<T> segmentation_head(const Tensor<T>& fused, const Conv2dLayer<T>& head);

}  // namespace uaglnet
