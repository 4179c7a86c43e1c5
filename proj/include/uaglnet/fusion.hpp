// SPDX-License-Identifier: Apache-2.0
//
// Global-local fusion. Every pyramid level that feeds a branch is first
// refined residually, F^ = F + DW(F) with DW = DW3x3 -> GELU -> DW3x3 -> GELU ->
// PW. The local branch walks its levels coarse to fine,
//
//   r = F^_m;  r = Cat(F^_i, UpConv(r)) for i = m-1 .. 1;  F_L = Conv(r)
//
// and the global branch does the same from level 4 down to its first level j,
// then lifts to stride 4 with j - 1 further UpConv steps, the last of which
// projects to the fusion width. With the default level sets {1,2,3} / {3,4}
// this is the two-branch scheme with F3 shared.
//
// UpConv is bilinear x2 -> 3x3 conv (no bias) -> LayerNorm -> GELU and emits
// max(D_f, C_in / 2) channels, so widths never grow on the way down.
#pragma once

#include <array>
#include <vector>

#include "uaglnet/config.hpp"
#include "uaglnet/encoder.hpp"
#include "uaglnet/nn.hpp"

namespace uaglnet {

template <typename T>
struct RefineParams {
  Tensor<T> dw1_weight, dw1_bias;
  Tensor<T> dw2_weight, dw2_bias;
  Conv2dLayer<T> pointwise;

  static RefineParams make(ParamBuilder<T> b, Index channels);
};

/// 3x3 conv without bias, channel LayerNorm, GELU. UpConv runs it after a
/// bilinear x2 upsample; the local projection runs it directly.
template <typename T>
struct ConvNormParams {
  Conv2dLayer<T> conv;
  LayerNormLayer<T> norm;

  static ConvNormParams make(ParamBuilder<T> b, Index in, Index out, double eps);
  Index out_channels() const { return conv.weight.dim(0); }
};

template <typename T>
struct FusionParams {
  std::vector<int> local_levels;
  std::vector<int> global_levels;
  std::array<RefineParams<T>, 4> refine;  // only levels in either set are populated
  std::vector<ConvNormParams<T>> local_up;
  ConvNormParams<T> local_out;
  std::vector<ConvNormParams<T>> global_up;
  std::vector<ConvNormParams<T>> global_lift;

  static FusionParams make(ParamBuilder<T> b, const ModelConfig& cfg);
  bool refines(int level) const;
  Index fusion_dim() const { return local_out.out_channels(); }
};

template <typename T>
struct FusedPair {
  Tensor<T> local;   // F_L
  Tensor<T> global;  // F_G
};

/// Width emitted by an UpConv fed with `in` channels.
Index upconv_width(Index in, Index fusion_dim);

template <typename T>
Tensor<T> residual_refine(const Tensor<T>& f, const RefineParams<T>& p);
template <typename T>
Tensor<T> conv_norm_act(const Tensor<T>& x, const ConvNormParams<T>& p);
template <typename T>
Tensor<T> upconv(const Tensor<T>& x, const ConvNormParams<T>& p);

/// Refined levels ordered fine to coarse, each at half the resolution of the
/// previous one.
template <typename T>
Tensor<T> fuse_local(const std::vector<Tensor<T>>& refined, const FusionParams<T>& p);
template <typename T>
Tensor<T> fuse_global(const std::vector<Tensor<T>>& refined, const FusionParams<T>& p);

template <typename T>
FusedPair<T> fuse(const FeaturePyramid<T>& pyramid, const FusionParams<T>& p);

}  // namespace uaglnet
