// SPDX-License-Identifier: Apache-2.0
//
// Four-stage cooperative encoder.
//
//   stage 1  stem (3x3/2 conv, GELU, 2x2/2 conv) + MKFM blocks      stride 4
//   stage 2  3x3/2 conv + MKFM blocks                                stride 8
//   stage 3  3x3/2 conv + cooperative interaction blocks (CIB)       stride 16
//   stage 4  3x3/2 conv + transformer blocks                         stride 32
//
// An MKFM block is X* = X + MKFM(LN(X)), out = X* + FFN(LN(X*)). A CIB appends
// an attention sub-block, X' = X + MHSA(LN(X)), out = X' + FFN(LN(X')).
// Attention logits are scaled by 1/sqrt(C) with C the full channel width, not
// the per-head width. No positional encoding is added.
#pragma once

#include <array>
#include <vector>

#include "uaglnet/config.hpp"
#include "uaglnet/nn.hpp"

namespace uaglnet {

/// Multi-kernel feature modulator. Group j (1-based) of n uses a depthwise
/// kernel of size 2j + 1, so the largest kernel is 2n + 1.
template <typename T>
struct MkfmParams {
  int groups = 1;
  std::vector<Tensor<T>> dw_weight;  // group j: [C/n, 1, 2j+1, 2j+1]
  std::vector<Tensor<T>> dw_bias;    // group j: [C/n]
  Conv2dLayer<T> combine;            // W_p, 1x1 C -> C
  Conv2dLayer<T> embed;              // phi, 1x1 C -> C

  static MkfmParams make(ParamBuilder<T> b, Index channels, int groups);
  Index channels() const { return combine.weight.dim(0); }
};

template <typename T>
struct MkfmBlockParams {
  LayerNormLayer<T> norm1;
  MkfmParams<T> mkfm;
  LayerNormLayer<T> norm2;
  FfnLayer<T> ffn;
  double drop_rate = 0.0;

  static MkfmBlockParams make(ParamBuilder<T> b, Index channels, int groups, int ffn_ratio,
                              double eps);
};

template <typename T>
struct MhsaParams {
  int heads = 1;
  LinearLayer<T> query, key, value, out;

  static MhsaParams make(ParamBuilder<T> b, Index channels, int heads);
};

template <typename T>
struct CibParams {
  MkfmBlockParams<T> local;
  LayerNormLayer<T> norm3;
  MhsaParams<T> attn;
  LayerNormLayer<T> norm4;
  FfnLayer<T> ffn2;
  double drop_rate = 0.0;

  static CibParams make(ParamBuilder<T> b, Index channels, int groups, int heads, int ffn_ratio,
                        double eps);
};

template <typename T>
struct TransformerBlockParams {
  LayerNormLayer<T> norm1;
  MhsaParams<T> attn;
  LayerNormLayer<T> norm2;
  FfnLayer<T> ffn;
  double drop_rate = 0.0;

  static TransformerBlockParams make(ParamBuilder<T> b, Index channels, int heads, int ffn_ratio,
                                     double eps);
};

template <typename T>
struct EncoderParams {
  Conv2dLayer<T> stem_conv1;  // 3x3, stride 2
  Conv2dLayer<T> stem_conv2;  // 2x2, stride 2
  std::vector<MkfmBlockParams<T>> stage1;
  Conv2dLayer<T> down2;
  std::vector<MkfmBlockParams<T>> stage2;
  Conv2dLayer<T> down3;
  std::vector<CibParams<T>> stage3;
  Conv2dLayer<T> down4;
  std::vector<TransformerBlockParams<T>> stage4;

  /// Drop-path rates rise linearly from 0 to cfg.drop_path over all blocks.
  static EncoderParams make(ParamBuilder<T> b, const ModelConfig& cfg);
};

/// Encoder outputs F1..F4 at strides 4, 8, 16, 32.
template <typename T>
struct FeaturePyramid {
  static constexpr std::array<int, 4> kStrides{4, 8, 16, 32};
  std::array<Tensor<T>, 4> levels;

  const Tensor<T>& operator[](int level) const { return levels.at(static_cast<std::size_t>(level - 1)); }
};

template <typename T>
Tensor<T> stem_embed(const Tensor<T>& image, const EncoderParams<T>& p);

template <typename T>
Tensor<T> mkfm_modulator(const Tensor<T>& z, const MkfmParams<T>& p);
/// M ⊗ phi(F) for a precomputed modulator M.
template <typename T>
Tensor<T> mkfm_apply(const Tensor<T>& f, const Tensor<T>& modulator, const MkfmParams<T>& p);
/// mkfm_apply(F, mkfm_modulator(F)).
template <typename T>
Tensor<T> mkfm(const Tensor<T>& f, const MkfmParams<T>& p);

template <typename T>
Tensor<T> mkfm_block(const Tensor<T>& x, const MkfmBlockParams<T>& p, const ForwardContext& ctx);
/// Multi-head self-attention over tokens [N, C].
template <typename T>
Tensor<T> mhsa(const Tensor<T>& tokens, const MhsaParams<T>& p);
template <typename T>
Tensor<T> cib_block(const Tensor<T>& x, const CibParams<T>& p, const ForwardContext& ctx);
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const TransformerBlockParams<T>& p,
                            const ForwardContext& ctx);

template <typename T>
FeaturePyramid<T> encoder_forward(const Tensor<T>& image, const EncoderParams<T>& p,
                                  const ForwardContext& ctx);

/// Requires a [3, H, W] image with H and W divisible by 32.
void check_encoder_input(const Shape& image_shape);

}  // namespace uaglnet
