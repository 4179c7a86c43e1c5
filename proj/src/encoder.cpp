// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/encoder.hpp"

#include <cmath>

#include "op_util.hpp"

namespace uaglnet {

template <typename T>
MkfmParams<T> MkfmParams<T>::make(ParamBuilder<T> b, Index channels, int groups) {
  if (groups < 1 || channels % groups != 0) {
    throw ConfigError("MKFM: channel width " + std::to_string(channels) +
                      " is not divisible by group count " + std::to_string(groups));
  }
  MkfmParams p;
  p.groups = groups;
  const Index per_group = channels / groups;
  for (int j = 1; j <= groups; ++j) {
    const Index k = 2 * j + 1;
    auto g = b.scope("dw" + std::to_string(j));
    p.dw_weight.push_back(g.fan_in_uniform("weight", Shape{per_group, 1, k, k}, k * k));
    p.dw_bias.push_back(g.fan_in_uniform("bias", Shape{per_group}, k * k));
  }
  p.combine = Conv2dLayer<T>::make(b.scope("combine"), channels, channels, 1, 1, 0);
  p.embed = Conv2dLayer<T>::make(b.scope("embed"), channels, channels, 1, 1, 0);
  return p;
}

template <typename T>
MkfmBlockParams<T> MkfmBlockParams<T>::make(ParamBuilder<T> b, Index channels, int groups,
                                            int ffn_ratio, double eps) {
  MkfmBlockParams p;
  p.norm1 = LayerNormLayer<T>::make(b.scope("norm1"), channels, eps);
  p.mkfm = MkfmParams<T>::make(b.scope("mkfm"), channels, groups);
  p.norm2 = LayerNormLayer<T>::make(b.scope("norm2"), channels, eps);
  p.ffn = FfnLayer<T>::make(b.scope("ffn"), channels, ffn_ratio);
  return p;
}

template <typename T>
MhsaParams<T> MhsaParams<T>::make(ParamBuilder<T> b, Index channels, int heads) {
  if (heads < 1 || channels % heads != 0) {
    throw ConfigError("MHSA: head count " + std::to_string(heads) +
                      " does not divide channel width " + std::to_string(channels));
  }
  MhsaParams p;
  p.heads = heads;
  p.query = LinearLayer<T>::make(b.scope("query"), channels, channels);
  p.key = LinearLayer<T>::make(b.scope("key"), channels, channels);
  p.value = LinearLayer<T>::make(b.scope("value"), channels, channels);
  p.out = LinearLayer<T>::make(b.scope("out"), channels, channels);
  return p;
}

template <typename T>
CibParams<T> CibParams<T>::make(ParamBuilder<T> b, Index channels, int groups, int heads,
                                int ffn_ratio, double eps) {
  CibParams p;
  p.local = MkfmBlockParams<T>::make(b, channels, groups, ffn_ratio, eps);
  p.norm3 = LayerNormLayer<T>::make(b.scope("norm3"), channels, eps);
  p.attn = MhsaParams<T>::make(b.scope("attn"), channels, heads);
  p.norm4 = LayerNormLayer<T>::make(b.scope("norm4"), channels, eps);
  p.ffn2 = FfnLayer<T>::make(b.scope("ffn2"), channels, ffn_ratio);
  return p;
}

template <typename T>
TransformerBlockParams<T> TransformerBlockParams<T>::make(ParamBuilder<T> b, Index channels,
                                                          int heads, int ffn_ratio, double eps) {
  TransformerBlockParams p;
  p.norm1 = LayerNormLayer<T>::make(b.scope("norm1"), channels, eps);
  p.attn = MhsaParams<T>::make(b.scope("attn"), channels, heads);
  p.norm2 = LayerNormLayer<T>::make(b.scope("norm2"), channels, eps);
  p.ffn = FfnLayer<T>::make(b.scope("ffn"), channels, ffn_ratio);
  return p;
}

template <typename T>
EncoderParams<T> EncoderParams<T>::make(ParamBuilder<T> b, const ModelConfig& cfg) {
  cfg.validate();
  const auto& w = cfg.widths;
  const auto& r = cfg.ffn_ratios;
  const int n = cfg.mkfm_groups;
  const double eps = cfg.norm_eps;
  const int total_blocks = cfg.depths[0] + cfg.depths[1] + cfg.depths[2] + cfg.depths[3];
  int block_index = 0;
  auto next_rate = [&] {
    const double rate =
        total_blocks > 1 ? cfg.drop_path * block_index / (total_blocks - 1) : 0.0;
    ++block_index;
    return rate;
  };

  EncoderParams p;
  auto s1 = b.scope("stage1");
  p.stem_conv1 = Conv2dLayer<T>::make(s1.scope("stem1"), 3, w[0], 3, 2, 1);
  p.stem_conv2 = Conv2dLayer<T>::make(s1.scope("stem2"), w[0], w[0], 2, 2, 0);
  for (int i = 0; i < cfg.depths[0]; ++i) {
    auto blk = MkfmBlockParams<T>::make(s1.scope("block" + std::to_string(i)), w[0], n, r[0], eps);
    blk.drop_rate = next_rate();
    p.stage1.push_back(std::move(blk));
  }
  auto s2 = b.scope("stage2");
  p.down2 = Conv2dLayer<T>::make(s2.scope("down"), w[0], w[1], 3, 2, 1);
  for (int i = 0; i < cfg.depths[1]; ++i) {
    auto blk = MkfmBlockParams<T>::make(s2.scope("block" + std::to_string(i)), w[1], n, r[1], eps);
    blk.drop_rate = next_rate();
    p.stage2.push_back(std::move(blk));
  }
  auto s3 = b.scope("stage3");
  p.down3 = Conv2dLayer<T>::make(s3.scope("down"), w[1], w[2], 3, 2, 1);
  for (int i = 0; i < cfg.depths[2]; ++i) {
    auto blk = CibParams<T>::make(s3.scope("block" + std::to_string(i)), w[2], n,
                                  cfg.heads_stage3, r[2], eps);
    const double rate = next_rate();
    blk.drop_rate = rate;
    blk.local.drop_rate = rate;
    p.stage3.push_back(std::move(blk));
  }
  auto s4 = b.scope("stage4");
  p.down4 = Conv2dLayer<T>::make(s4.scope("down"), w[2], w[3], 3, 2, 1);
  for (int i = 0; i < cfg.depths[3]; ++i) {
    auto blk = TransformerBlockParams<T>::make(s4.scope("block" + std::to_string(i)), w[3],
                                               cfg.heads_stage4, r[3], eps);
    blk.drop_rate = next_rate();
    p.stage4.push_back(std::move(blk));
  }
  return p;
}

void check_encoder_input(const Shape& s) {
  if (s.size() != 3 || s[0] != 3) {
    throw DimensionError("encoder input must be [3, H, W], got " + shape_str(s));
  }
  if (s[1] % 32 != 0) {
    throw ConfigError("encoder input axis 1 (height " + std::to_string(s[1]) +
                      ") is not divisible by 32");
  }
  if (s[2] % 32 != 0) {
    throw ConfigError("encoder input axis 2 (width " + std::to_string(s[2]) +
                      ") is not divisible by 32");
  }
}

template <typename T>
Tensor<T> stem_embed(const Tensor<T>& image, const EncoderParams<T>& p) {
  check_encoder_input(image.shape());
  return p.stem_conv2(gelu(p.stem_conv1(image)));
}

template <typename T>
Tensor<T> mkfm_modulator(const Tensor<T>& z, const MkfmParams<T>& p) {
  detail::require_rank(z.shape(), 3, "mkfm_modulator", "input");
  const Index c = z.dim(0);
  if (c % p.groups != 0 || c != p.channels()) {
    throw DimensionError("mkfm_modulator: input axis 0 has " + std::to_string(c) +
                         " channels, expected " + std::to_string(p.channels()) +
                         " split into " + std::to_string(p.groups) + " groups");
  }
  const Index per_group = c / p.groups;
  std::vector<Tensor<T>> parts;
  parts.reserve(static_cast<std::size_t>(p.groups));
  for (int j = 0; j < p.groups; ++j) {
    const auto group = p.groups == 1 ? z : slice(z, 0, j * per_group, per_group);
    parts.push_back(depthwise_conv2d(group, p.dw_weight[j], std::optional<Tensor<T>>(p.dw_bias[j]),
                                     j + 1));
  }
  const auto cat = p.groups == 1 ? parts[0] : concat(parts, 0);
  return p.combine(cat);
}

template <typename T>
Tensor<T> mkfm_apply(const Tensor<T>& f, const Tensor<T>& modulator, const MkfmParams<T>& p) {
  if (f.shape() != modulator.shape()) {
    throw DimensionError("mkfm_apply: feature " + shape_str(f.shape()) + " and modulator " +
                         shape_str(modulator.shape()) + " differ");
  }
  return mul(modulator, p.embed(f));
}

template <typename T>
Tensor<T> mkfm(const Tensor<T>& f, const MkfmParams<T>& p) {
  return mkfm_apply(f, mkfm_modulator(f, p), p);
}

template <typename T>
Tensor<T> mkfm_block(const Tensor<T>& x, const MkfmBlockParams<T>& p, const ForwardContext& ctx) {
  detail::require_rank(x.shape(), 3, "mkfm_block", "input");
  const Index h = x.dim(1), w = x.dim(2);
  const auto mid = add(x, drop_path(mkfm(p.norm1(x, 0), p.mkfm), p.drop_rate, ctx));
  const auto tokens = to_tokens(mid);
  const auto out = add(tokens, drop_path(p.ffn(p.norm2(tokens, -1)), p.drop_rate, ctx));
  return from_tokens(out, h, w);
}

template <typename T>
Tensor<T> mhsa(const Tensor<T>& tokens, const MhsaParams<T>& p) {
  detail::require_rank(tokens.shape(), 2, "mhsa", "input");
  const Index c = tokens.dim(1);
  if (c % p.heads != 0) {
    throw DimensionError("mhsa: " + std::to_string(p.heads) + " heads do not divide axis 1 (" +
                         std::to_string(c) + ")");
  }
  const Index d = c / p.heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(c));
  const auto q = p.query(tokens);
  const auto k = p.key(tokens);
  const auto v = p.value(tokens);
  std::vector<Tensor<T>> heads;
  heads.reserve(static_cast<std::size_t>(p.heads));
  for (int j = 0; j < p.heads; ++j) {
    const auto qj = p.heads == 1 ? q : slice(q, 1, j * d, d);
    const auto kj = p.heads == 1 ? k : slice(k, 1, j * d, d);
    const auto vj = p.heads == 1 ? v : slice(v, 1, j * d, d);
    const auto weights = softmax(scale(matmul(qj, transpose2d(kj)), scale_factor), -1);
    heads.push_back(matmul(weights, vj));
  }
  const auto cat = p.heads == 1 ? heads[0] : concat(heads, 1);
  return p.out(cat);
}

template <typename T>
Tensor<T> cib_block(const Tensor<T>& x, const CibParams<T>& p, const ForwardContext& ctx) {
  const auto local = mkfm_block(x, p.local, ctx);
  const Index h = x.dim(1), w = x.dim(2);
  const auto tokens = to_tokens(local);
  const auto mid = add(tokens, drop_path(mhsa(p.norm3(tokens, -1), p.attn), p.drop_rate, ctx));
  const auto out = add(mid, drop_path(p.ffn2(p.norm4(mid, -1)), p.drop_rate, ctx));
  return from_tokens(out, h, w);
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const TransformerBlockParams<T>& p,
                            const ForwardContext& ctx) {
  detail::require_rank(x.shape(), 3, "transformer_block", "input");
  const Index h = x.dim(1), w = x.dim(2);
  const auto tokens = to_tokens(x);
  const auto mid = add(tokens, drop_path(mhsa(p.norm1(tokens, -1), p.attn), p.drop_rate, ctx));
  const auto out = add(mid, drop_path(p.ffn(p.norm2(mid, -1)), p.drop_rate, ctx));
  return from_tokens(out, h, w);
}

template <typename T>
FeaturePyramid<T> encoder_forward(const Tensor<T>& image, const EncoderParams<T>& p,
                                  const ForwardContext& ctx) {
  FeaturePyramid<T> pyr;
  auto z = stem_embed(image, p);
  for (const auto& blk : p.stage1) z = mkfm_block(z, blk, ctx);
  pyr.levels[0] = z;
  z = p.down2(z);
  for (const auto& blk : p.stage2) z = mkfm_block(z, blk, ctx);
  pyr.levels[1] = z;
  z = p.down3(z);
  for (const auto& blk : p.stage3) z = cib_block(z, blk, ctx);
  pyr.levels[2] = z;
  z = p.down4(z);
  for (const auto& blk : p.stage4) z = transformer_block(z, blk, ctx);
  pyr.levels[3] = z;
  return pyr;
}

#define UAGLNET_INST(T)                                                                         \
  template struct MkfmParams<T>;                                                                \
  template struct MkfmBlockParams<T>;                                                           \
  template struct MhsaParams<T>;                                                                \
  template struct CibParams<T>;                                                                 \
  template struct TransformerBlockParams<T>;                                                    \
  template struct EncoderParams<T>;                                                             \
  template Tensor<T> stem_embed(const Tensor<T>&, const EncoderParams<T>&);                     \
  template Tensor<T> mkfm_modulator(const Tensor<T>&, const MkfmParams<T>&);                    \
  template Tensor<T> mkfm_apply(const Tensor<T>&, const Tensor<T>&, const MkfmParams<T>&);      \
  template Tensor<T> mkfm(const Tensor<T>&, const MkfmParams<T>&);                              \
  template Tensor<T> mkfm_block(const Tensor<T>&, const MkfmBlockParams<T>&,                    \
                                const ForwardContext&);                                         \
  template Tensor<T> mhsa(const Tensor<T>&, const MhsaParams<T>&);                              \
  template Tensor<T> cib_block(const Tensor<T>&, const CibParams<T>&, const ForwardContext&);   \
  template Tensor<T> transformer_block(const Tensor<T>&, const TransformerBlockParams<T>&,      \
                                       const ForwardContext&);                                  \
  template FeaturePyramid<T> encoder_forward(const Tensor<T>&, const EncoderParams<T>&,         \
                                             const ForwardContext&);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
