// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/fusion.hpp"

#include <algorithm>

#include "op_util.hpp"

namespace uaglnet {

Index upconv_width(Index in, Index fusion_dim) { return std::max(fusion_dim, in / 2); }

template <typename T>
RefineParams<T> RefineParams<T>::make(ParamBuilder<T> b, Index channels) {
  RefineParams p;
  p.dw1_weight = b.fan_in_uniform("dw1.weight", Shape{channels, 1, 3, 3}, 9);
  p.dw1_bias = b.fan_in_uniform("dw1.bias", Shape{channels}, 9);
  p.dw2_weight = b.fan_in_uniform("dw2.weight", Shape{channels, 1, 3, 3}, 9);
  p.dw2_bias = b.fan_in_uniform("dw2.bias", Shape{channels}, 9);
  p.pointwise = Conv2dLayer<T>::make(b.scope("pw"), channels, channels, 1, 1, 0);
  return p;
}

template <typename T>
ConvNormParams<T> ConvNormParams<T>::make(ParamBuilder<T> b, Index in, Index out, double eps) {
  ConvNormParams p;
  p.conv = Conv2dLayer<T>::make(b.scope("conv"), in, out, 3, 1, 1, /*with_bias=*/false);
  p.norm = LayerNormLayer<T>::make(b.scope("norm"), out, eps);
  return p;
}

template <typename T>
FusionParams<T> FusionParams<T>::make(ParamBuilder<T> b, const ModelConfig& cfg) {
  cfg.validate();
  FusionParams p;
  p.local_levels = cfg.local_levels;
  p.global_levels = cfg.global_levels;
  const Index df = cfg.fusion_dim;
  const double eps = cfg.norm_eps;
  auto width = [&](int level) { return cfg.widths[static_cast<std::size_t>(level - 1)]; };

  for (int level = 1; level <= 4; ++level) {
    if (p.refines(level)) {
      p.refine[static_cast<std::size_t>(level - 1)] =
          RefineParams<T>::make(b.scope("refine" + std::to_string(level)), width(level));
    }
  }

  // Local: coarsest level first, each UpConv output concatenated with the next
  // finer level.
  const int m = p.local_levels.back();
  Index running = width(m);
  for (int level = m - 1; level >= 1; --level) {
    const Index out = upconv_width(running, df);
    p.local_up.push_back(
        ConvNormParams<T>::make(b.scope("local_up" + std::to_string(level)), running, out, eps));
    running = out + width(level);
  }
  p.local_out = ConvNormParams<T>::make(b.scope("local_out"), running, df, eps);

  const int j = p.global_levels.front();
  running = width(4);
  for (int level = 3; level >= j; --level) {
    const Index out = upconv_width(running, df);
    p.global_up.push_back(
        ConvNormParams<T>::make(b.scope("global_up" + std::to_string(level)), running, out, eps));
    running = out + width(level);
  }
  for (int step = 1; step < j; ++step) {
    const Index out = step == j - 1 ? df : upconv_width(running, df);
    p.global_lift.push_back(
        ConvNormParams<T>::make(b.scope("global_lift" + std::to_string(step)), running, out, eps));
    running = out;
  }
  return p;
}

template <typename T>
bool FusionParams<T>::refines(int level) const {
  const auto has = [level](const std::vector<int>& v) {
    return std::find(v.begin(), v.end(), level) != v.end();
  };
  return has(local_levels) || has(global_levels);
}

template <typename T>
Tensor<T> residual_refine(const Tensor<T>& f, const RefineParams<T>& p) {
  detail::require_rank(f.shape(), 3, "residual_refine", "input");
  auto z = gelu(depthwise_conv2d(f, p.dw1_weight, std::optional<Tensor<T>>(p.dw1_bias), 1));
  z = gelu(depthwise_conv2d(z, p.dw2_weight, std::optional<Tensor<T>>(p.dw2_bias), 1));
  return add(f, p.pointwise(z));
}

template <typename T>
Tensor<T> conv_norm_act(const Tensor<T>& x, const ConvNormParams<T>& p) {
  return gelu(p.norm(p.conv(x), 0));
}

template <typename T>
Tensor<T> upconv(const Tensor<T>& x, const ConvNormParams<T>& p) {
  return conv_norm_act(bilinear_upsample(x, 2), p);
}

namespace {

template <typename T>
void check_strides(const std::vector<Tensor<T>>& levels, const char* op) {
  if (levels.empty()) throw DimensionError(std::string(op) + ": no input levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    detail::require_rank(levels[i].shape(), 3, op, "level");
    if (i == 0) continue;
    const auto& fine = levels[i - 1].shape();
    const auto& coarse = levels[i].shape();
    if (fine[1] != 2 * coarse[1] || fine[2] != 2 * coarse[2]) {
      throw DimensionError(std::string(op) + ": level " + std::to_string(i) + " " +
                           shape_str(coarse) + " is not half the resolution of " +
                           shape_str(fine));
    }
  }
}

// Coarse-to-fine concatenation chain shared by both branches.
template <typename T>
Tensor<T> top_down(const std::vector<Tensor<T>>& levels, const std::vector<ConvNormParams<T>>& ups) {
  if (ups.size() + 1 != levels.size()) {
    throw DimensionError("fusion: " + std::to_string(levels.size()) + " levels but " +
                         std::to_string(ups.size()) + " UpConv stages");
  }
  Tensor<T> running = levels.back();
  for (std::size_t i = 0; i < ups.size(); ++i) {
    const auto& finer = levels[levels.size() - 2 - i];
    running = concat(std::vector<Tensor<T>>{finer, upconv(running, ups[i])}, 0);
  }
  return running;
}

}  // namespace

template <typename T>
Tensor<T> fuse_local(const std::vector<Tensor<T>>& refined, const FusionParams<T>& p) {
  check_strides(refined, "fuse_local");
  return conv_norm_act(top_down(refined, p.local_up), p.local_out);
}

template <typename T>
Tensor<T> fuse_global(const std::vector<Tensor<T>>& refined, const FusionParams<T>& p) {
  check_strides(refined, "fuse_global");
  auto running = top_down(refined, p.global_up);
  for (const auto& step : p.global_lift) running = upconv(running, step);
  return running;
}

template <typename T>
FusedPair<T> fuse(const FeaturePyramid<T>& pyramid, const FusionParams<T>& p) {
  std::array<Tensor<T>, 4> refined;
  for (int level = 1; level <= 4; ++level) {
    if (p.refines(level)) {
      refined[static_cast<std::size_t>(level - 1)] =
          residual_refine(pyramid[level], p.refine[static_cast<std::size_t>(level - 1)]);
    }
  }
  auto gather = [&](const std::vector<int>& levels) {
    std::vector<Tensor<T>> out;
    for (int level : levels) out.push_back(refined[static_cast<std::size_t>(level - 1)]);
    return out;
  };
  FusedPair<T> pair{fuse_local(gather(p.local_levels), p), fuse_global(gather(p.global_levels), p)};
  if (pair.local.shape() != pair.global.shape()) {
    throw DimensionError("fusion: F_L " + shape_str(pair.local.shape()) + " and F_G " +
                         shape_str(pair.global.shape()) + " differ");
  }
  return pair;
}

#define UAGLNET_INST(T)                                                                   \
  template struct RefineParams<T>;                                                        \
  template struct ConvNormParams<T>;                                                      \
  template struct FusionParams<T>;                                                        \
  template Tensor<T> residual_refine(const Tensor<T>&, const RefineParams<T>&);           \
  template Tensor<T> conv_norm_act(const Tensor<T>&, const ConvNormParams<T>&);           \
  template Tensor<T> upconv(const Tensor<T>&, const ConvNormParams<T>&);                  \
  template Tensor<T> fuse_local(const std::vector<Tensor<T>>&, const FusionParams<T>&);   \
  template Tensor<T> fuse_global(const std::vector<Tensor<T>>&, const FusionParams<T>&);  \
  template FusedPair<T> fuse(const FeaturePyramid<T>&, const FusionParams<T>&);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
