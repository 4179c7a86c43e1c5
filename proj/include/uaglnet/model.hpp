// SPDX-License-Identifier: Apache-2.0
//
// Full network: cooperative encoder -> global-local fusion -> uncertainty
// aggregated decoder -> segmentation head.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uaglnet/config.hpp"
#include "uaglnet/decoder.hpp"
#include "uaglnet/encoder.hpp"
#include "uaglnet/fusion.hpp"
#include "uaglnet/nn.hpp"

namespace uaglnet {

template <typename T>
struct ForwardOutput {
  FeaturePyramid<T> pyramid;
  FusedPair<T> fused;
  GaussianField<T> field_local;   // empty when UAD is disabled
  GaussianField<T> field_global;
  UncertaintyPair<T> uncertainty;
  Tensor<T> fused_out;
  Tensor<T> logits;  // [1, H, W]
};

template <typename T>
class UaglNet {
 public:
  /// Parameters are initialized from a stream derived from `seed`.
  UaglNet(const ModelConfig& cfg, std::uint64_t seed);

  /// Training-mode drop path draws from ctx.rng; uncertainty sampling always
  /// draws from `sample_rng`, global branch first.
  ForwardOutput<T> forward(const Tensor<T>& image, const ForwardContext& ctx,
                           Rng& sample_rng) const;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const EncoderParams<T>& encoder() const { return encoder_; }
  const FusionParams<T>& fusion() const { return fusion_; }
  const DecoderParams<T>& decoder() const { return decoder_; }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  EncoderParams<T> encoder_;
  FusionParams<T> fusion_;
  DecoderParams<T> decoder_;
};

/// (module, scalar count) rows: encoder stages, fusion, decoder, then total.
std::vector<std::pair<std::string, Index>> parameter_breakdown(const ModelConfig& cfg);
Index count_parameters(const ModelConfig& cfg, const std::string& prefix = "");

}  // namespace uaglnet
