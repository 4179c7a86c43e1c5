// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/model.hpp"

#include "op_util.hpp"

namespace uaglnet {

namespace {

template <typename T>
struct Built {
  EncoderParams<T> encoder;
  FusionParams<T> fusion;
  DecoderParams<T> decoder;
};

template <typename T>
Built<T> build(ParamStore<T>& store, const ModelConfig& cfg, std::uint64_t seed) {
  Rng init = Rng::derive(seed, 0);
  ParamBuilder<T> root(store, init);
  Built<T> b;
  b.encoder = EncoderParams<T>::make(root.scope("encoder"), cfg);
  b.fusion = FusionParams<T>::make(root.scope("fusion"), cfg);
  b.decoder = DecoderParams<T>::make(root.scope("decoder"), cfg.fusion_dim);
  return b;
}

}  // namespace

template <typename T>
UaglNet<T>::UaglNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  auto b = build(store_, cfg_, seed);
  encoder_ = std::move(b.encoder);
  fusion_ = std::move(b.fusion);
  decoder_ = std::move(b.decoder);
}

template <typename T>
ForwardOutput<T> UaglNet<T>::forward(const Tensor<T>& image, const ForwardContext& ctx,
                                     Rng& sample_rng) const {
  ForwardOutput<T> out;
  out.pyramid = encoder_forward(image, encoder_, ctx);
  out.fused = fuse(out.pyramid, fusion_);
  const Index h = out.fused.local.dim(1), w = out.fused.local.dim(2);
  if (cfg_.use_uad) {
    const SigmaMode mode{cfg_.sigma_floor, cfg_.zero_sigma};
    out.field_global = predict_distribution(out.fused.global, decoder_.global, mode);
    out.field_local = predict_distribution(out.fused.local, decoder_.local, mode);
    auto u_global =
        uncertainty_map(reparameterized_samples(out.field_global, cfg_.samples, sample_rng));
    auto u_local =
        uncertainty_map(reparameterized_samples(out.field_local, cfg_.samples, sample_rng));
    if (!cfg_.uncertainty_grad) {
      u_global = u_global.detach();
      u_local = u_local.detach();
    }
    out.uncertainty = {u_local, u_global};
  } else {
    out.uncertainty = {Tensor<T>::zeros(Shape{1, h, w}), Tensor<T>::zeros(Shape{1, h, w})};
  }
  out.fused_out = aggregate(out.fused.local, out.fused.global, out.uncertainty.local,
                            out.uncertainty.global);
  out.logits = segmentation_head(out.fused_out, decoder_.seg_head);
  return out;
}

std::vector<std::pair<std::string, Index>> parameter_breakdown(const ModelConfig& cfg) {
  ParamStore<float> store;
  build(store, cfg, 0);
  std::vector<std::pair<std::string, Index>> rows;
  for (const char* stage : {"stage1", "stage2", "stage3", "stage4"}) {
    rows.emplace_back(std::string("encoder.") + stage,
                      store.count(std::string("encoder.") + stage + "."));
  }
  rows.emplace_back("encoder", store.count("encoder."));
  rows.emplace_back("fusion", store.count("fusion."));
  rows.emplace_back("decoder", store.count("decoder."));
  rows.emplace_back("total", store.count());
  return rows;
}

Index count_parameters(const ModelConfig& cfg, const std::string& prefix) {
  ParamStore<float> store;
  build(store, cfg, 0);
  return store.count(prefix);
}

template class UaglNet<float>;
template class UaglNet<double>;

}  // namespace uaglnet
