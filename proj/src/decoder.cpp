// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/decoder.hpp"

#include "op_util.hpp"

namespace uaglnet {

template <typename T>
GaussianHeads<T> GaussianHeads<T>::make(ParamBuilder<T> b, Index channels) {
  GaussianHeads h;
  h.mu = Conv2dLayer<T>::make(b.scope("mu"), channels, 1, 1, 1, 0);
  h.sigma = Conv2dLayer<T>::make(b.scope("sigma"), channels, 1, 1, 1, 0);
  return h;
}

template <typename T>
DecoderParams<T> DecoderParams<T>::make(ParamBuilder<T> b, Index fusion_dim) {
  DecoderParams p;
  p.local = GaussianHeads<T>::make(b.scope("local"), fusion_dim);
  p.global = GaussianHeads<T>::make(b.scope("global"), fusion_dim);
  // Zero head: an untrained model scores every pixel at logit 0.
  auto head = b.scope("seg_head");
  p.seg_head.weight = head.constant("weight", Shape{1, fusion_dim, 1, 1}, T(0));
  p.seg_head.bias = head.constant("bias", Shape{1}, T(0));
  return p;
}

template <typename T>
GaussianField<T> predict_distribution(const Tensor<T>& feature, const GaussianHeads<T>& heads,
                                      const SigmaMode& mode) {
  detail::require_rank(feature.shape(), 3, "predict_distribution", "feature");
  GaussianField<T> g;
  g.mu = heads.mu(feature);
  if (mode.zero) {
    g.sigma = Tensor<T>::zeros(g.mu.shape());
  } else {
    g.sigma = add_scalar(softplus(heads.sigma(feature)), static_cast<T>(mode.floor));
  }
  return g;
}

template <typename T>
Tensor<T> reparameterize(const GaussianField<T>& g, const Tensor<T>& eps) {
  if (g.mu.shape() != g.sigma.shape() || g.mu.shape() != eps.shape()) {
    throw DimensionError("reparameterize: mu " + shape_str(g.mu.shape()) + ", sigma " +
                         shape_str(g.sigma.shape()) + ", eps " + shape_str(eps.shape()));
  }
  return add(g.mu, mul(g.sigma, eps));
}

template <typename T>
std::vector<Tensor<T>> reparameterized_samples(const GaussianField<T>& g, int count, Rng& rng) {
  if (count < 2) {
    throw ValueError("reparameterized_samples: need at least 2 samples, got " +
                     std::to_string(count));
  }
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) out.push_back(reparameterize(g, randn<T>(g.mu.shape(), rng)));
  return out;
}

template <typename T>
Tensor<T> sample_variance(const std::vector<Tensor<T>>& samples) {
  if (samples.size() < 2) {
    throw ValueError("sample_variance: need at least 2 samples, got " +
                     std::to_string(samples.size()));
  }
  const Shape shape = samples.front().shape();
  for (const auto& s : samples) {
    if (s.shape() != shape) {
      throw DimensionError("sample_variance: sample shapes " + shape_str(shape) + " and " +
                           shape_str(s.shape()) + " differ");
    }
  }
  const auto n = static_cast<Index>(samples.size());
  const Index count = numel_of(shape);
  const auto ref = samples.front().data();
  std::vector<T> mean_dev(static_cast<std::size_t>(count), T(0));
  for (const auto& s : samples) {
    const auto d = s.data();
    for (Index i = 0; i < count; ++i) mean_dev[i] += d[i] - ref[i];
  }
  for (auto& v : mean_dev) v /= static_cast<T>(n);
  std::vector<T> var(static_cast<std::size_t>(count), T(0));
  for (const auto& s : samples) {
    const auto d = s.data();
    for (Index i = 0; i < count; ++i) {
      const T c = (d[i] - ref[i]) - mean_dev[i];
      var[i] += c * c;
    }
  }
  for (auto& v : var) v /= static_cast<T>(n - 1);

  return detail::make_result<T>(
      "sample_variance", shape, std::move(var), samples,
      [n, count, mean_dev = std::move(mean_dev)](detail::Node<T>& self) {
        const T k = T(2) / static_cast<T>(n - 1);
        const auto& ref_node = *self.inputs.front();
        for (auto& in : self.inputs) {
          T* g = in->grad_sink();
          if (!g) continue;
          for (Index i = 0; i < count; ++i) {
            const T c = (in->data[i] - ref_node.data[i]) - mean_dev[i];
            g[i] += k * c * self.grad[i];
          }
        }
      });
}

template <typename T>
Tensor<T> minmax_normalize(const Tensor<T>& x) {
  const auto lo = min_all(x);
  const auto hi = max_all(x);
  if (!(hi.item() > lo.item())) return Tensor<T>::zeros(x.shape());
  return div(sub(x, lo), sub(hi, lo));
}

template <typename T>
Tensor<T> uncertainty_map(const std::vector<Tensor<T>>& samples) {
  return minmax_normalize(sample_variance(samples));
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& local, const Tensor<T>& global, const Tensor<T>& u_local,
                    const Tensor<T>& u_global) {
  detail::require_rank(local.shape(), 3, "aggregate", "F_L");
  if (local.shape() != global.shape()) {
    throw DimensionError("aggregate: F_L " + shape_str(local.shape()) + " and F_G " +
                         shape_str(global.shape()) + " differ");
  }
  const Shape u_shape{1, local.dim(1), local.dim(2)};
  if (u_local.shape() != u_shape || u_global.shape() != u_shape) {
    throw DimensionError("aggregate: uncertainty maps must be " + shape_str(u_shape) + ", got " +
                         shape_str(u_local.shape()) + " and " + shape_str(u_global.shape()));
  }
  return add(mul(rsub_scalar(T(1), u_global), global), mul(rsub_scalar(T(1), u_local), local));
}

template <typename T>
Tensor<T> segmentation_head(const Tensor<T>& fused, const Conv2dLayer<T>& head) {
  detail::require_rank(fused.shape(), 3, "segmentation_head", "feature");
  return bilinear_upsample(head(fused), 4);
}

#define UAGLNET_INST(T)                                                                         \
  template struct GaussianHeads<T>;                                                             \
  template struct DecoderParams<T>;                                                             \
  template GaussianField<T> predict_distribution(const Tensor<T>&, const GaussianHeads<T>&,     \
                                                 const SigmaMode&);                             \
  template Tensor<T> reparameterize(const GaussianField<T>&, const Tensor<T>&);                 \
  template std::vector<Tensor<T>> reparameterized_samples(const GaussianField<T>&, int, Rng&);  \
  template Tensor<T> sample_variance(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> minmax_normalize(const Tensor<T>&);                                        \
  template Tensor<T> uncertainty_map(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> aggregate(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                               const Tensor<T>&);                                               \
  template Tensor<T> segmentation_head(const Tensor<T>&, const Conv2dLayer<T>&);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
