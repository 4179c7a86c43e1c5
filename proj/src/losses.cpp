// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/losses.hpp"

#include <cmath>

#include "op_util.hpp"

namespace uaglnet {

void LossWeights::validate() const {
  for (double w : {gamma, eta, lambda1, lambda2}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": prediction " + shape_str(a.shape()) +
                         " and target " + shape_str(b.shape()) + " differ");
  }
}

}  // namespace

template <typename T>
void require_binary(const Tensor<T>& target, const char* op) {
  const auto d = target.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] != T(0) && d[i] != T(1)) {
      throw ValueError(std::string(op) + ": target must be binary, found " +
                       std::to_string(static_cast<double>(d[i])) + " at flat index " +
                       std::to_string(i));
    }
  }
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  require_same_shape(logits, target, "bce_loss");
  require_binary(target, "bce_loss");
  return mean(sub(softplus(logits), mul(logits, target)));
}

template <typename T>
Tensor<T> bce_prob_loss(const Tensor<T>& prob, const Tensor<T>& target, T eps) {
  require_same_shape(prob, target, "bce_prob_loss");
  const auto p = clamp(prob, eps, T(1) - eps);
  const auto pos = mul(target, log(p));
  const auto negv = mul(rsub_scalar(T(1), target), log(rsub_scalar(T(1), p)));
  return neg(mean(add(pos, negv)));
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, T smooth) {
  require_same_shape(logits, target, "dice_loss");
  const auto p = sigmoid(logits);
  const auto inter = sum(mul(p, target));
  const auto num = add_scalar(scale(inter, T(2)), smooth);
  const auto den = add_scalar(add(sum(p), sum(target)), smooth);
  return rsub_scalar(T(1), div(num, den));
}

template <typename T>
Tensor<T> boundary_extract(const Tensor<T>& mask) {
  detail::require_rank(mask.shape(), 3, "boundary_extract", "mask");
  const Index items = mask.dim(0);
  std::vector<T> kernel(static_cast<std::size_t>(items * 9), T(-1));
  for (Index c = 0; c < items; ++c) kernel[static_cast<std::size_t>(c * 9 + 4)] = T(8);
  const Tensor<T> weight(Shape{items, 1, 3, 3}, std::move(kernel));
  return clamp(abs(depthwise_conv2d(mask, weight, std::optional<Tensor<T>>(), 1)), T(0), T(1));
}

template <typename T>
Tensor<T> interior(const Tensor<T>& map) {
  detail::require_rank(map.shape(), 3, "interior", "map");
  if (map.dim(1) < 3 || map.dim(2) < 3) {
    throw DimensionError("interior: map " + shape_str(map.shape()) + " has no interior");
  }
  return slice(slice(map, 1, 1, map.dim(1) - 2), 2, 1, map.dim(2) - 2);
}

template <typename T>
Tensor<T> boundary_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  require_same_shape(logits, target, "boundary_loss");
  const auto pred_edges = interior(boundary_extract(sigmoid(logits)));
  const auto true_edges = interior(boundary_extract(target.detach()));
  return bce_prob_loss(pred_edges, true_edges);
}

template <typename T>
SegLoss<T> seg_loss(const Tensor<T>& logits, const Tensor<T>& target, double gamma) {
  SegLoss<T> s;
  s.dice = dice_loss(logits, target);
  s.bce = bce_loss(logits, target);
  s.total = add(s.dice, s.bce);
  if (gamma != 0.0) {
    s.boundary = boundary_loss(logits, target);
    s.total = add(s.total, scale(s.boundary, static_cast<T>(gamma)));
  } else {
    s.boundary = Tensor<T>::scalar(T(0));
  }
  return s;
}

template <typename T>
Tensor<T> kl_standard_normal(const GaussianField<T>& g) {
  if (g.mu.shape() != g.sigma.shape()) {
    throw DimensionError("kl_standard_normal: mu " + shape_str(g.mu.shape()) + " and sigma " +
                         shape_str(g.sigma.shape()) + " differ");
  }
  for (T s : g.sigma.data()) {
    if (!(s > T(0))) throw ValueError("kl_standard_normal: sigma must be > 0");
  }
  const auto var = square(g.sigma);
  const auto inner = sub(add_scalar(add(square(g.mu), var), T(-1)), log(var));
  return scale(mean(inner), T(0.5));
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& map, Index height, Index width) {
  detail::require_rank(map.shape(), 3, "resize_nearest", "map");
  const Index items = map.dim(0), in_h = map.dim(1), in_w = map.dim(2);
  if (height < 1 || width < 1) throw DimensionError("resize_nearest: empty output size");
  std::vector<T> out(static_cast<std::size_t>(items * height * width));
  const auto src = map.data();
  for (Index c = 0; c < items; ++c) {
    for (Index y = 0; y < height; ++y) {
      const Index sy = std::min(in_h - 1, (2 * y + 1) * in_h / (2 * height));
      for (Index x = 0; x < width; ++x) {
        const Index sx = std::min(in_w - 1, (2 * x + 1) * in_w / (2 * width));
        out[static_cast<std::size_t>((c * height + y) * width + x)] =
            src[static_cast<std::size_t>((c * in_h + sy) * in_w + sx)];
      }
    }
  }
  return Tensor<T>(Shape{items, height, width}, std::move(out));
}

template <typename T>
UncLoss<T> uncertainty_loss(const GaussianField<T>& g, const Tensor<T>& target, double eta,
                            Rng& rng) {
  detail::require_rank(g.mu.shape(), 3, "uncertainty_loss", "mu");
  const auto sample = reparameterize(g, randn<T>(g.mu.shape(), rng));
  const auto small = resize_nearest(target.detach(), g.mu.dim(1), g.mu.dim(2));
  UncLoss<T> u;
  u.bce = bce_loss(sample, small);
  u.kl = kl_standard_normal(g);
  u.total = add(u.bce, scale(u.kl, static_cast<T>(eta)));
  return u;
}

template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& logits, const Tensor<T>& target,
                        const GaussianField<T>& local, const GaussianField<T>& global,
                        const LossWeights& w, Rng& rng, bool with_uncertainty) {
  w.validate();
  TotalLoss<T> t;
  t.seg = seg_loss(logits, target, w.gamma);
  t.total = t.seg.total;
  if (with_uncertainty) {
    t.unc_global = uncertainty_loss(global, target, w.eta, rng);
    t.unc_local = uncertainty_loss(local, target, w.eta, rng);
    t.total = add(add(t.total, scale(t.unc_global.total, static_cast<T>(w.lambda1))),
                  scale(t.unc_local.total, static_cast<T>(w.lambda2)));
  }
  return t;
}

#define UAGLNET_INST(T)                                                                        \
  template void require_binary(const Tensor<T>&, const char*);                                 \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> bce_prob_loss(const Tensor<T>&, const Tensor<T>&, T);                     \
  template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, T);                         \
  template Tensor<T> boundary_extract(const Tensor<T>&);                                       \
  template Tensor<T> interior(const Tensor<T>&);                                               \
  template Tensor<T> boundary_loss(const Tensor<T>&, const Tensor<T>&);                        \
  template SegLoss<T> seg_loss(const Tensor<T>&, const Tensor<T>&, double);                    \
  template Tensor<T> kl_standard_normal(const GaussianField<T>&);                              \
  template Tensor<T> resize_nearest(const Tensor<T>&, Index, Index);                           \
  template UncLoss<T> uncertainty_loss(const GaussianField<T>&, const Tensor<T>&, double,      \
                                       Rng&);                                                  \
  template TotalLoss<T> total_loss(const Tensor<T>&, const Tensor<T>&, const GaussianField<T>&, \
                                   const GaussianField<T>&, const LossWeights&, Rng&, bool);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
