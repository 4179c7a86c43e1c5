// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/nn.hpp"

#include <cmath>

namespace uaglnet {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> value) {
  for (const auto& [n, _] : entries_) {
    if (n == name) throw ConfigError("duplicate parameter name " + name);
  }
  value.requires_grad_(true);
  entries_.emplace_back(name, value);
  return value;
}

template <typename T>
std::optional<Tensor<T>> ParamStore<T>::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  return std::nullopt;
}

template <typename T>
Index ParamStore<T>::count(const std::string& prefix) const {
  Index total = 0;
  for (const auto& [n, t] : entries_) {
    if (n.compare(0, prefix.size(), prefix) == 0) total += t.numel();
  }
  return total;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

template <typename T>
ParamBuilder<T> ParamBuilder<T>::scope(const std::string& name) const {
  return ParamBuilder(*store_, *rng_, full_name(name));
}

template <typename T>
std::string ParamBuilder<T>::full_name(const std::string& name) const {
  return prefix_.empty() ? name : prefix_ + "." + name;
}

template <typename T>
Tensor<T> ParamBuilder<T>::fan_in_uniform(const std::string& name, Shape shape, Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return store_->add(full_name(name), rand_uniform<T>(shape, *rng_, -bound, bound));
}

template <typename T>
Tensor<T> ParamBuilder<T>::constant(const std::string& name, Shape shape, T value) {
  return store_->add(full_name(name), Tensor<T>(std::move(shape), value));
}

template <typename T>
Conv2dLayer<T> Conv2dLayer<T>::make(ParamBuilder<T> b, Index in, Index out, int kernel,
                                    int stride, int padding, bool with_bias) {
  Conv2dLayer layer;
  const Index fan_in = in * kernel * kernel;
  layer.weight = b.fan_in_uniform("weight", Shape{out, in, kernel, kernel}, fan_in);
  if (with_bias) layer.bias = b.fan_in_uniform("bias", Shape{out}, fan_in);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

template <typename T>
Tensor<T> Conv2dLayer<T>::operator()(const Tensor<T>& x) const {
  if (weight.dim(2) == 1 && weight.dim(3) == 1 && stride == 1 && padding == 0) {
    return pointwise_conv2d(x, weight, bias);
  }
  return conv2d(x, weight, bias, stride, padding);
}

template <typename T>
LinearLayer<T> LinearLayer<T>::make(ParamBuilder<T> b, Index in, Index out) {
  LinearLayer layer;
  layer.weight = b.fan_in_uniform("weight", Shape{in, out}, in);
  layer.bias = b.fan_in_uniform("bias", Shape{out}, in);
  return layer;
}

template <typename T>
LayerNormLayer<T> LayerNormLayer<T>::make(ParamBuilder<T> b, Index channels, double eps) {
  LayerNormLayer layer;
  layer.gain = b.constant("gain", Shape{channels}, T(1));
  layer.shift = b.constant("shift", Shape{channels}, T(0));
  layer.eps = static_cast<T>(eps);
  return layer;
}

template <typename T>
FfnLayer<T> FfnLayer<T>::make(ParamBuilder<T> b, Index channels, int ratio) {
  FfnLayer layer;
  layer.fc1 = LinearLayer<T>::make(b.scope("fc1"), channels, channels * ratio);
  layer.fc2 = LinearLayer<T>::make(b.scope("fc2"), channels * ratio, channels);
  return layer;
}

template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, double rate, const ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0) return branch;
  if (!ctx.rng) throw ConfigError("drop_path in training mode needs an rng");
  if (ctx.rng->bernoulli(rate)) return scale(branch, T(0));
  return scale(branch, static_cast<T>(1.0 / (1.0 - rate)));
}

template class ParamStore<float>;
template class ParamStore<double>;
template class ParamBuilder<float>;
template class ParamBuilder<double>;
template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct LinearLayer<float>;
template struct LinearLayer<double>;
template struct LayerNormLayer<float>;
template struct LayerNormLayer<double>;
template struct FfnLayer<float>;
template struct FfnLayer<double>;
template Tensor<float> drop_path(const Tensor<float>&, double, const ForwardContext&);
template Tensor<double> drop_path(const Tensor<double>&, double, const ForwardContext&);

}  // namespace uaglnet
