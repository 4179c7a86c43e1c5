// SPDX-License-Identifier: Apache-2.0
//
// Parameter registry and the small layers shared by encoder, fusion and
// decoder.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uaglnet/ops.hpp"
#include "uaglnet/rng.hpp"
#include "uaglnet/tensor.hpp"

namespace uaglnet {

/// Named trainable tensors in creation order.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> value);

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::optional<Tensor<T>> find(const std::string& name) const;
  /// Scalar count of all parameters whose name starts with `prefix`.
  Index count(const std::string& prefix = "") const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

/// Creates parameters under a dotted name prefix.
template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<T>& store, Rng& rng, std::string prefix = "")
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  ParamBuilder scope(const std::string& name) const;
  std::string full_name(const std::string& name) const;

  /// U(-bound, bound) with bound = 1/sqrt(fan_in).
  Tensor<T> fan_in_uniform(const std::string& name, Shape shape, Index fan_in);
  Tensor<T> constant(const std::string& name, Shape shape, T value);

 private:
  ParamStore<T>* store_;
  Rng* rng_;
  std::string prefix_;
};

/// Training flag and randomness source for stochastic layers.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
  int stride = 1;
  int padding = 0;

  static Conv2dLayer make(ParamBuilder<T> b, Index in, Index out, int kernel, int stride,
                          int padding, bool with_bias = true);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;

  static LinearLayer make(ParamBuilder<T> b, Index in, Index out);
  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gain;
  Tensor<T> shift;
  T eps = T(1e-6);

  static LayerNormLayer make(ParamBuilder<T> b, Index channels, double eps);
  Tensor<T> operator()(const Tensor<T>& x, int axis) const {
    return layer_norm(x, gain, shift, eps, axis);
  }
};

/// Token-wise feed-forward network: linear -> GELU -> linear.
template <typename T>
struct FfnLayer {
  LinearLayer<T> fc1;
  LinearLayer<T> fc2;

  static FfnLayer make(ParamBuilder<T> b, Index channels, int ratio);
  Tensor<T> operator()(const Tensor<T>& tokens) const { return fc2(gelu(fc1(tokens))); }
};

/// Stochastic depth on a residual branch: during training the branch is
/// dropped with probability `rate` and otherwise rescaled by 1/(1 - rate).
template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, double rate, const ForwardContext& ctx);

}  // namespace uaglnet
