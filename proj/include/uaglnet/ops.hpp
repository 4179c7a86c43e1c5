// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Spatial tensors are channels-first
// [C, H, W]; token tensors are [N, C]. Zero padding everywhere.
#pragma once

#include <optional>
#include <vector>

#include "uaglnet/tensor.hpp"

namespace uaglnet {

// ---------------------------------------------------------------------------
// Elementwise. Binary operations broadcast numpy-style (trailing alignment,
// extent-1 axes stretch).
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
/// value - x
template <typename T> Tensor<T> rsub_scalar(T value, const Tensor<T>& x);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// log(1 + e^x) in the overflow-free form.
template <typename T> Tensor<T> softplus(const Tensor<T>& x);
/// Exact Gaussian error linear unit, x * Phi(x).
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

template <typename T> Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape);

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// Mean along one axis; the axis is kept with extent 1.
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, int axis);
/// Global maximum/minimum. The gradient flows to the first extremal element.
template <typename T> Tensor<T> max_all(const Tensor<T>& x);
template <typename T> Tensor<T> min_all(const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> transpose2d(const Tensor<T>& x);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, Index start, Index length);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
/// [C, H, W] -> [H*W, C]
template <typename T> Tensor<T> to_tokens(const Tensor<T>& x);
/// [H*W, C] -> [C, H, W]
template <typename T> Tensor<T> from_tokens(const Tensor<T>& x, Index height, Index width);

// ---------------------------------------------------------------------------
// Linear algebra and normalization
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// input [N, C_in] x weight [C_in, C_out] + bias [C_out]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);
/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis = -1);
/// Normalizes each fiber along `axis` to zero mean and unit (biased) variance,
/// then applies gain and shift of extent dim(axis).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift,
                     T eps = T(1e-6), int axis = -1);

// ---------------------------------------------------------------------------
// Convolution and resampling
// ---------------------------------------------------------------------------
/// Cross-correlation of input [C_in, H, W] with weight [C_out, C_in, kh, kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, int stride, int padding);
/// Per-channel k x k filtering, weight [C, 1, k, k], k odd, same-size output
/// when padding == (k - 1) / 2.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias, int padding);
/// weight [C_out, C_in, 1, 1] applied at every pixel.
template <typename T>
Tensor<T> pointwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias = std::nullopt);
/// Align-corners-false bilinear upsampling by an integer factor.
template <typename T> Tensor<T> bilinear_upsample(const Tensor<T>& input, int factor);

}  // namespace uaglnet
