// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include "op_util.hpp"
#include "uaglnet/ops.hpp"

namespace uaglnet {

using detail::make_result;
using detail::Node;

namespace {

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, D dfdx) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  return make_result<T>(name, x.shape(), std::move(out), {x}, [dfdx](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* gi = in.grad_sink();
    if (!gi) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      gi[i] += self.grad[i] * dfdx(in.data[i], self.data[i]);
  });
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Index da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const Index db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b) +
                           " along axis " + std::to_string(i));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

template <typename T>
Tensor<T> binary(const Tensor<T>& a0, const Tensor<T>& b0, BinaryKind kind, const char* name) {
  Tensor<T> a = a0;
  Tensor<T> b = b0;
  if (a.shape() != b.shape()) {
    const Shape s = broadcast_shape(a.shape(), b.shape());
    if (a.shape() != s) a = broadcast_to(a, s);
    if (b.shape() != s) b = broadcast_to(b, s);
  }
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<T> out(as.size());
  switch (kind) {
    case BinaryKind::kAdd:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[i];
      break;
    case BinaryKind::kSub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] - bs[i];
      break;
    case BinaryKind::kMul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[i];
      break;
    case BinaryKind::kDiv:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] / bs[i];
      break;
  }
  return make_result<T>(name, a.shape(), std::move(out), {a, b}, [kind](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    T* ga = na.grad_sink();
    T* gb = nb.grad_sink();
    const auto& g = self.grad;
    const std::size_t n = g.size();
    switch (kind) {
      case BinaryKind::kAdd:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        break;
      case BinaryKind::kSub:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
        break;
      case BinaryKind::kMul:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * nb.data[i];
        if (gb) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * na.data[i];
        break;
      case BinaryKind::kDiv:
        if (ga) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] / nb.data[i];
        if (gb)
          for (std::size_t i = 0; i < n; ++i)
            gb[i] -= g[i] * na.data[i] / (nb.data[i] * nb.data[i]);
        break;
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& shape) {
  const Shape& in = x.shape();
  if (in.size() > shape.size()) {
    throw DimensionError("broadcast_to: cannot reduce rank of " + shape_str(in) + " to " +
                         shape_str(shape));
  }
  const std::size_t lead = shape.size() - in.size();
  // Input stride per output axis; zero where the input is stretched.
  std::vector<Index> stride(shape.size(), 0);
  Index s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t o = i + lead;
    if (in[i] == shape[o]) {
      stride[o] = s;
    } else if (in[i] != 1) {
      throw DimensionError("broadcast_to: axis " + std::to_string(o) + " has extent " +
                           std::to_string(in[i]) + ", target " + std::to_string(shape[o]));
    }
    s *= in[i];
  }
  const Index n = numel_of(shape);
  std::vector<Index> src(static_cast<std::size_t>(n));
  std::vector<Index> counter(shape.size(), 0);
  Index offset = 0;
  for (Index k = 0; k < n; ++k) {
    src[static_cast<std::size_t>(k)] = offset;
    for (std::size_t ax = shape.size(); ax-- > 0;) {
      ++counter[ax];
      offset += stride[ax];
      if (counter[ax] < shape[ax]) break;
      offset -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  const auto xs = x.data();
  std::vector<T> out(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) out[k] = xs[static_cast<std::size_t>(src[k])];
  return make_result<T>("broadcast_to", shape, std::move(out), {x},
                        [src = std::move(src)](Node<T>& self) {
                          T* gi = self.inputs[0]->grad_sink();
                          if (!gi) return;
                          for (std::size_t k = 0; k < src.size(); ++k)
                            gi[src[k]] += self.grad[k];
                        });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kAdd, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kSub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kMul, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinaryKind::kDiv, "div");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(
      x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> rsub_scalar(T value, const Tensor<T>& x) {
  return unary(
      x, "rsub_scalar", [value](T v) { return value - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!(v > T(0))) throw ValueError("log of non-positive value");
  }
  return unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (lo > hi) throw ValueError("clamp: lo > hi");
  return unary(
      x, "clamp", [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid",
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, "softplus", [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return unary(
      x, "gelu", [](T v) { return T(0.5) * v * (T(1) + std::erf(v * kInvSqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * kInvSqrt2));
        const T pdf = kInvSqrt2Pi * std::exp(T(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>("sum", Shape{1}, {acc}, {x}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* gi = in.grad_sink();
    if (!gi) return;
    for (std::size_t i = 0; i < in.data.size(); ++i) gi[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.numel());
  return make_result<T>("mean", Shape{1}, {acc * inv}, {x}, [inv](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* gi = in.grad_sink();
    if (!gi) return;
    const T g = self.grad[0] * inv;
    for (std::size_t i = 0; i < in.data.size(); ++i) gi[i] += g;
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, int axis) {
  const int a = detail::normalize_axis(axis, x.ndim());
  const auto sp = detail::split_axis(x.shape(), a);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(a)] = 1;
  const auto xs = x.data();
  std::vector<T> out(static_cast<std::size_t>(sp.outer * sp.inner), T(0));
  const T inv = T(1) / static_cast<T>(sp.extent);
  for (Index o = 0; o < sp.outer; ++o)
    for (Index e = 0; e < sp.extent; ++e)
      for (Index i = 0; i < sp.inner; ++i)
        out[o * sp.inner + i] += xs[(o * sp.extent + e) * sp.inner + i];
  for (T& v : out) v *= inv;
  return make_result<T>("mean_axis", out_shape, std::move(out), {x}, [sp, inv](Node<T>& self) {
    T* gi = self.inputs[0]->grad_sink();
    if (!gi) return;
    for (Index o = 0; o < sp.outer; ++o)
      for (Index e = 0; e < sp.extent; ++e)
        for (Index i = 0; i < sp.inner; ++i)
          gi[(o * sp.extent + e) * sp.inner + i] += self.grad[o * sp.inner + i] * inv;
  });
}

namespace {
template <typename T, typename Cmp>
Tensor<T> extremum(const Tensor<T>& x, Cmp better, const char* name) {
  const auto xs = x.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (better(xs[i], xs[best])) best = i;
  return make_result<T>(name, Shape{1}, {xs[best]}, {x}, [best](Node<T>& self) {
    T* gi = self.inputs[0]->grad_sink();
    if (gi) gi[best] += self.grad[0];
  });
}
}  // namespace

template <typename T>
Tensor<T> max_all(const Tensor<T>& x) {
  return extremum(x, [](T a, T b) { return a > b; }, "max_all");
}

template <typename T>
Tensor<T> min_all(const Tensor<T>& x) {
  return extremum(x, [](T a, T b) { return a < b; }, "min_all");
}

#define UAGLNET_INST(T)                                                        \
  template Tensor<T> broadcast_to(const Tensor<T>&, const Shape&);             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> scale(const Tensor<T>&, T);                               \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                          \
  template Tensor<T> rsub_scalar(T, const Tensor<T>&);                         \
  template Tensor<T> neg(const Tensor<T>&);                                    \
  template Tensor<T> square(const Tensor<T>&);                                 \
  template Tensor<T> exp(const Tensor<T>&);                                    \
  template Tensor<T> log(const Tensor<T>&);                                    \
  template Tensor<T> abs(const Tensor<T>&);                                    \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                            \
  template Tensor<T> sigmoid(const Tensor<T>&);                                \
  template Tensor<T> softplus(const Tensor<T>&);                               \
  template Tensor<T> gelu(const Tensor<T>&);                                   \
  template Tensor<T> sum(const Tensor<T>&);                                    \
  template Tensor<T> mean(const Tensor<T>&);                                   \
  template Tensor<T> mean_axis(const Tensor<T>&, int);                         \
  template Tensor<T> max_all(const Tensor<T>&);                                \
  template Tensor<T> min_all(const Tensor<T>&);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
