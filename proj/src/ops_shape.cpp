// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "op_util.hpp"
#include "uaglnet/ops.hpp"

namespace uaglnet {

using detail::make_result;
using detail::Node;

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " has " +
                         std::to_string(x.numel()) + " elements, target " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    T* gi = self.inputs[0]->grad_sink();
    if (!gi) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 2, "transpose2d", "input");
  const Index rows = x.dim(0);
  const Index cols = x.dim(1);
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) out[c * rows + r] = xs[r * cols + c];
  return make_result<T>("transpose2d", Shape{cols, rows}, std::move(out), {x},
                        [rows, cols](Node<T>& self) {
                          T* gi = self.inputs[0]->grad_sink();
                          if (!gi) return;
                          for (Index r = 0; r < rows; ++r)
                            for (Index c = 0; c < cols; ++c)
                              gi[r * cols + c] += self.grad[c * rows + r];
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, Index start, Index length) {
  const int a = detail::normalize_axis(axis, x.ndim());
  const auto sp = detail::split_axis(x.shape(), a);
  if (start < 0 || length <= 0 || start + length > sp.extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") out of bounds on axis " +
                         std::to_string(a) + " of extent " + std::to_string(sp.extent));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(a)] = length;
  const auto xs = x.data();
  std::vector<T> out(static_cast<std::size_t>(sp.outer * length * sp.inner));
  for (Index o = 0; o < sp.outer; ++o) {
    const T* src = xs.data() + (o * sp.extent + start) * sp.inner;
    std::copy(src, src + length * sp.inner, out.begin() + o * length * sp.inner);
  }
  return make_result<T>("slice", out_shape, std::move(out), {x},
                        [sp, start, length](Node<T>& self) {
                          T* gi = self.inputs[0]->grad_sink();
                          if (!gi) return;
                          const Index block = length * sp.inner;
                          for (Index o = 0; o < sp.outer; ++o) {
                            T* dst = gi + (o * sp.extent + start) * sp.inner;
                            const T* g = self.grad.data() + o * block;
                            for (Index i = 0; i < block; ++i) dst[i] += g[i];
                          }
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const int a = detail::normalize_axis(axis, parts[0].ndim());
  Shape out_shape = parts[0].shape();
  Index total = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != out_shape.size()) {
      throw DimensionError("concat: rank mismatch at input " + std::to_string(p));
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int>(d) != a && s[d] != out_shape[d]) {
        throw DimensionError("concat: input " + std::to_string(p) + " differs on axis " +
                             std::to_string(d) + " (" + std::to_string(s[d]) + " vs " +
                             std::to_string(out_shape[d]) + ")");
      }
    }
    total += s[static_cast<std::size_t>(a)];
  }
  out_shape[static_cast<std::size_t>(a)] = total;
  const auto sp = detail::split_axis(out_shape, a);
  std::vector<Index> extents;
  std::vector<T> out(static_cast<std::size_t>(numel_of(out_shape)));
  Index offset = 0;
  for (const auto& part : parts) {
    const Index e = part.dim(a);
    extents.push_back(e);
    const auto ps = part.data();
    for (Index o = 0; o < sp.outer; ++o) {
      std::copy(ps.begin() + o * e * sp.inner, ps.begin() + (o + 1) * e * sp.inner,
                out.begin() + (o * total + offset) * sp.inner);
    }
    offset += e;
  }
  return make_result<T>("concat", out_shape, std::move(out), parts,
                        [sp, total, extents = std::move(extents)](Node<T>& self) {
                          Index off = 0;
                          for (std::size_t p = 0; p < extents.size(); ++p) {
                            const Index e = extents[p];
                            T* gi = self.inputs[p]->grad_sink();
                            if (gi) {
                              for (Index o = 0; o < sp.outer; ++o) {
                                const T* g = self.grad.data() + (o * total + off) * sp.inner;
                                T* dst = gi + o * e * sp.inner;
                                for (Index i = 0; i < e * sp.inner; ++i) dst[i] += g[i];
                              }
                            }
                            off += e;
                          }
                        });
}

template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 3, "to_tokens", "input");
  return transpose2d(reshape(x, Shape{x.dim(0), x.dim(1) * x.dim(2)}));
}

template <typename T>
Tensor<T> from_tokens(const Tensor<T>& x, Index height, Index width) {
  detail::require_rank(x.shape(), 2, "from_tokens", "input");
  if (x.dim(0) != height * width) {
    throw DimensionError("from_tokens: token count " + std::to_string(x.dim(0)) +
                         " != " + std::to_string(height) + "x" + std::to_string(width));
  }
  return reshape(transpose2d(x), Shape{x.dim(1), height, width});
}

#define UAGLNET_INST(T)                                                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                           \
  template Tensor<T> transpose2d(const Tensor<T>&);                              \
  template Tensor<T> slice(const Tensor<T>&, int, Index, Index);                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                 \
  template Tensor<T> to_tokens(const Tensor<T>&);                                \
  template Tensor<T> from_tokens(const Tensor<T>&, Index, Index);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
