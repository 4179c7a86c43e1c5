// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "op_util.hpp"
#include "uaglnet/ops.hpp"

namespace uaglnet {

using detail::make_result;
using detail::Node;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a.shape(), 2, "matmul", "lhs");
  detail::require_rank(b.shape(), 2, "matmul", "rhs");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimension mismatch, lhs axis 1 = " + std::to_string(k) +
                         ", rhs axis 0 = " + std::to_string(b.dim(0)));
  }
  std::vector<T> out(static_cast<std::size_t>(m * n), T(0));
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result<T>("matmul", Shape{m, n}, std::move(out), {a, b}, [m, n, k](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    if (T* ga = na.grad_sink()) kernels::gemm_nt(m, n, k, self.grad.data(), nb.data.data(), ga);
    if (T* gb = nb.grad_sink()) kernels::gemm_tn(m, n, k, na.data.data(), self.grad.data(), gb);
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require_rank(input.shape(), 2, "linear", "input");
  detail::require_rank(weight.shape(), 2, "linear", "weight");
  const Index n = input.dim(0), cin = input.dim(1), cout = weight.dim(1);
  if (weight.dim(0) != cin) {
    throw DimensionError("linear: input axis 1 has " + std::to_string(cin) +
                         " features, weight axis 0 has " + std::to_string(weight.dim(0)));
  }
  if (bias.numel() != cout) {
    throw DimensionError("linear: bias has " + std::to_string(bias.numel()) +
                         " entries, weight axis 1 has " + std::to_string(cout));
  }
  std::vector<T> out(static_cast<std::size_t>(n * cout));
  const auto bs = bias.data();
  for (Index i = 0; i < n; ++i) std::copy(bs.begin(), bs.end(), out.begin() + i * cout);
  kernels::gemm_nn(n, cout, cin, input.data().data(), weight.data().data(), out.data());
  return make_result<T>(
      "linear", Shape{n, cout}, std::move(out), {input, weight, bias},
      [n, cin, cout](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        auto& nb = *self.inputs[2];
        const T* g = self.grad.data();
        if (T* gx = nx.grad_sink()) kernels::gemm_nt(n, cout, cin, g, nw.data.data(), gx);
        if (T* gw = nw.grad_sink()) kernels::gemm_tn(n, cout, cin, nx.data.data(), g, gw);
        if (T* gb = nb.grad_sink())
          for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < cout; ++j) gb[j] += g[i * cout + j];
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int a = detail::normalize_axis(axis, x.ndim());
  const auto sp = detail::split_axis(x.shape(), a);
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (Index o = 0; o < sp.outer; ++o) {
    for (Index i = 0; i < sp.inner; ++i) {
      const Index base = o * sp.extent * sp.inner + i;
      T mx = xs[base];
      for (Index e = 1; e < sp.extent; ++e) mx = std::max(mx, xs[base + e * sp.inner]);
      T total = 0;
      for (Index e = 0; e < sp.extent; ++e) {
        const T v = std::exp(xs[base + e * sp.inner] - mx);
        out[base + e * sp.inner] = v;
        total += v;
      }
      const T inv = T(1) / total;
      for (Index e = 0; e < sp.extent; ++e) out[base + e * sp.inner] *= inv;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x}, [sp](Node<T>& self) {
    T* gi = self.inputs[0]->grad_sink();
    if (!gi) return;
    const auto& y = self.data;
    const auto& g = self.grad;
    for (Index o = 0; o < sp.outer; ++o) {
      for (Index i = 0; i < sp.inner; ++i) {
        const Index base = o * sp.extent * sp.inner + i;
        T dot = 0;
        for (Index e = 0; e < sp.extent; ++e) dot += g[base + e * sp.inner] * y[base + e * sp.inner];
        for (Index e = 0; e < sp.extent; ++e) {
          const Index idx = base + e * sp.inner;
          gi[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& shift, T eps,
                     int axis) {
  const int a = detail::normalize_axis(axis, x.ndim());
  const auto sp = detail::split_axis(x.shape(), a);
  if (gain.numel() != sp.extent || shift.numel() != sp.extent) {
    throw DimensionError("layer_norm: gain/shift length must equal extent " +
                         std::to_string(sp.extent) + " of axis " + std::to_string(a));
  }
  const auto xs = x.data();
  const auto gs = gain.data();
  const auto bs = shift.data();
  std::vector<T> out(xs.size());
  // Normalized values and per-fiber inverse std, needed by the adjoint.
  std::vector<T> xhat(xs.size());
  std::vector<T> inv_std(static_cast<std::size_t>(sp.outer * sp.inner));
  const T inv_n = T(1) / static_cast<T>(sp.extent);
  for (Index o = 0; o < sp.outer; ++o) {
    for (Index i = 0; i < sp.inner; ++i) {
      const Index base = o * sp.extent * sp.inner + i;
      T mu = 0;
      for (Index e = 0; e < sp.extent; ++e) mu += xs[base + e * sp.inner];
      mu *= inv_n;
      T var = 0;
      for (Index e = 0; e < sp.extent; ++e) {
        const T d = xs[base + e * sp.inner] - mu;
        var += d * d;
      }
      var *= inv_n;
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[o * sp.inner + i] = is;
      for (Index e = 0; e < sp.extent; ++e) {
        const Index idx = base + e * sp.inner;
        xhat[idx] = (xs[idx] - mu) * is;
        out[idx] = xhat[idx] * gs[e] + bs[e];
      }
    }
  }
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gain, shift},
      [sp, inv_n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        T* gx = nx.grad_sink();
        T* gg = ng.grad_sink();
        T* gb = nb.grad_sink();
        const auto& g = self.grad;
        for (Index o = 0; o < sp.outer; ++o) {
          for (Index i = 0; i < sp.inner; ++i) {
            const Index base = o * sp.extent * sp.inner + i;
            T sum_d = 0;
            T sum_dx = 0;
            for (Index e = 0; e < sp.extent; ++e) {
              const Index idx = base + e * sp.inner;
              const T d = g[idx] * ng.data[e];
              sum_d += d;
              sum_dx += d * xhat[idx];
              if (gg) gg[e] += g[idx] * xhat[idx];
              if (gb) gb[e] += g[idx];
            }
            if (!gx) continue;
            const T is = inv_std[o * sp.inner + i];
            for (Index e = 0; e < sp.extent; ++e) {
              const Index idx = base + e * sp.inner;
              const T d = g[idx] * ng.data[e];
              gx[idx] += is * (d - inv_n * sum_d - xhat[idx] * inv_n * sum_dx);
            }
          }
        }
      });
}

#define UAGLNET_INST(T)                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> softmax(const Tensor<T>&, int);                                      \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T, int);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
