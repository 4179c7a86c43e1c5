// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "op_util.hpp"
#include "uaglnet/ops.hpp"

namespace uaglnet {

using detail::make_result;
using detail::Node;

namespace {

struct ConvGeometry {
  Index cin, h, w, cout, kh, kw, ho, wo;
  int stride, padding;
};

Index floor_div(Index a, Index b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Output columns [lo, hi) whose input column ox*stride + k - padding is in range.
std::pair<Index, Index> valid_range(Index extent_in, Index extent_out, Index k, int stride,
                                    int padding) {
  const Index lo = std::max<Index>(0, -floor_div(k - padding, stride));
  const Index hi = std::min<Index>(extent_out, floor_div(extent_in - 1 + padding - k, stride) + 1);
  return {lo, std::max(lo, hi)};
}

// col[(ci*kh + ky)*kw + kx, oy*wo + ox] = input[ci, oy*s + ky - p, ox*s + kx - p]
template <typename T>
void im2col(const ConvGeometry& g, const T* in, T* col) {
  const Index plane = g.ho * g.wo;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        T* dst = col + ((ci * g.kh + ky) * g.kw + kx) * plane;
        std::fill(dst, dst + plane, T(0));
        const auto [xlo, xhi] = valid_range(g.w, g.wo, kx, g.stride, g.padding);
        const auto [ylo, yhi] = valid_range(g.h, g.ho, ky, g.stride, g.padding);
        for (Index oy = ylo; oy < yhi; ++oy) {
          const T* src = in + (ci * g.h + oy * g.stride + ky - g.padding) * g.w;
          T* row = dst + oy * g.wo;
          for (Index ox = xlo; ox < xhi; ++ox) row[ox] = src[ox * g.stride + kx - g.padding];
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* in_grad) {
  const Index plane = g.ho * g.wo;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        const T* src = col + ((ci * g.kh + ky) * g.kw + kx) * plane;
        const auto [xlo, xhi] = valid_range(g.w, g.wo, kx, g.stride, g.padding);
        const auto [ylo, yhi] = valid_range(g.h, g.ho, ky, g.stride, g.padding);
        for (Index oy = ylo; oy < yhi; ++oy) {
          T* dst = in_grad + (ci * g.h + oy * g.stride + ky - g.padding) * g.w;
          const T* row = src + oy * g.wo;
          for (Index ox = xlo; ox < xhi; ++ox) dst[ox * g.stride + kx - g.padding] += row[ox];
        }
      }
    }
  }
}

template <typename T>
void check_bias(const std::optional<Tensor<T>>& bias, Index channels, const char* op) {
  if (bias && bias->numel() != channels) {
    throw DimensionError(std::string(op) + ": bias axis 0 has " + std::to_string(bias->numel()) +
                         " entries, expected " + std::to_string(channels));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, int stride, int padding) {
  detail::require_rank(input.shape(), 3, "conv2d", "input");
  detail::require_rank(weight.shape(), 4, "conv2d", "weight");
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1, padding >= 0");
  ConvGeometry g{};
  g.cin = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (weight.dim(1) != g.cin) {
    throw DimensionError("conv2d: weight axis 1 (" + std::to_string(weight.dim(1)) +
                         ") does not match input axis 0 (" + std::to_string(g.cin) + ")");
  }
  if (g.h + 2 * padding < g.kh) throw DimensionError("conv2d: input axis 1 smaller than kernel");
  if (g.w + 2 * padding < g.kw) throw DimensionError("conv2d: input axis 2 smaller than kernel");
  check_bias(bias, g.cout, "conv2d");
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  const Index plane = g.ho * g.wo;
  const Index patch = g.cin * g.kh * g.kw;
  std::vector<T> col(static_cast<std::size_t>(patch * plane));
  im2col(g, input.data().data(), col.data());
  std::vector<T> out(static_cast<std::size_t>(g.cout * plane), T(0));
  if (bias) {
    for (Index co = 0; co < g.cout; ++co)
      std::fill(out.begin() + co * plane, out.begin() + (co + 1) * plane, (*bias)[co]);
  }
  kernels::gemm_nn(g.cout, plane, patch, weight.data().data(), col.data(), out.data());

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>("conv2d", Shape{g.cout, g.ho, g.wo}, std::move(out), std::move(inputs),
                        [g, plane, patch](Node<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          const T* gout = self.grad.data();
                          if (self.inputs.size() > 2) {
                            if (T* gb = self.inputs[2]->grad_sink()) {
                              for (Index co = 0; co < g.cout; ++co) {
                                T acc = 0;
                                for (Index i = 0; i < plane; ++i) acc += gout[co * plane + i];
                                gb[co] += acc;
                              }
                            }
                          }
                          T* gw = nw.grad_sink();
                          T* gx = nx.grad_sink();
                          if (!gw && !gx) return;
                          std::vector<T> col(static_cast<std::size_t>(patch * plane));
                          if (gw) {
                            im2col(g, nx.data.data(), col.data());
                            kernels::gemm_nt(g.cout, plane, patch, gout, col.data(), gw);
                          }
                          if (gx) {
                            std::fill(col.begin(), col.end(), T(0));
                            kernels::gemm_tn(g.cout, plane, patch, nw.data.data(), gout,
                                             col.data());
                            col2im(g, col.data(), gx);
                          }
                        });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias, int padding) {
  detail::require_rank(input.shape(), 3, "depthwise_conv2d", "input");
  detail::require_rank(weight.shape(), 4, "depthwise_conv2d", "weight");
  const Index c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Index k = weight.dim(2);
  if (weight.dim(3) != k) throw ConfigError("depthwise_conv2d: kernel must be square");
  if (k % 2 == 0) throw ConfigError("depthwise_conv2d: kernel size must be odd, got " + std::to_string(k));
  if (weight.dim(0) != c || weight.dim(1) != 1) {
    throw DimensionError("depthwise_conv2d: weight " + shape_str(weight.shape()) +
                         " does not match input axis 0 (" + std::to_string(c) + ")");
  }
  if (padding < 0) throw ConfigError("depthwise_conv2d: negative padding");
  check_bias(bias, c, "depthwise_conv2d");
  const Index ho = h + 2 * padding - k + 1;
  const Index wo = w + 2 * padding - k + 1;
  if (ho <= 0 || wo <= 0) throw DimensionError("depthwise_conv2d: input smaller than kernel");

  const auto xs = input.data();
  const auto ws = weight.data();
  std::vector<T> out(static_cast<std::size_t>(c * ho * wo));
  for (Index ch = 0; ch < c; ++ch) {
    T* op = out.data() + ch * ho * wo;
    std::fill(op, op + ho * wo, bias ? (*bias)[ch] : T(0));
    const T* ip = xs.data() + ch * h * w;
    for (Index ky = 0; ky < k; ++ky) {
      const auto [ylo, yhi] = valid_range(h, ho, ky, 1, padding);
      for (Index kx = 0; kx < k; ++kx) {
        const T wv = ws[(ch * k + ky) * k + kx];
        const auto [xlo, xhi] = valid_range(w, wo, kx, 1, padding);
        for (Index oy = ylo; oy < yhi; ++oy) {
          const T* src = ip + (oy + ky - padding) * w + kx - padding;
          T* dst = op + oy * wo;
          for (Index ox = xlo; ox < xhi; ++ox) dst[ox] += wv * src[ox];
        }
      }
    }
  }
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(
      "depthwise_conv2d", Shape{c, ho, wo}, std::move(out), std::move(inputs),
      [c, h, w, k, ho, wo, padding](Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        T* gx = nx.grad_sink();
        T* gw = nw.grad_sink();
        T* gb = self.inputs.size() > 2 ? self.inputs[2]->grad_sink() : nullptr;
        for (Index ch = 0; ch < c; ++ch) {
          const T* gp = self.grad.data() + ch * ho * wo;
          if (gb) {
            T acc = 0;
            for (Index i = 0; i < ho * wo; ++i) acc += gp[i];
            gb[ch] += acc;
          }
          const T* ip = nx.data.data() + ch * h * w;
          for (Index ky = 0; ky < k; ++ky) {
            const auto [ylo, yhi] = valid_range(h, ho, ky, 1, padding);
            for (Index kx = 0; kx < k; ++kx) {
              const Index widx = (ch * k + ky) * k + kx;
              const T wv = nw.data[widx];
              const auto [xlo, xhi] = valid_range(w, wo, kx, 1, padding);
              T acc = 0;
              for (Index oy = ylo; oy < yhi; ++oy) {
                const Index row = (oy + ky - padding) * w + kx - padding;
                const T* g = gp + oy * wo;
                if (gw)
                  for (Index ox = xlo; ox < xhi; ++ox) acc += g[ox] * ip[row + ox];
                if (gx) {
                  T* dst = gx + ch * h * w + row;
                  for (Index ox = xlo; ox < xhi; ++ox) dst[ox] += wv * g[ox];
                }
              }
              if (gw) gw[widx] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> pointwise_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const std::optional<Tensor<T>>& bias) {
  detail::require_rank(input.shape(), 3, "pointwise_conv2d", "input");
  detail::require_rank(weight.shape(), 4, "pointwise_conv2d", "weight");
  const Index cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Index cout = weight.dim(0);
  if (weight.dim(1) != cin || weight.dim(2) != 1 || weight.dim(3) != 1) {
    throw DimensionError("pointwise_conv2d: weight " + shape_str(weight.shape()) +
                         " incompatible with input channels on axis 0 (" + std::to_string(cin) +
                         ")");
  }
  check_bias(bias, cout, "pointwise_conv2d");
  const Index plane = h * w;
  std::vector<T> out(static_cast<std::size_t>(cout * plane), T(0));
  if (bias) {
    for (Index co = 0; co < cout; ++co)
      std::fill(out.begin() + co * plane, out.begin() + (co + 1) * plane, (*bias)[co]);
  }
  kernels::gemm_nn(cout, plane, cin, weight.data().data(), input.data().data(), out.data());
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>("pointwise_conv2d", Shape{cout, h, w}, std::move(out), std::move(inputs),
                        [cin, cout, plane](Node<T>& self) {
                          auto& nx = *self.inputs[0];
                          auto& nw = *self.inputs[1];
                          const T* g = self.grad.data();
                          if (T* gx = nx.grad_sink())
                            kernels::gemm_tn(cout, plane, cin, nw.data.data(), g, gx);
                          if (T* gw = nw.grad_sink())
                            kernels::gemm_nt(cout, plane, cin, g, nx.data.data(), gw);
                          if (self.inputs.size() > 2) {
                            if (T* gb = self.inputs[2]->grad_sink()) {
                              for (Index co = 0; co < cout; ++co) {
                                T acc = 0;
                                for (Index i = 0; i < plane; ++i) acc += g[co * plane + i];
                                gb[co] += acc;
                              }
                            }
                          }
                        });
}

namespace {
struct Interp {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

// Source coordinate (dst + 0.5) / factor - 0.5, clamped at the borders.
Interp interp_axis(Index in, int factor) {
  Interp t;
  const Index out = in * factor;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    Index i0 = static_cast<Index>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const Index i1 = std::min(i0 + 1, in - 1);
    t.lo[o] = i0;
    t.hi[o] = i1;
    t.frac[o] = src - static_cast<double>(i0);
  }
  return t;
}
}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int factor) {
  detail::require_rank(input.shape(), 3, "bilinear_upsample", "input");
  if (factor < 1) throw ConfigError("bilinear_upsample: factor must be >= 1, got " + std::to_string(factor));
  const Index c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Index oh = h * factor, ow = w * factor;
  const Interp ty = interp_axis(h, factor);
  const Interp tx = interp_axis(w, factor);
  const auto xs = input.data();
  std::vector<T> out(static_cast<std::size_t>(c * oh * ow));
  for (Index ch = 0; ch < c; ++ch) {
    const T* ip = xs.data() + ch * h * w;
    T* op = out.data() + ch * oh * ow;
    for (Index y = 0; y < oh; ++y) {
      const T fy = static_cast<T>(ty.frac[y]);
      const T* r0 = ip + ty.lo[y] * w;
      const T* r1 = ip + ty.hi[y] * w;
      for (Index x = 0; x < ow; ++x) {
        const T fx = static_cast<T>(tx.frac[x]);
        const T top = r0[tx.lo[x]] * (T(1) - fx) + r0[tx.hi[x]] * fx;
        const T bot = r1[tx.lo[x]] * (T(1) - fx) + r1[tx.hi[x]] * fx;
        op[y * ow + x] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
  return make_result<T>("bilinear_upsample", Shape{c, oh, ow}, std::move(out), {input},
                        [c, h, w, oh, ow, ty, tx](Node<T>& self) {
                          T* gi = self.inputs[0]->grad_sink();
                          if (!gi) return;
                          for (Index ch = 0; ch < c; ++ch) {
                            T* gp = gi + ch * h * w;
                            const T* g = self.grad.data() + ch * oh * ow;
                            for (Index y = 0; y < oh; ++y) {
                              const T fy = static_cast<T>(ty.frac[y]);
                              T* r0 = gp + ty.lo[y] * w;
                              T* r1 = gp + ty.hi[y] * w;
                              for (Index x = 0; x < ow; ++x) {
                                const T fx = static_cast<T>(tx.frac[x]);
                                const T v = g[y * ow + x];
                                r0[tx.lo[x]] += v * (T(1) - fy) * (T(1) - fx);
                                r0[tx.hi[x]] += v * (T(1) - fy) * fx;
                                r1[tx.lo[x]] += v * fy * (T(1) - fx);
                                r1[tx.hi[x]] += v * fy * fx;
                              }
                            }
                          }
                        });
}

#define UAGLNET_INST(T)                                                                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&, \
                            int, int);                                                          \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&,                       \
                                      const std::optional<Tensor<T>>&, int);                    \
  template Tensor<T> pointwise_conv2d(const Tensor<T>&, const Tensor<T>&,                       \
                                      const std::optional<Tensor<T>>&);                         \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int);
UAGLNET_INSTANTIATE_FLOATING(UAGLNET_INST)
#undef UAGLNET_INST

}  // namespace uaglnet
