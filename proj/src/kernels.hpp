// SPDX-License-Identifier: Apache-2.0
//
// Row-major GEMM loops. Accumulate into `c`; callers zero it when needed.
#pragma once

#include "uaglnet/tensor.hpp"

namespace uaglnet::kernels {

// c[M,N] += a[M,K] * b[K,N]
template <typename T>
void gemm_nn(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  for (Index i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (Index p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[M,K] += a[M,N] * b[K,N]^T
template <typename T>
void gemm_nt(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  for (Index i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    for (Index p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = 0;
      for (Index j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[K,N] += a[M,K]^T * b[M,N]
template <typename T>
void gemm_tn(Index m, Index n, Index k, const T* a, const T* b, T* c) {
  for (Index i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (Index p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (Index j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace uaglnet::kernels
