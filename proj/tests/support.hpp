// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "uaglnet/nn.hpp"
#include "uaglnet/ops.hpp"
#include "uaglnet/rng.hpp"
#include "uaglnet/tensor.hpp"

namespace uaglnet::testing {

template <typename T = double>
Tensor<T> make(Shape shape, std::initializer_list<double> values) {
  std::vector<T> v;
  for (double x : values) v.push_back(static_cast<T>(x));
  return Tensor<T>(std::move(shape), std::move(v));
}

/// Owned copy of the elements; safe to iterate when `t` is a temporary.
template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0;
  for (Index i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

template <typename T>
void fill_store(ParamStore<T>& store, T value) {
  for (auto& [name, t] : store.entries()) {
    auto p = t;
    std::fill(p.data_mut().begin(), p.data_mut().end(), value);
  }
}

/// Random {0,1} map with roughly half the entries set.
template <typename T = double>
Tensor<T> random_mask(const Shape& shape, Rng& rng) {
  auto m = rand_uniform<T>(shape, rng, 0, 1);
  for (auto& v : m.data_mut()) v = v >= T(0.5) ? T(1) : T(0);
  return m;
}

/// Scalar readout sum(x * r) with a fixed random r, so every element matters.
template <typename T>
Tensor<T> readout(const Tensor<T>& x, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(x, randn<T>(x.shape(), rng)));
}

}  // namespace uaglnet::testing
