// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uaglnet/tensor.hpp"

namespace uaglnet::detail {

// Builds an operation result. The adjoint is attached only when recording is
// enabled and some input participates in differentiation.
template <typename T>
Tensor<T> make_result(const char* name, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> adjoint) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->leaf = false;
  node->op = name;
#ifndef NDEBUG
  bool inputs_finite = true;
  for (const auto& in : inputs)
    for (T v : in.data()) inputs_finite = inputs_finite && std::isfinite(v);
  if (inputs_finite) {
    for (T v : node->data) {
      if (!std::isfinite(v)) throw ValueError(std::string("non-finite output from ") + name);
    }
  }
#endif
  bool track = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->adjoint = std::move(adjoint);
  }
  return Tensor<T>::from_node(std::move(node));
}

// (outer, extent, inner) decomposition of a shape around `axis`.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

inline int normalize_axis(int axis, int ndim) {
  const int a = axis < 0 ? axis + ndim : axis;
  if (a < 0 || a >= ndim) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(ndim));
  }
  return a;
}

inline AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (i < axis) s.outer *= shape[static_cast<std::size_t>(i)];
    else if (i == axis) s.extent = shape[static_cast<std::size_t>(i)];
    else s.inner *= shape[static_cast<std::size_t>(i)];
  }
  return s;
}

inline void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " + shape_str(shape));
  }
}

}  // namespace uaglnet::detail

#define UAGLNET_INSTANTIATE_FLOATING(MACRO) \
  MACRO(float)                              \
  MACRO(double)
