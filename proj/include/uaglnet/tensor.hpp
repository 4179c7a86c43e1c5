// SPDX-License-Identifier: Apache-2.0
//
// Dense channels-first tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Nodes produced by operations
// remember their inputs and an adjoint closure while gradient recording is
// enabled; backward() orders the reachable nodes into a Tape and replays the
// adjoints in reverse. Leaf gradients accumulate additively until zero_grad().
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "uaglnet/errors.hpp"

namespace uaglnet {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> adjoint;

  // Gradient buffer of an input that participates in differentiation, or
  // nullptr. Allocates zeros on first use.
  T* grad_sink() {
    if (!requires_grad) return nullptr;
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

}  // namespace detail

/// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeT = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  /// Extent of `axis`; negative axes count from the back.
  Index dim(int axis) const;
  Index numel() const { return static_cast<Index>(node().data.size()); }

  std::span<const T> data() const { return node().data; }
  /// Mutable element access for parameter updates and data loading. Must not
  /// be used on tensors whose values an unreplayed graph still depends on.
  std::span<T> data_mut() { return node().data; }
  T item() const;
  T operator[](Index flat) const { return node().data[static_cast<std::size_t>(flat)]; }
  T at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return defined() && node_->requires_grad; }
  Tensor& requires_grad_(bool value = true);
  bool is_leaf() const { return node().leaf; }
  bool has_grad() const { return defined() && !node_->grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  /// Gradient as a detached tensor (zeros if none accumulated yet).
  Tensor grad_tensor() const;
  void zero_grad();

  /// Copy of the values with no graph attached.
  Tensor detach() const;
  const char* op_name() const { return node().op; }

  NodeT& node() const;
  const std::shared_ptr<NodeT>& node_ptr() const { return node_; }
  static Tensor from_node(std::shared_ptr<NodeT> node);

 private:
  std::shared_ptr<NodeT> node_;
};

template <typename U, typename T>
Tensor<U> cast(const Tensor<T>& x);

/// Topologically ordered record of the operations reachable from a root.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  /// Seeds the root with d(root)/d(root) = 1 and runs every adjoint in reverse
  /// order. Afterwards the intermediate nodes drop their graph links.
  void replay();

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> order_;
};

/// dloss/dleaf for every leaf with requires_grad, accumulated into its grad.
template <typename T>
void backward(const Tensor<T>& loss);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace uaglnet
