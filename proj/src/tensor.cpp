// SPDX-License-Identifier: Apache-2.0
#include "uaglnet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace uaglnet {

Index numel_of(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;

void validate_shape(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] <= 0) {
      throw DimensionError("axis " + std::to_string(i) + " of shape " + shape_str(shape) +
                           " is not positive");
    }
  }
}
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<NodeT>()) {
  validate_shape(shape);
  node_->data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<NodeT>()) {
  validate_shape(shape);
  if (static_cast<Index>(values.size()) != numel_of(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  node_->data = std::move(values);
  node_->shape = std::move(shape);
}

template <typename T>
typename Tensor<T>::NodeT& Tensor<T>::node() const {
  if (!node_) throw GraphError("use of an undefined tensor");
  return *node_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return node().shape;
}

template <typename T>
Index Tensor<T>::dim(int axis) const {
  const int n = ndim();
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node().data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<Index> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " vs shape " +
                         shape_str(s));
  }
  Index flat = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    if (i < 0 || i >= s[axis]) {
      throw DimensionError("index " + std::to_string(i) + " out of range on axis " +
                           std::to_string(axis));
    }
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().data[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T>& Tensor<T>::requires_grad_(bool value) {
  if (!node().leaf) throw GraphError("requires_grad_ may only be set on leaf tensors");
  node_->requires_grad = value;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad_tensor() const {
  if (node().grad.empty()) return Tensor(shape(), T(0));
  return Tensor(shape(), node().grad);
}

template <typename T>
void Tensor<T>::zero_grad() {
  node().grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node().data);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<NodeT> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename U, typename T>
Tensor<U> cast(const Tensor<T>& x) {
  std::vector<U> out(x.data().begin(), x.data().end());
  return Tensor<U>(x.shape(), std::move(out));
}

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  auto& rn = root.node();
  if (rn.released) throw GraphError("backward called twice on the same graph");
  if (!rn.requires_grad) throw GraphError("loss is detached: no input requires grad");

  // Iterative post-order DFS so deep graphs do not exhaust the stack.
  Tape tape;
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node<T>>, std::size_t>> stack;
  stack.emplace_back(root.node_ptr(), 0);
  visited.insert(root.node_ptr().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->released) throw GraphError("backward through an already released graph");
      if (!child->requires_grad) continue;
      if (visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <typename T>
void Tape<T>::replay() {
  if (order_.empty()) return;
  auto& root = *order_.back();
  root.grad.assign(root.data.size(), T(0));
  std::fill(root.grad.begin(), root.grad.end(), T(1));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    auto& node = **it;
    if (node.adjoint && !node.grad.empty()) node.adjoint(node);
  }
  for (auto& node : order_) {
    if (node->leaf) continue;
    node->adjoint = nullptr;
    node->inputs.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->requires_grad = false;
    node->released = true;
  }
}

template <typename T>
std::vector<std::string> Tape<T>::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& n : order_) names.emplace_back(n->op);
  return names;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw GraphError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Tape<T>::record(loss).replay();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template Tensor<double> cast(const Tensor<float>&);
template Tensor<float> cast(const Tensor<double>&);
template Tensor<float> cast(const Tensor<float>&);
template Tensor<double> cast(const Tensor<double>&);

}  // namespace uaglnet
