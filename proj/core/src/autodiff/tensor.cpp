// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "tokensplat/autodiff/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace tokensplat::ad {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

void throw_shape_error(std::string_view op, const Shape& a, const Shape& b, std::string_view detail) {
  std::ostringstream msg;
  msg << op << ": incompatible shapes " << shape_string(a) << " and " << shape_string(b);
  if (!detail.empty()) msg << " (" << detail << ')';
  throw ShapeError(msg.str());
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

template <typename Real>
Tensor<Real> Tensor<Real>::from_values(Shape shape, std::vector<Real> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_values: shape " + shape_string(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

template <typename Real>
std::size_t Tensor<Real>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("dim: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(shape()));
  }
  return node_->shape[axis];
}

template <typename Real>
std::span<Real> Tensor<Real>::mutable_values() {
  return node_->value;
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->value[0];
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw Error("set_requires_grad: only leaf tensors can be toggled");
  node_->requires_grad = on;
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from_values(node_->shape, node_->value, false);
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  return from_values(node_->shape, node_->value, node_->requires_grad);
}

template <typename Real>
Tensor<Real> make_result(std::string_view op, Shape shape, std::vector<Real> values,
                         std::vector<Tensor<Real>> inputs, std::function<void(Node<Real>&)> backward) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor<Real>& t) { return t.defined() && t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Tensor<Real>(std::move(node));
}

template <typename Real>
void backward(const Tensor<Real>& root) {
  if (!root.defined()) throw Error("backward: undefined root");
  if (root.numel() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_string(root.shape()));
  }
  Node<Real>* top = root.node();
  if (!top->requires_grad || top->is_leaf()) {
    throw Error("backward: root has no recorded history (detached or built without grad)");
  }

  // Iterative post-order DFS yields a topological order: inputs before users.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(top, 0);
  seen.insert(top);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Real>* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<Real>* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), Real(0));
  }
  top->grad[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (!node->is_leaf()) node->backward(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(std::string_view, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(std::string_view, Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace tokensplat::ad
