// Copyright 2026 The tokensplat Authors
// SPDX-License-Identifier: Apache-2.0

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared Node. Every operation whose
// inputs require gradients records its inputs and a backward rule on the
// result node, so the graph reachable from a scalar root is the tape that
// backward() replays in reverse topological order. Values are immutable
// after creation; the only exceptions are parameter leaves, which the
// optimizer updates in place between steps, and gradient buffers.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokensplat/errors.hpp"

namespace tokensplat::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Raises ShapeError("<op>: shapes (..) and (..) ...").
[[noreturn]] void throw_shape_error(std::string_view op, const Shape& a, const Shape& b,
                                    std::string_view detail = {});

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs that require grad.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  std::span<Real> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using NodeType = Node<Real>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Tensor from_values(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const Real> values() const { return node_->value; }
  /// In-place access for parameter leaves. Graphs built from the old values
  /// must not be replayed afterwards.
  std::span<Real> mutable_values();

  Real item() const;
  Real operator[](std::size_t flat_index) const { return node_->value[flat_index]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Same values, no history.
  Tensor detach() const;
  Tensor clone() const;

  std::string_view op_name() const { return node_->op; }
  NodeType* node() const { return node_.get(); }
  const std::shared_ptr<NodeType>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

/// Builds the result of an operation. When grad mode is on and any input
/// requires grad, the inputs and backward rule are recorded; otherwise the
/// result is a constant.
template <typename Real>
Tensor<Real> make_result(std::string_view op, Shape shape, std::vector<Real> values,
                         std::vector<Tensor<Real>> inputs,
                         std::function<void(Node<Real>&)> backward);

/// Accumulates d(root)/d(leaf) into every reachable leaf with requires_grad.
/// Leaf gradients accumulate across calls; call zero_grad() between steps.
/// Throws ShapeError if root is not a scalar and Error if it carries no history.
template <typename Real>
void backward(const Tensor<Real>& root);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace tokensplat::ad
