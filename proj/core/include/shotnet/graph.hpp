// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "shotnet/ops.hpp"
#include "shotnet/tensor.hpp"

namespace shotnet {

/// Reverse-mode tape for one forward pass.
///
/// Leaves wrap caller-owned tensors; `backward` accumulates into their grad
/// slots, so two calls without zeroing double the gradients. A graph is
/// single-threaded and lives for one training step.
template <typename T>
class Graph {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
  };

  /// With recording off no backward closures or caches are kept (inference).
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor<T>& tensor);
  Var constant(Tensor<T> value);

  Var conv2d(Var input, Var weights, std::optional<Var> bias, const ConvSpec& spec);
  Var depthwise_conv2d(Var input, Var weights, std::optional<Var> bias, const ConvSpec& spec);
  Var batch_norm(Var input, BatchNormParams<T>& params, Mode mode, double decay, double epsilon);
  Var relu(Var input);
  Var upsample_nearest2x(Var input, int target_h, int target_w);
  Var add(Var a, Var b);
  /// Sum of all elements, as a one-element tensor.
  Var sum(Var input);
  Var flatten_anchor_maps(const std::vector<Var>& maps, int per_anchor);

  /// Scalar node whose value and input gradients were computed elsewhere
  /// (the detection losses). `input_grads[k].second` is d(value)/d(input k).
  Var external_scalar(T value, std::vector<std::pair<Var, Tensor<T>>> input_grads);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Propagates d(root)/d(leaf) into every reachable leaf's grad slot.
  /// Throws ShapeError if root is not a one-element tensor.
  void backward(Var root);

 private:
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& grad_output)>;

  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn);
  bool any_requires(std::initializer_list<Var> vars) const;
  /// Gradient accumulator for a node (allocated on demand). Empty if the
  /// node does not require a gradient.
  std::span<T> grad_of(Var v);

  bool record_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace shotnet
