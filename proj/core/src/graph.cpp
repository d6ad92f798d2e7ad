// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/graph.hpp"

#include <memory>

namespace shotnet {

template <typename T>
typename Graph<T>::Var Graph<T>::push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.owned = std::move(value);
  node.requires_grad = record_ && requires_grad;
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
bool Graph<T>::any_requires(std::initializer_list<Var> vars) const {
  if (!record_) return false;
  for (Var v : vars) {
    if (nodes_.at(v.id).requires_grad) return true;
  }
  return false;
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
std::span<T> Graph<T>::grad_of(Var v) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return {};
  if (n.external) return n.external->grad();
  Tensor<T>& g = grads_.at(v.id);
  if (g.empty()) g = Tensor<T>(n.owned.shape());
  return g.data();
}

template <typename T>
typename Graph<T>::Var Graph<T>::leaf(Tensor<T>& tensor) {
  Node node;
  node.external = &tensor;
  node.requires_grad = record_;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
typename Graph<T>::Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, nullptr);
}

template <typename T>
typename Graph<T>::Var Graph<T>::conv2d(Var input, Var weights, std::optional<Var> bias,
                                        const ConvSpec& spec) {
  const Tensor<T>* b = bias ? &value(*bias) : nullptr;
  Tensor<T> out = ops::conv2d(value(input), value(weights), b, spec);
  const bool rg = any_requires({input, weights}) || (bias && any_requires({*bias}));
  return push(std::move(out), rg, [input, weights, bias, spec](Graph& g, const Tensor<T>& dy) {
    ops::conv2d_backward(g.value(input), g.value(weights), dy, spec, g.grad_of(input),
                         g.grad_of(weights), bias ? g.grad_of(*bias) : std::span<T>{});
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::depthwise_conv2d(Var input, Var weights,
                                                  std::optional<Var> bias,
                                                  const ConvSpec& spec) {
  const Tensor<T>* b = bias ? &value(*bias) : nullptr;
  Tensor<T> out = ops::depthwise_conv2d(value(input), value(weights), b, spec);
  const bool rg = any_requires({input, weights}) || (bias && any_requires({*bias}));
  return push(std::move(out), rg, [input, weights, bias, spec](Graph& g, const Tensor<T>& dy) {
    ops::depthwise_conv2d_backward(g.value(input), g.value(weights), dy, spec, g.grad_of(input),
                                   g.grad_of(weights),
                                   bias ? g.grad_of(*bias) : std::span<T>{});
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::batch_norm(Var input, BatchNormParams<T>& params, Mode mode,
                                            double decay, double epsilon) {
  const Var gamma = leaf(params.gamma);
  const Var beta = leaf(params.beta);
  const bool rg = any_requires({input, gamma, beta});
  if (!rg) {
    return push(ops::batch_norm<T>(value(input), params, mode, decay, epsilon, nullptr), false,
                nullptr);
  }
  auto cache = std::make_shared<BatchNormCache<T>>();
  Tensor<T> out = ops::batch_norm(value(input), params, mode, decay, epsilon, cache.get());
  return push(std::move(out), true, [input, gamma, beta, cache](Graph& g, const Tensor<T>& dy) {
    ops::batch_norm_backward(*cache, g.value(gamma), dy, g.grad_of(input), g.grad_of(gamma),
                             g.grad_of(beta));
  });
}

template <typename T>
typename Graph<T>::Var Graph<T>::relu(Var input) {
  return push(ops::relu(value(input)), any_requires({input}),
              [input](Graph& g, const Tensor<T>& dy) {
                ops::relu_backward(g.value(input), dy, g.grad_of(input));
              });
}

template <typename T>
typename Graph<T>::Var Graph<T>::upsample_nearest2x(Var input, int target_h, int target_w) {
  return push(ops::upsample_nearest2x(value(input), target_h, target_w), any_requires({input}),
              [input](Graph& g, const Tensor<T>& dy) {
                ops::upsample_nearest2x_backward(dy, g.grad_of(input), g.value(input).shape());
              });
}

template <typename T>
typename Graph<T>::Var Graph<T>::add(Var a, Var b) {
  return push(ops::add(value(a), value(b)), any_requires({a, b}),
              [a, b](Graph& g, const Tensor<T>& dy) {
                for (Var v : {a, b}) {
                  std::span<T> dx = g.grad_of(v);
                  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
                }
              });
}

template <typename T>
typename Graph<T>::Var Graph<T>::sum(Var input) {
  T total = 0;
  for (T x : value(input).data()) total += x;
  return push(Tensor<T>({1}, total), any_requires({input}),
              [input](Graph& g, const Tensor<T>& dy) {
                std::span<T> dx = g.grad_of(input);
                for (T& x : dx) x += dy[0];
              });
}

template <typename T>
typename Graph<T>::Var Graph<T>::flatten_anchor_maps(const std::vector<Var>& maps,
                                                     int per_anchor) {
  std::vector<const Tensor<T>*> values;
  bool rg = false;
  for (Var m : maps) {
    values.push_back(&value(m));
    rg = rg || any_requires({m});
  }
  return push(ops::flatten_anchor_maps(values, per_anchor), rg,
              [maps, per_anchor](Graph& g, const Tensor<T>& dy) {
                std::vector<Shape> shapes;
                std::vector<std::span<T>> grads;
                for (Var m : maps) {
                  shapes.push_back(g.value(m).shape());
                  grads.push_back(g.grad_of(m));
                }
                ops::flatten_anchor_maps_backward(dy, per_anchor, shapes, grads);
              });
}

template <typename T>
typename Graph<T>::Var Graph<T>::external_scalar(
    T value_, std::vector<std::pair<Var, Tensor<T>>> input_grads) {
  bool rg = false;
  for (const auto& [v, grad] : input_grads) {
    require_same_shape(grad.shape(), value(v).shape(), "external_scalar gradient");
    rg = rg || any_requires({v});
  }
  auto grads = std::make_shared<std::vector<std::pair<Var, Tensor<T>>>>(std::move(input_grads));
  return push(Tensor<T>({1}, value_), rg, [grads](Graph& g, const Tensor<T>& dy) {
    for (const auto& [v, grad] : *grads) {
      std::span<T> dx = g.grad_of(v);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0] * grad[i];
    }
  });
}

template <typename T>
void Graph<T>::backward(Var root) {
  const Tensor<T>& r = value(root);
  if (r.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_string(r.shape()));
  }
  if (!nodes_.at(root.id).requires_grad) return;
  grads_.assign(nodes_.size(), Tensor<T>());
  grads_[root.id] = Tensor<T>(r.shape(), T(1));
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || grads_[id].empty()) continue;
    n.backward(*this, grads_[id]);
    grads_[id] = Tensor<T>();
  }
  grads_.clear();
}

template class Graph<float>;
template class Graph<double>;

}  // namespace shotnet
