// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/rmsprop.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "shotnet/error.hpp"

namespace shotnet {

void RmspropConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0,1)");
  if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("train.decay must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (!(l2_weight >= 0.0)) throw ConfigError("train.l2_weight must be >= 0");
}

namespace {

template <typename T>
void check_finite(std::span<const T> grad, const std::string& name) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("rmsprop: non-finite gradient in '" + name + "' at element " +
                           std::to_string(i));
    }
  }
}

}  // namespace

template <typename T>
void rmsprop_update(std::span<T> param, std::span<const T> grad, std::span<T> ms,
                    std::span<T> mom, const RmspropConfig& c, bool regularized,
                    const std::string& name) {
  if (grad.size() != param.size() || ms.size() != param.size() || mom.size() != param.size()) {
    throw ShapeError("rmsprop: state for '" + name + "' does not match the parameter size");
  }
  check_finite(grad, name);
  for (std::size_t i = 0; i < param.size(); ++i) {
    double g = grad[i];
    if (regularized) g += c.l2_weight * static_cast<double>(param[i]);
    const double s = c.decay * static_cast<double>(ms[i]) + (1.0 - c.decay) * g * g;
    const double m = c.momentum * static_cast<double>(mom[i]) + c.learning_rate * g / std::sqrt(s + c.epsilon);
    ms[i] = static_cast<T>(s);
    mom[i] = static_cast<T>(m);
    param[i] = static_cast<T>(static_cast<double>(param[i]) - m);
  }
}

template <typename T>
void rmsprop_step(ParameterList<T>& params, RmspropState<T>& state, const RmspropConfig& config) {
  config.validate();
  for (const auto& p : params) {
    if (p.trainable() && p.tensor->has_grad()) {
      check_finite(std::span<const T>(p.tensor->grad()), p.name);
    }
  }
  std::vector<T> zeros;
  for (auto& p : params) {
    if (!p.trainable()) continue;
    auto& slot = state.slots[p.name];
    if (slot.mean_square.shape() != p.tensor->shape()) {
      if (!slot.mean_square.empty()) {
        throw ShapeError("rmsprop: state for '" + p.name + "' has shape " +
                         shape_string(slot.mean_square.shape()) + ", parameter has " +
                         shape_string(p.tensor->shape()));
      }
      slot.mean_square = Tensor<T>(p.tensor->shape());
      slot.momentum = Tensor<T>(p.tensor->shape());
    }
    std::span<const T> g;
    if (p.tensor->has_grad()) {
      g = std::as_const(*p.tensor).grad();
    } else {
      zeros.assign(p.tensor->size(), T(0));
      g = zeros;
    }
    rmsprop_update(p.tensor->data(), g, slot.mean_square.data(), slot.momentum.data(), config,
                   p.regularized(), p.name);
  }
  ++state.steps;
}

template void rmsprop_update(std::span<float>, std::span<const float>, std::span<float>,
                             std::span<float>, const RmspropConfig&, bool, const std::string&);
template void rmsprop_update(std::span<double>, std::span<const double>, std::span<double>,
                             std::span<double>, const RmspropConfig&, bool, const std::string&);
template void rmsprop_step(ParameterList<float>&, RmspropState<float>&, const RmspropConfig&);
template void rmsprop_step(ParameterList<double>&, RmspropState<double>&, const RmspropConfig&);

}  // namespace shotnet
