// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "shotnet/parameters.hpp"

namespace shotnet {

struct RmspropConfig {
  double learning_rate = 0.004;
  double momentum = 0.9;
  double decay = 0.9;
  double epsilon = 0.1;
  double l2_weight = 4e-5;

  void validate() const;
  bool operator==(const RmspropConfig&) const = default;
};

/// One tensor's update, element-wise:
///   g   <- g + l2 * p            (only when `regularized`)
///   ms  <- decay * ms + (1 - decay) * g^2
///   mom <- momentum * mom + lr * g / sqrt(ms + epsilon)
///   p   <- p - mom
/// Arithmetic is done in double. Throws NumericalError naming `name` if a
/// gradient is not finite; nothing is modified in that case.
template <typename T>
void rmsprop_update(std::span<T> param, std::span<const T> grad, std::span<T> mean_square,
                    std::span<T> momentum, const RmspropConfig& config, bool regularized,
                    const std::string& name);

template <typename T>
struct RmspropSlot {
  Tensor<T> mean_square;
  Tensor<T> momentum;
};

/// Accumulators keyed by parameter name.
template <typename T>
struct RmspropState {
  std::map<std::string, RmspropSlot<T>> slots;
  std::uint64_t steps = 0;
};

/// Updates every trainable parameter from its grad slot (parameters without a
/// grad slot see a zero gradient). Missing state slots are created zeroed.
/// All gradients are validated before any parameter changes.
template <typename T>
void rmsprop_step(ParameterList<T>& params, RmspropState<T>& state, const RmspropConfig& config);

}  // namespace shotnet
