// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "shotnet/tensor.hpp"

namespace shotnet {

enum class ParamKind {
  kWeight,       // convolution kernel; trainable, L2-regularized
  kBias,         // trainable, not regularized
  kBnGamma,      // trainable, not regularized
  kBnBeta,       // trainable, not regularized
  kBnStatistic,  // running mean/var; persisted, never trained
};

const char* param_kind_name(ParamKind kind);
ParamKind param_kind_from_name(const std::string& name);

/// Non-owning reference to a named model tensor.
template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor = nullptr;
  ParamKind kind = ParamKind::kWeight;

  bool trainable() const { return kind != ParamKind::kBnStatistic; }
  bool regularized() const { return kind == ParamKind::kWeight; }
};

template <typename T>
using ParameterList = std::vector<NamedTensor<T>>;

}  // namespace shotnet
