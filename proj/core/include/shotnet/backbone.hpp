// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "shotnet/graph.hpp"
#include "shotnet/parameters.hpp"

namespace shotnet {

struct BackboneConfig {
  int in_channels = 1;
  double width_multiplier = 1.0;
  int fpn_channels = 256;
  int input_h = 600;
  int input_w = 600;
  double bn_decay = 0.9997;
  double bn_epsilon = 0.001;

  /// Throws ConfigError when round(32 * width) < 8, fpn_channels < 8, or an
  /// input side is below 64.
  void validate() const;
  /// Channel count after width scaling (never below 8).
  int scaled(int channels) const;

  bool operator==(const BackboneConfig&) const = default;
};

/// One DWS stage of the MobileNet-v1 schedule.
struct DwsStage {
  int out_channels;
  int stride;
};

/// (64,1),(128,2),(128,1),(256,2),(256,1),(512,2),(512,1)x5,(1024,2),(1024,1)
const std::array<DwsStage, 13>& mobilenet_v1_schedule();

/// Convolution (no bias) followed by batch norm and ReLU.
template <typename T>
struct ConvBnRelu {
  ConvSpec spec;
  Tensor<T> weight;
  BatchNormParams<T> bn;

  typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x, Mode mode,
                                 const BackboneConfig& cfg);
  void collect(const std::string& prefix, ParameterList<T>& out);
};

template <typename T>
struct DwsBlock {
  ConvBnRelu<T> depthwise;
  ConvBnRelu<T> pointwise;
};

/// Feature maps at strides 8, 16, 32, each with fpn_channels channels.
template <typename T>
struct ProjectionSet {
  typename Graph<T>::Var p8, p16, p32;
};

/// Raw MobileNet taps plus fused projections (taps exposed for tests).
template <typename T>
struct BackboneOutputs {
  typename Graph<T>::Var c8, c16, c32;
  ProjectionSet<T> projections;
};

/// MobileNet-v1 feature extractor with FPN fusion of the stride 8/16/32 taps.
template <typename T>
class Backbone {
 public:
  static constexpr std::array<int, 3> kTapBlocks = {4, 10, 12};  // last block per stride stage

  /// Weights ~ truncated normal (stddev 0.03) from `seed`; BN gamma 1, beta 0.
  static Backbone build(const BackboneConfig& config, std::uint64_t seed);

  BackboneOutputs<T> forward(Graph<T>& g, typename Graph<T>::Var image, Mode mode);
  /// Same, with the running-statistics decay replaced by `bn_decay`.
  BackboneOutputs<T> forward(Graph<T>& g, typename Graph<T>::Var image, Mode mode,
                             double bn_decay);

  void collect(ParameterList<T>& out);
  ParameterList<T> parameters();

  const BackboneConfig& config() const { return config_; }
  /// Channels entering the stride-8/16/32 laterals (256/512/1024 at width 1).
  std::array<int, 3> tap_channels() const;

  ConvBnRelu<T> stem;
  std::vector<DwsBlock<T>> blocks;
  std::array<ConvBnRelu<T>, 3> laterals;  // strides 8, 16, 32

 private:
  BackboneConfig config_;
};

extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace shotnet
