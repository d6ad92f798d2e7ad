// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "shotnet/backbone.hpp"
#include "shotnet/box.hpp"

namespace shotnet {

/// Default-box layout. Scales are fractions of the shorter image side, one
/// per projection (strides 8, 16, 32).
struct AnchorConfig {
  std::vector<double> aspect_ratios = {1.0, 2.0, 3.0, 0.5, 1.0 / 3.0};
  std::array<double, 3> scales = {0.08, 0.20, 0.42};
  /// Adds a ratio-1 box at sqrt(s_k * s_{k+1}) (s_{K+1} = 1).
  bool extra_scale_for_ratio1 = true;

  void validate() const;
  int anchors_per_location() const;

  bool operator==(const AnchorConfig&) const = default;
};

struct FeatureMapSize {
  int h;
  int w;
  int stride;
};

/// Projection sizes ceil(H/s), ceil(W/s) for s = 8, 16, 32.
std::vector<FeatureMapSize> projection_sizes(int image_h, int image_w);

/// Boxes ordered projection -> row -> column -> anchor (ratios in config
/// order, then the extra ratio-1 box), each clipped to the unit square.
std::vector<Box> generate_default_boxes(const AnchorConfig& config,
                                        const std::vector<FeatureMapSize>& sizes, int image_h,
                                        int image_w);

inline constexpr int kNumClasses = 2;  // background, noise

template <typename T>
struct HeadOutputs {
  typename Graph<T>::Var class_logits;  // [N, B, 2]
  typename Graph<T>::Var box_offsets;   // [N, B, 4]
};

/// Independent 3x3 class and box convolutions per projection.
template <typename T>
class SsdHead {
 public:
  /// Noise-logit bias starts at log(0.01/0.99), background at 0.
  static SsdHead build(const AnchorConfig& anchors, int in_channels, std::uint64_t seed);

  HeadOutputs<T> forward(Graph<T>& g, const ProjectionSet<T>& projections);

  void collect(ParameterList<T>& out);

  int in_channels() const { return in_channels_; }
  int anchors_per_location() const { return anchors_per_location_; }

  struct Level {
    ConvSpec cls_spec, box_spec;
    Tensor<T> cls_weight, cls_bias, box_weight, box_bias;
  };
  std::array<Level, 3> levels;

 private:
  int in_channels_ = 0;
  int anchors_per_location_ = 0;
};

extern template class SsdHead<float>;
extern template class SsdHead<double>;

}  // namespace shotnet
