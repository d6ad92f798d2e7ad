// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

// Forward and reverse kernels for every layer primitive of the detector.
//
// Forward kernels are pure functions of their inputs. Backward kernels
// *accumulate* into the gradient spans they are given; an empty span means
// "not needed". No kernel broadcasts: every shape is checked explicitly.

#pragma once

#include <span>
#include <vector>

#include "shotnet/tensor.hpp"

namespace shotnet {

enum class Padding {
  kSameCeil,  // output extent ceil(in / stride); odd padding goes bottom/right
  kNone,      // valid convolution
};

struct ConvSpec {
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  Padding padding = Padding::kSameCeil;
  bool depthwise = false;

  /// Throws ConfigError unless stride is 1 or 2 and the kernel is 1x1 or 3x3.
  void validate() const;
};

int conv_output_extent(int input, int kernel, int stride, Padding padding);
/// Padding placed before the first row (or column); the remainder goes after.
int conv_pad_before(int input, int kernel, int stride, Padding padding);

enum class Mode { kTrain, kInfer };

/// Per-channel input moments, accumulated by infer-mode batch norm when attached.
struct BatchNormMoments {
  std::vector<double> sum, sum_sq;
  double count = 0.0;  // elements per channel
};

template <typename T>
struct BatchNormParams {
  BatchNormParams() = default;
  explicit BatchNormParams(int channels)
      : gamma({channels}, T(1)),
        beta({channels}, T(0)),
        running_mean({channels}, T(0)),
        running_var({channels}, T(1)) {}

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  BatchNormMoments* moments = nullptr;  // not owned
};

/// Values saved by the batch-norm forward pass for the backward pass.
template <typename T>
struct BatchNormCache {
  Mode mode = Mode::kInfer;
  std::vector<T> inv_std;  // per channel
  Tensor<T> normalized;    // x_hat
};

namespace ops {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                 const ConvSpec& spec);

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                     const Tensor<T>& grad_output, const ConvSpec& spec,
                     std::span<T> grad_input, std::span<T> grad_weights,
                     std::span<T> grad_bias);

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                           const Tensor<T>* bias, const ConvSpec& spec);

template <typename T>
void depthwise_conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_output, const ConvSpec& spec,
                               std::span<T> grad_input, std::span<T> grad_weights,
                               std::span<T> grad_bias);

/// Per-channel normalization over (N, H, W).
///
/// Train mode normalizes with the biased batch statistics and folds them into
/// the running statistics: running <- decay * running + (1 - decay) * batch.
/// Infer mode uses the running statistics and leaves them untouched.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode,
                     double decay, double epsilon, BatchNormCache<T>* cache = nullptr);

template <typename T>
void batch_norm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                         const Tensor<T>& grad_output, std::span<T> grad_input,
                         std::span<T> grad_gamma, std::span<T> grad_beta);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Subgradient at 0 is 0.
template <typename T>
void relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output,
                   std::span<T> grad_input);

/// Replicates every pixel into a 2x2 block, then trims bottom rows / right
/// columns down to (target_h, target_w). Targets must be 2H-1 or 2H (same
/// for W).
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& input, int target_h, int target_w);

template <typename T>
void upsample_nearest2x_backward(const Tensor<T>& grad_output, std::span<T> grad_input,
                                 const Shape& input_shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Gathers per-anchor predictions from several [N, A*P, H, W] maps into one
/// [N, B, P] tensor, B = sum(H*W*A), ordered map -> row -> column -> anchor.
template <typename T>
Tensor<T> flatten_anchor_maps(const std::vector<const Tensor<T>*>& maps, int per_anchor);

template <typename T>
void flatten_anchor_maps_backward(const Tensor<T>& grad_output, int per_anchor,
                                  const std::vector<Shape>& map_shapes,
                                  const std::vector<std::span<T>>& grad_maps);

}  // namespace ops
}  // namespace shotnet
