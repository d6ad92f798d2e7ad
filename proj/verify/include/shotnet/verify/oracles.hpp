// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

// Reference implementations written straight from the definitions, with no
// code shared with the library. Slow on purpose.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "shotnet/box.hpp"
#include "shotnet/evaluation.hpp"
#include "shotnet/tensor.hpp"

namespace shotnet::verify {

/// Direct 7-loop convolution with TensorFlow-style SAME padding (out =
/// ceil(in/stride), odd padding after) or VALID padding.
Tensor<double> naive_conv2d(const Tensor<double>& input, const Tensor<double>& weights,
                            const Tensor<double>* bias, int stride, bool same_padding);

/// Per-channel convolution, weights [C, 1, k, k].
Tensor<double> naive_depthwise_conv2d(const Tensor<double>& input, const Tensor<double>& weights,
                                      const Tensor<double>* bias, int stride, bool same_padding);

/// Two-pass batch statistics; biased variance.
Tensor<double> naive_batch_norm_train(const Tensor<double>& input, const Tensor<double>& gamma,
                                      const Tensor<double>& beta, double epsilon);

double naive_iou(const Box& a, const Box& b);

/// Visit in score order (stable); keep a box unless a kept box of the same
/// class overlaps it by more than the threshold.
std::vector<Detection> naive_nms(const std::vector<Detection>& detections, double iou_threshold);

/// Exhaustive two-rule matching: every round scans all (GT, default) pairs.
MatchAssignment naive_match(const std::vector<Box>& defaults, const std::vector<Box>& ground_truth,
                            double threshold, bool strict);

/// AP from the definition: precision at recall level r is the maximum
/// precision over all ranks whose recall reaches r.
double naive_ap(const std::vector<Detection>& detections, const GroundTruthSet& ground_truth,
                double iou_threshold);

/// -alpha_t (1 - p_t)^gamma log p_t for one prediction.
double focal_closed_form(double p_t, double alpha_t, double gamma);

/// Scalar RMSprop, independent of the library update.
struct ScalarRmsprop {
  double lr, decay, momentum, epsilon, l2;
  double ms = 0.0;
  double mom = 0.0;
  double step(double param, double grad);
};

}  // namespace shotnet::verify
