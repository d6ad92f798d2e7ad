// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

// Detection objectives with analytic gradients.
//
// Every loss takes one image's predictions: class logits [B, K] and box
// offsets [B, 4], aligned with a MatchAssignment of length B. When a
// gradient tensor is requested it is overwritten with d(loss)/d(input).

#pragma once

#include <vector>

#include "shotnet/box.hpp"
#include "shotnet/tensor.hpp"

namespace shotnet {

struct LossConfig {
  double loc_weight_alpha = 1.0;
  bool focal_enabled = true;
  double focal_alpha = 0.7;
  double focal_gamma = 2.0;
  /// Negatives kept per positive when focal loss is disabled (hard mining).
  int hard_negative_ratio = 3;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

double smooth_l1(double z);
double smooth_l1_derivative(double z);

/// Softmax cross-entropy: positives against the noise class, negatives
/// against background. `negative_mask`, when given, selects which negatives
/// contribute (all of them otherwise).
template <typename T>
double confidence_loss(const Tensor<T>& class_logits, const MatchAssignment& assignment,
                       Tensor<T>* grad = nullptr, const std::vector<char>* negative_mask = nullptr);

/// Sum of smooth-L1 over positives and the four offset coordinates.
template <typename T>
double localization_loss(const Tensor<T>& box_offsets, const MatchAssignment& assignment,
                         Tensor<T>* grad = nullptr);

/// Alpha-balanced focal loss on the 2-class softmax, summed over all boxes:
/// -alpha_t (1 - p_t)^gamma log(p_t), with p = P(noise), y = +1 for positives.
template <typename T>
double focal_loss(const Tensor<T>& class_logits, const MatchAssignment& assignment, double alpha,
                  double gamma, Tensor<T>* grad = nullptr);

/// Keeps the `ratio * max(N, 1)` negatives with the largest background
/// cross-entropy (ties -> lower index).
template <typename T>
std::vector<char> hard_negative_mask(const Tensor<T>& class_logits,
                                     const MatchAssignment& assignment, int ratio);

template <typename T>
struct LossResult {
  double value = 0.0;
  double confidence = 0.0;    // L_conf before normalization
  double localization = 0.0;  // L_loc before normalization
  int num_positive = 0;
  Tensor<T> grad_logits;
  Tensor<T> grad_offsets;
};

/// (L_conf + alpha * L_loc) / N. With N = 0 the classification term is
/// divided by 1 and localization contributes nothing.
template <typename T>
LossResult<T> multitask_loss(const Tensor<T>& class_logits, const Tensor<T>& box_offsets,
                             const MatchAssignment& assignment, const LossConfig& config);

/// Mean of multitask_loss over a batch: logits [N, B, K], offsets [N, B, 4].
template <typename T>
LossResult<T> batch_multitask_loss(const Tensor<T>& class_logits, const Tensor<T>& box_offsets,
                                   const std::vector<MatchAssignment>& assignments,
                                   const LossConfig& config);

}  // namespace shotnet
