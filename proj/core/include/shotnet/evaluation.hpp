// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shotnet/box.hpp"

namespace shotnet {

/// Ground-truth boxes keyed by image id.
using GroundTruthSet = std::map<std::string, std::vector<Box>>;

struct EvalOptions {
  /// Keep at most this many highest-scoring detections per image.
  std::optional<int> max_detections_per_image;
};

/// The ten COCO thresholds 0.50, 0.55, ..., 0.95.
const std::array<double, 10>& coco_iou_thresholds();

/// Precision envelope sampled at recall 0, 0.01, ..., 1.00.
struct PrecisionRecallCurve {
  std::array<double, 101> precision{};
};

/// Greedy COCO-style matching plus 101-point interpolated AP.
///
/// Detections are visited by descending score (ties in input order). Each
/// one is a true positive when some still-unmatched ground truth of the same
/// image has IoU >= threshold; the highest-IoU such GT is consumed. Returns
/// 0 when there is no ground truth. Throws ConfigError when the threshold is
/// outside (0,1).
double compute_ap(const std::vector<Detection>& detections, const GroundTruthSet& ground_truth,
                  double iou_threshold, const EvalOptions& options = {},
                  PrecisionRecallCurve* curve = nullptr);

struct ApReport {
  std::map<double, double> ap_per_threshold;
  double ap50 = 0.0;
  double ap_coco = 0.0;  // mean over the ten thresholds
  std::map<double, PrecisionRecallCurve> pr_curves;
};

ApReport ap_sweep(const std::vector<Detection>& detections, const GroundTruthSet& ground_truth,
                  const EvalOptions& options = {});

}  // namespace shotnet
