// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace shotnet {

/// Axis-aligned box in center form, normalized image coordinates.
struct Box {
  double cx = 0.5;
  double cy = 0.5;
  double w = 1.0;
  double h = 1.0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static Box from_corners(double x0, double y0, double x1, double y1) {
    return Box{0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
  }

  bool operator==(const Box&) const = default;
};

/// True when 0 < w, h <= 1, all fields finite, and the box overlaps the
/// unit square with positive area.
bool is_valid_box(const Box& box);

/// Clips to the unit square. Returns nullopt when nothing remains.
std::optional<Box> clip_to_unit(const Box& box);

/// Regression target of a box relative to a default box.
struct OffsetVector {
  double t_cx = 0.0;
  double t_cy = 0.0;
  double t_w = 0.0;
  double t_h = 0.0;

  double operator[](int i) const { return i == 0 ? t_cx : i == 1 ? t_cy : i == 2 ? t_w : t_h; }
};

double iou(const Box& a, const Box& b);

/// t_cx=(g.cx-d.cx)/d.w, t_cy=(g.cy-d.cy)/d.h, t_w=log(g.w/d.w), t_h=log(g.h/d.h).
OffsetVector encode_offsets(const Box& ground_truth, const Box& default_box);
/// Exact inverse of encode_offsets. Throws NumericalError on exp overflow.
Box decode_offsets(const OffsetVector& offsets, const Box& default_box);

/// Label table produced by matching default boxes to ground truth.
struct MatchAssignment {
  static constexpr int kBackground = 0;
  static constexpr int kNoise = 1;

  std::vector<int> labels;                      // per default box
  std::vector<std::optional<int>> matched_gt;   // index into ground truth
  std::vector<std::optional<OffsetVector>> targets;
  int num_positive = 0;                         // N

  std::size_t size() const { return labels.size(); }
  bool is_positive(std::size_t i) const { return labels[i] == kNoise; }
};

struct MatchOptions {
  double threshold = 0.5;
  /// Literal one-sentence reading: a ground truth is only matched when its
  /// best default box clears the threshold (no forced bipartite match).
  bool strict_threshold_matching = false;
};

/// Two-rule default-box matching:
///  (i) bipartite: repeatedly pair the unmatched ground truth and unmatched
///      default box with the highest IoU (ties -> lowest GT index, then
///      lowest default index), so each GT owns its best available default;
///  (ii) every other default box whose best IoU exceeds the threshold is
///      matched to that best GT (ties -> lowest GT index).
/// Throws ConfigError for an empty default list or threshold outside (0,1).
MatchAssignment match_boxes(const std::vector<Box>& defaults,
                            const std::vector<Box>& ground_truth,
                            const MatchOptions& options = {});

struct Detection {
  std::string image_id;
  Box box;
  int class_id = MatchAssignment::kNoise;
  double score = 0.0;
};

/// Greedy per-class suppression. Output is sorted by descending score, ties
/// in input order; a detection is dropped when its IoU with an already kept
/// same-class detection exceeds `iou_threshold`.
std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold = 0.6);

}  // namespace shotnet
