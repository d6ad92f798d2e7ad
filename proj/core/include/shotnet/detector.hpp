// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shotnet/backbone.hpp"
#include "shotnet/box.hpp"
#include "shotnet/ssd_head.hpp"

namespace shotnet {

struct PostprocessOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.6;
  /// Highest-scoring candidates kept per image before NMS.
  int max_candidates = 400;
  std::optional<int> max_detections;

  void validate() const;
};

/// Size-offset clamp applied before decoding, log(1000/16).
inline constexpr double kMaxLogScale = 4.135166556742356;
inline constexpr double kBnRecalibrationTolerance = 1e-4;

/// Turns one image's head outputs into scored boxes: softmax, threshold,
/// candidate cap, decode, clip to the unit square, NMS.
template <typename T>
std::vector<Detection> postprocess(const T* class_logits, const T* box_offsets,
                                   const std::vector<Box>& default_boxes,
                                   const std::string& image_id, const PostprocessOptions& options);

/// Backbone + SSD head sharing one architecture description.
template <typename T>
class Detector {
 public:
  /// Backbone weights from stream 0 of `seed`, head weights from stream 1.
  static Detector build(const BackboneConfig& backbone, const AnchorConfig& anchors,
                        std::uint64_t seed);

  /// images: [N, C, H, W] matching the backbone config.
  HeadOutputs<T> forward(Graph<T>& g, typename Graph<T>::Var images, Mode mode);

  /// Inference on a batch; returns detections per image, ids in batch order.
  std::vector<std::vector<Detection>> predict(const Tensor<T>& images,
                                              const std::vector<std::string>& ids,
                                              const PostprocessOptions& options);

  /// Replaces every running mean/variance with the statistics each layer's
  /// input has over `batches` when the layers before it already run in infer
  /// mode. Starts from pooled train-mode batch statistics and re-measures in
  /// infer mode until the largest change (relative to the running std/var)
  /// is at most kBnRecalibrationTolerance. No grads.
  void recalibrate_batch_norm(const std::vector<Tensor<T>>& batches);

  ParameterList<T> parameters();

  const BackboneConfig& backbone_config() const { return backbone.config(); }
  const AnchorConfig& anchor_config() const { return anchors_; }
  const std::vector<Box>& default_boxes() const { return default_boxes_; }

  Backbone<T> backbone;
  SsdHead<T> head;

 private:
  AnchorConfig anchors_;
  std::vector<Box> default_boxes_;
};

extern template class Detector<float>;
extern template class Detector<double>;

}  // namespace shotnet
