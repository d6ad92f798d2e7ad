// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shotnet/error.hpp"

namespace shotnet {

void PostprocessOptions::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold < 1.0)) {
    throw ConfigError("score_threshold must lie in [0,1)");
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ConfigError("nms_iou must lie in (0,1]");
  if (max_candidates < 1) throw ConfigError("max_candidates must be >= 1");
  if (max_detections && *max_detections < 1) throw ConfigError("max_detections must be >= 1");
}

template <typename T>
std::vector<Detection> postprocess(const T* logits, const T* offsets,
                                   const std::vector<Box>& defaults, const std::string& image_id,
                                   const PostprocessOptions& options) {
  options.validate();
  const std::size_t b = defaults.size();
  std::vector<double> score(b);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < b; ++i) {
    const double z0 = logits[i * kNumClasses], z1 = logits[i * kNumClasses + 1];
    if (!std::isfinite(z0) || !std::isfinite(z1)) {
      throw NumericalError("postprocess: non-finite class logit at default box " + std::to_string(i));
    }
    score[i] = 1.0 / (1.0 + std::exp(z0 - z1));
    if (score[i] > options.score_threshold) keep.push_back(i);
  }
  std::stable_sort(keep.begin(), keep.end(),
                   [&](std::size_t x, std::size_t y) { return score[x] > score[y]; });
  if (keep.size() > static_cast<std::size_t>(options.max_candidates)) keep.resize(options.max_candidates);

  std::vector<Detection> dets;
  dets.reserve(keep.size());
  for (std::size_t i : keep) {
    const T* o = offsets + i * 4;
    const OffsetVector t{static_cast<double>(o[0]), static_cast<double>(o[1]),
                         std::min(static_cast<double>(o[2]), kMaxLogScale),
                         std::min(static_cast<double>(o[3]), kMaxLogScale)};
    const auto clipped = clip_to_unit(decode_offsets(t, defaults[i]));
    if (!clipped) continue;
    dets.push_back({image_id, *clipped, MatchAssignment::kNoise, score[i]});
  }
  dets = nms(dets, options.nms_iou);
  if (options.max_detections && dets.size() > static_cast<std::size_t>(*options.max_detections)) {
    dets.resize(*options.max_detections);
  }
  return dets;
}

template <typename T>
Detector<T> Detector<T>::build(const BackboneConfig& backbone_cfg, const AnchorConfig& anchors,
                               std::uint64_t seed) {
  backbone_cfg.validate();
  anchors.validate();
  Detector d;
  d.backbone = Backbone<T>::build(backbone_cfg, seed);
  d.head = SsdHead<T>::build(anchors, backbone_cfg.fpn_channels, seed);
  d.anchors_ = anchors;
  d.default_boxes_ = generate_default_boxes(
      anchors, projection_sizes(backbone_cfg.input_h, backbone_cfg.input_w), backbone_cfg.input_h,
      backbone_cfg.input_w);
  return d;
}

template <typename T>
HeadOutputs<T> Detector<T>::forward(Graph<T>& g, typename Graph<T>::Var images, Mode mode) {
  const auto feats = backbone.forward(g, images, mode);
  HeadOutputs<T> out = head.forward(g, feats.projections);
  const auto& logits = g.value(out.class_logits);
  if (static_cast<std::size_t>(logits.dim(1)) != default_boxes_.size()) {
    throw ShapeError("detector: head produced " + std::to_string(logits.dim(1)) +
                     " boxes but " + std::to_string(default_boxes_.size()) + " default boxes exist");
  }
  return out;
}

template <typename T>
std::vector<std::vector<Detection>> Detector<T>::predict(const Tensor<T>& images,
                                                         const std::vector<std::string>& ids,
                                                         const PostprocessOptions& options) {
  require_rank(images.shape(), 4, "predict images");
  if (ids.size() != static_cast<std::size_t>(images.dim(0))) {
    throw ShapeError("predict: " + std::to_string(ids.size()) + " ids for batch of " +
                     std::to_string(images.dim(0)));
  }
  Graph<T> g(false);
  const HeadOutputs<T> out = forward(g, g.constant(images), Mode::kInfer);
  const Tensor<T>& logits = g.value(out.class_logits);
  const Tensor<T>& offsets = g.value(out.box_offsets);
  const std::size_t b = default_boxes_.size();
  std::vector<std::vector<Detection>> result;
  for (std::size_t n = 0; n < ids.size(); ++n) {
    result.push_back(postprocess(logits.ptr() + n * b * kNumClasses, offsets.ptr() + n * b * 4,
                                 default_boxes_, ids[n], options));
  }
  return result;
}

template <typename T>
void Detector<T>::recalibrate_batch_norm(const std::vector<Tensor<T>>& batches) {
  double total = 0.0;
  for (const auto& batch : batches) total += batch.dim(0);
  if (total == 0.0) return;

  std::vector<BatchNormParams<T>*> layers = {&backbone.stem.bn};
  for (auto& block : backbone.blocks) {
    layers.push_back(&block.depthwise.bn);
    layers.push_back(&block.pointwise.bn);
  }
  for (auto& lateral : backbone.laterals) layers.push_back(&lateral.bn);

  // Start from batch statistics pooled over the batches (train mode, decay 0
  // leaves each batch's moments in the running stats).
  std::vector<BatchNormMoments> moments(layers.size());
  for (const auto& batch : batches) {
    Graph<T> g(false);
    backbone.forward(g, g.constant(batch), Mode::kTrain, 0.0);
    const double w = batch.dim(0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& m = moments[l];
      const auto& mean = layers[l]->running_mean;
      const auto& var = layers[l]->running_var;
      m.sum.resize(mean.size(), 0.0);
      m.sum_sq.resize(mean.size(), 0.0);
      for (std::size_t c = 0; c < mean.size(); ++c) {
        m.sum[c] += w * mean[c];
        m.sum_sq[c] += w * (static_cast<double>(var[c]) + static_cast<double>(mean[c]) * mean[c]);
      }
      m.count += w;
    }
  }

  // Batch-normalized inputs to deep layers differ from what inference feeds
  // them. Re-measure every layer in infer mode until the statistics settle;
  // after sweep k the first k layers are exact, so `layers.size()` sweeps
  // reach the fixed point.
  const double eps = backbone.config().bn_epsilon;
  for (std::size_t sweep = 0;; ++sweep) {
    double change = 0.0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& mean = layers[l]->running_mean;
      auto& var = layers[l]->running_var;
      const auto& m = moments[l];
      for (std::size_t c = 0; c < mean.size(); ++c) {
        const double mu = m.sum[c] / m.count;
        const double v = std::max(0.0, m.sum_sq[c] / m.count - mu * mu);
        const double scale = static_cast<double>(var[c]) + eps;
        change = std::max({change, std::abs(mu - mean[c]) / std::sqrt(scale), std::abs(v - var[c]) / scale});
        mean[c] = static_cast<T>(mu);
        var[c] = static_cast<T>(v);
      }
    }
    if (change <= kBnRecalibrationTolerance || sweep == layers.size()) break;

    for (std::size_t l = 0; l < layers.size(); ++l) {
      moments[l] = BatchNormMoments{};
      layers[l]->moments = &moments[l];
    }
    for (const auto& batch : batches) {
      Graph<T> g(false);
      backbone.forward(g, g.constant(batch), Mode::kInfer);
    }
    for (auto* layer : layers) layer->moments = nullptr;
  }
}

template <typename T>
ParameterList<T> Detector<T>::parameters() {
  ParameterList<T> out;
  backbone.collect(out);
  head.collect(out);
  return out;
}

template std::vector<Detection> postprocess(const float*, const float*, const std::vector<Box>&,
                                            const std::string&, const PostprocessOptions&);
template std::vector<Detection> postprocess(const double*, const double*, const std::vector<Box>&,
                                            const std::string&, const PostprocessOptions&);
template class Detector<float>;
template class Detector<double>;

}  // namespace shotnet
