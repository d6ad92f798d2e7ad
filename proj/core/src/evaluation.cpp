// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "shotnet/error.hpp"

namespace shotnet {

const std::array<double, 10>& coco_iou_thresholds() {
  static const std::array<double, 10> t = [] {
    std::array<double, 10> v{};
    for (int k = 0; k < 10; ++k) v[k] = (50 + 5 * k) / 100.0;
    return v;
  }();
  return t;
}

namespace {

std::vector<std::size_t> ranked_detections(const std::vector<Detection>& dets,
                                           const EvalOptions& options) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  if (!options.max_detections_per_image) return order;
  std::map<std::string, int> per_image;
  std::vector<std::size_t> capped;
  for (std::size_t i : order) {
    if (per_image[dets[i].image_id]++ < *options.max_detections_per_image) capped.push_back(i);
  }
  return capped;
}

}  // namespace

double compute_ap(const std::vector<Detection>& detections, const GroundTruthSet& ground_truth,
                  double iou_threshold, const EvalOptions& options, PrecisionRecallCurve* curve) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw ConfigError("compute_ap: IoU threshold must lie in (0,1)");
  }
  std::size_t total_gt = 0;
  std::map<std::string, std::vector<char>> used;
  for (const auto& [id, boxes] : ground_truth) {
    total_gt += boxes.size();
    used[id].assign(boxes.size(), 0);
  }
  if (curve) curve->precision.fill(0.0);
  if (total_gt == 0) return 0.0;

  const auto order = ranked_detections(detections, options);
  std::vector<double> precision, recall;
  precision.reserve(order.size());
  recall.reserve(order.size());
  std::size_t tp = 0, fp = 0;
  for (std::size_t idx : order) {
    const Detection& d = detections[idx];
    bool matched = false;
    auto it = ground_truth.find(d.image_id);
    if (it != ground_truth.end()) {
      auto& flags = used[d.image_id];
      double best = iou_threshold;
      std::size_t best_j = it->second.size();
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (flags[j]) continue;
        const double o = iou(d.box, it->second[j]);
        if (o >= best && (best_j == it->second.size() || o > best)) {
          best = o;
          best_j = j;
        }
      }
      if (best_j < it->second.size()) {
        flags[best_j] = 1;
        matched = true;
      }
    }
    matched ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    const auto pos = std::lower_bound(recall.begin(), recall.end(), level);
    const double p = pos == recall.end() ? 0.0 : precision[pos - recall.begin()];
    if (curve) curve->precision[r] = p;
    sum += p;
  }
  return sum / 101.0;
}

ApReport ap_sweep(const std::vector<Detection>& detections, const GroundTruthSet& ground_truth,
                  const EvalOptions& options) {
  ApReport report;
  double total = 0.0;
  for (double t : coco_iou_thresholds()) {
    PrecisionRecallCurve curve;
    const double ap = compute_ap(detections, ground_truth, t, options, &curve);
    report.ap_per_threshold[t] = ap;
    report.pr_curves[t] = curve;
    total += ap;
  }
  report.ap50 = report.ap_per_threshold.at(coco_iou_thresholds()[0]);
  report.ap_coco = total / 10.0;
  return report;
}

}  // namespace shotnet
