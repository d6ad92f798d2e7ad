// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/box.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shotnet/error.hpp"

namespace shotnet {

bool is_valid_box(const Box& b) {
  if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) || !std::isfinite(b.h)) {
    return false;
  }
  if (!(b.w > 0.0 && b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0)) return false;
  return b.x1() > 0.0 && b.x0() < 1.0 && b.y1() > 0.0 && b.y0() < 1.0;
}

std::optional<Box> clip_to_unit(const Box& b) {
  const double x0 = std::clamp(b.x0(), 0.0, 1.0);
  const double y0 = std::clamp(b.y0(), 0.0, 1.0);
  const double x1 = std::clamp(b.x1(), 0.0, 1.0);
  const double y1 = std::clamp(b.y1(), 0.0, 1.0);
  if (!(x1 > x0 && y1 > y0)) return std::nullopt;
  return Box::from_corners(x0, y0, x1, y1);
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const double ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

OffsetVector encode_offsets(const Box& g, const Box& d) {
  if (!(d.w > 0.0 && d.h > 0.0)) throw ConfigError("encode_offsets: default box has non-positive size");
  if (!(g.w > 0.0 && g.h > 0.0)) {
    throw ConfigError("encode_offsets: ground-truth box has non-positive width or height");
  }
  return OffsetVector{(g.cx - d.cx) / d.w, (g.cy - d.cy) / d.h, std::log(g.w / d.w),
                      std::log(g.h / d.h)};
}

Box decode_offsets(const OffsetVector& t, const Box& d) {
  if (!std::isfinite(t.t_cx) || !std::isfinite(t.t_cy) || !std::isfinite(t.t_w) ||
      !std::isfinite(t.t_h)) {
    throw NumericalError("decode_offsets: non-finite offset");
  }
  const double sw = std::exp(t.t_w);
  const double sh = std::exp(t.t_h);
  if (!std::isfinite(sw) || !std::isfinite(sh)) {
    throw NumericalError("decode_offsets: exp overflow in size offset");
  }
  return Box{d.cx + t.t_cx * d.w, d.cy + t.t_cy * d.h, d.w * sw, d.h * sh};
}

MatchAssignment match_boxes(const std::vector<Box>& defaults, const std::vector<Box>& ground_truth,
                            const MatchOptions& options) {
  if (defaults.empty()) throw ConfigError("match_boxes: empty default box list");
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) {
    throw ConfigError("match_boxes: threshold must lie in (0,1)");
  }
  const std::size_t nd = defaults.size();
  const std::size_t ng = ground_truth.size();

  MatchAssignment m;
  m.labels.assign(nd, MatchAssignment::kBackground);
  m.matched_gt.assign(nd, std::nullopt);
  m.targets.assign(nd, std::nullopt);
  if (ng == 0) return m;

  std::vector<double> overlap(ng * nd);
  for (std::size_t j = 0; j < ng; ++j) {
    for (std::size_t i = 0; i < nd; ++i) overlap[j * nd + i] = iou(defaults[i], ground_truth[j]);
  }

  // (i) bipartite step
  std::vector<char> gt_done(ng, 0);
  for (std::size_t round = 0; round < ng; ++round) {
    double best = 0.0;
    std::size_t bj = ng, bi = nd;
    for (std::size_t j = 0; j < ng; ++j) {
      if (gt_done[j]) continue;
      for (std::size_t i = 0; i < nd; ++i) {
        if (m.matched_gt[i]) continue;
        if (overlap[j * nd + i] > best) {
          best = overlap[j * nd + i];
          bj = j;
          bi = i;
        }
      }
    }
    if (bj == ng) break;
    if (options.strict_threshold_matching && !(best > options.threshold)) break;
    gt_done[bj] = 1;
    m.matched_gt[bi] = static_cast<int>(bj);
  }

  // (ii) threshold step
  for (std::size_t i = 0; i < nd; ++i) {
    if (m.matched_gt[i]) continue;
    double best = -1.0;
    std::size_t bj = 0;
    for (std::size_t j = 0; j < ng; ++j) {
      if (overlap[j * nd + i] > best) {
        best = overlap[j * nd + i];
        bj = j;
      }
    }
    if (best > options.threshold) m.matched_gt[i] = static_cast<int>(bj);
  }

  for (std::size_t i = 0; i < nd; ++i) {
    if (!m.matched_gt[i]) continue;
    m.labels[i] = MatchAssignment::kNoise;
    m.targets[i] = encode_offsets(ground_truth[*m.matched_gt[i]], defaults[i]);
    ++m.num_positive;
  }
  return m;
}

std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& d = detections[idx];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace shotnet
