// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace shotnet::verify {

namespace {

struct Geometry {
  int out;
  int pad_before;
};

Geometry geometry(int in, int k, int stride, bool same) {
  if (!same) return {(in - k) / stride + 1, 0};
  const int out = (in + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + k - in, 0);
  return {out, total / 2};
}

}  // namespace

Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>* bias, int stride, bool same) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Geometry gy = geometry(h, kh, stride, same), gx = geometry(wd, kw, stride, same);
  Tensor<double> y({n, o, gy.out, gx.out});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < gy.out; ++i)
        for (int j = 0; j < gx.out; ++j) {
          double s = bias ? (*bias)[oc] : 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int r = i * stride + u - gy.pad_before;
                const int q = j * stride + v - gx.pad_before;
                if (r < 0 || r >= h || q < 0 || q >= wd) continue;
                s += x.at(b, ic, r, q) * w.at(oc, ic, u, v);
              }
          y.at(b, oc, i, j) = s;
        }
  return y;
}

Tensor<double> naive_depthwise_conv2d(const Tensor<double>& x, const Tensor<double>& w,
                                      const Tensor<double>* bias, int stride, bool same) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int kh = w.dim(2), kw = w.dim(3);
  const Geometry gy = geometry(h, kh, stride, same), gx = geometry(wd, kw, stride, same);
  Tensor<double> y({n, c, gy.out, gx.out});
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < gy.out; ++i)
        for (int j = 0; j < gx.out; ++j) {
          double s = bias ? (*bias)[ch] : 0.0;
          for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v) {
              const int r = i * stride + u - gy.pad_before;
              const int q = j * stride + v - gx.pad_before;
              if (r < 0 || r >= h || q < 0 || q >= wd) continue;
              s += x.at(b, ch, r, q) * w.at(ch, 0, u, v);
            }
          y.at(b, ch, i, j) = s;
        }
  return y;
}

Tensor<double> naive_batch_norm_train(const Tensor<double>& x, const Tensor<double>& gamma,
                                      const Tensor<double>& beta, double epsilon) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<double> y(x.shape());
  const double count = static_cast<double>(n) * h * w;
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) mean += x.at(b, ch, i, j);
    mean /= count;
    double var = 0.0;
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) var += (x.at(b, ch, i, j) - mean) * (x.at(b, ch, i, j) - mean);
    var /= count;
    for (int b = 0; b < n; ++b)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          y.at(b, ch, i, j) = gamma[ch] * (x.at(b, ch, i, j) - mean) / std::sqrt(var + epsilon) + beta[ch];
  }
  return y;
}

double naive_iou(const Box& a, const Box& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

std::vector<Detection> naive_nms(const std::vector<Detection>& dets, double thr) {
  std::vector<Detection> sorted = dets;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : sorted) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == d.class_id && naive_iou(k.box, d.box) > thr) suppressed = true;
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

MatchAssignment naive_match(const std::vector<Box>& defaults, const std::vector<Box>& gt,
                            double threshold, bool strict) {
  MatchAssignment a;
  const std::size_t nd = defaults.size(), ng = gt.size();
  a.labels.assign(nd, MatchAssignment::kBackground);
  a.matched_gt.assign(nd, std::nullopt);
  a.targets.assign(nd, std::nullopt);
  std::vector<bool> gt_done(ng, false), def_done(nd, false);
  for (;;) {
    double best = strict ? threshold : 0.0;
    std::size_t bg = ng, bd = nd;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gt_done[g]) continue;
      for (std::size_t d = 0; d < nd; ++d) {
        if (def_done[d]) continue;
        const double o = naive_iou(gt[g], defaults[d]);
        if (o > best) {
          best = o;
          bg = g;
          bd = d;
        }
      }
    }
    if (bg == ng) break;
    gt_done[bg] = def_done[bd] = true;
    a.matched_gt[bd] = static_cast<int>(bg);
  }
  for (std::size_t d = 0; d < nd; ++d) {
    if (def_done[d]) continue;
    double best = -1.0;
    std::size_t bg = ng;
    for (std::size_t g = 0; g < ng; ++g) {
      const double o = naive_iou(gt[g], defaults[d]);
      if (o > best) {
        best = o;
        bg = g;
      }
    }
    if (bg < ng && best > threshold) a.matched_gt[d] = static_cast<int>(bg);
  }
  for (std::size_t d = 0; d < nd; ++d) {
    if (!a.matched_gt[d]) continue;
    const Box& g = gt[*a.matched_gt[d]];
    const Box& b = defaults[d];
    a.labels[d] = MatchAssignment::kNoise;
    a.targets[d] = OffsetVector{(g.cx - b.cx) / b.w, (g.cy - b.cy) / b.h, std::log(g.w / b.w),
                                std::log(g.h / b.h)};
    ++a.num_positive;
  }
  return a;
}

double naive_ap(const std::vector<Detection>& dets, const GroundTruthSet& gt, double thr) {
  std::size_t total = 0;
  for (const auto& [id, boxes] : gt) total += boxes.size();
  if (total == 0) return 0.0;
  std::vector<Detection> sorted = dets;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [id, boxes] : gt) used[id].assign(boxes.size(), false);
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const auto it = gt.find(sorted[k].image_id);
    if (it != gt.end()) {
      double best = -1.0;
      std::size_t bj = it->second.size();
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (used[it->first][j]) continue;
        const double o = naive_iou(sorted[k].box, it->second[j]);
        if (o >= thr && o > best) {
          best = o;
          bj = j;
        }
      }
      if (bj < it->second.size()) {
        used[it->first][bj] = true;
        ++tp;
      }
    }
    prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(total));
  }
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    double p = 0.0;
    for (std::size_t k = 0; k < prec.size(); ++k) {
      if (rec[k] >= r / 100.0) p = std::max(p, prec[k]);
    }
    sum += p;
  }
  return sum / 101.0;
}

double focal_closed_form(double p_t, double alpha_t, double gamma) {
  return -alpha_t * std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

double ScalarRmsprop::step(double param, double grad) {
  const double g = grad + l2 * param;
  ms = decay * ms + (1.0 - decay) * g * g;
  mom = momentum * mom + lr * g / std::sqrt(ms + epsilon);
  return param - mom;
}

}  // namespace shotnet::verify
