// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/verify/suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "shotnet/box.hpp"
#include "shotnet/checkpoint.hpp"
#include "shotnet/config.hpp"
#include "shotnet/detector.hpp"
#include "shotnet/evaluation.hpp"
#include "shotnet/graph.hpp"
#include "shotnet/losses.hpp"
#include "shotnet/ops.hpp"
#include "shotnet/rng.hpp"
#include "shotnet/synthetic_data.hpp"
#include "shotnet/verify/gradcheck.hpp"
#include "shotnet/verify/oracles.hpp"

namespace shotnet::verify {

namespace fs = std::filesystem;
using Var = Graph<double>::Var;

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

CheckResult start(std::string category, std::string name) {
  CheckResult c;
  c.category = std::move(category);
  c.name = std::move(name);
  return c;
}

CheckResult from_report(const GradCheckReport& r, double seconds) {
  CheckResult c = start("gradient", r.name);
  c.passed = r.passed;
  c.cases = r.checked;
  c.worst = r.max_rel_error;
  if (r.skipped > 0) c.detail = std::to_string(r.skipped) + " inputs unresolved (kinks)";
  c.seconds = seconds;
  return c;
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                             double gap = 0.0) {
  Tensor<double> t(std::move(shape));
  fill_uniform(t, seed, lo, hi, gap);
  return t;
}

ConvSpec conv_spec(int out, int k, int stride, bool depthwise = false,
                   Padding padding = Padding::kSameCeil) {
  ConvSpec s;
  s.out_channels = out;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.padding = padding;
  s.depthwise = depthwise;
  return s;
}

Box random_box(Rng& rng, double min_side = 0.05, double max_side = 0.6) {
  const double w = rng.uniform(min_side, max_side);
  const double h = rng.uniform(min_side, max_side);
  return Box{rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h};
}

/// Random default boxes on a coarse grid plus random ground truth.
std::pair<std::vector<Box>, std::vector<Box>> random_layout(Rng& rng, int defaults, int gts) {
  std::vector<Box> d, g;
  for (int i = 0; i < defaults; ++i) d.push_back(random_box(rng, 0.05, 0.5));
  for (int i = 0; i < gts; ++i) g.push_back(random_box(rng, 0.05, 0.5));
  return {d, g};
}

// --- gradient checks --------------------------------------------------------

template <typename Fn>
CheckResult timed(Fn&& fn) {
  Timer t;
  GradCheckReport r = fn();
  return from_report(r, t.seconds());
}

void op_gradients(std::vector<CheckResult>& out, std::uint64_t seed) {
  auto conv_case = [&](const std::string& name, Shape xs, int out_ch, int k, int stride, bool bias,
                       std::uint64_t s) {
    return timed([&] {
      Tensor<double> x = random_tensor(xs, s);
      Tensor<double> w = random_tensor({out_ch, xs[1], k, k}, s + 1);
      Tensor<double> b = random_tensor({out_ch}, s + 2);
      std::vector<Tensor<double>*> in = {&x, &w};
      if (bias) in.push_back(&b);
      const ConvSpec spec = conv_spec(out_ch, k, stride);
      return gradcheck_graph(name, in, [&](Graph<double>& g, const std::vector<Var>& v) {
        return g.conv2d(v[0], v[1], bias ? std::optional<Var>(v[2]) : std::nullopt, spec);
      });
    });
  };
  out.push_back(conv_case("conv2d 3x3 stride 1 + bias", {2, 3, 5, 6}, 4, 3, 1, true, seed + 10));
  out.push_back(conv_case("conv2d 3x3 stride 2 odd extents", {2, 3, 7, 5}, 3, 3, 2, false, seed + 20));
  out.push_back(conv_case("conv2d 1x1 stride 1 + bias", {2, 5, 4, 3}, 3, 1, 1, true, seed + 30));
  out.push_back(conv_case("conv2d 1x1 stride 2", {1, 4, 5, 5}, 2, 1, 2, false, seed + 40));

  auto dw_case = [&](const std::string& name, Shape xs, int stride, bool bias, std::uint64_t s) {
    return timed([&] {
      Tensor<double> x = random_tensor(xs, s);
      Tensor<double> w = random_tensor({xs[1], 1, 3, 3}, s + 1);
      Tensor<double> b = random_tensor({xs[1]}, s + 2);
      std::vector<Tensor<double>*> in = {&x, &w};
      if (bias) in.push_back(&b);
      const ConvSpec spec = conv_spec(xs[1], 3, stride, true);
      return gradcheck_graph(name, in, [&](Graph<double>& g, const std::vector<Var>& v) {
        return g.depthwise_conv2d(v[0], v[1], bias ? std::optional<Var>(v[2]) : std::nullopt, spec);
      });
    });
  };
  out.push_back(dw_case("depthwise 3x3 stride 1 + bias", {2, 3, 5, 4}, 1, true, seed + 50));
  out.push_back(dw_case("depthwise 3x3 stride 2 odd extents", {2, 4, 7, 5}, 2, false, seed + 60));

  for (const Mode mode : {Mode::kTrain, Mode::kInfer}) {
    out.push_back(timed([&] {
      Tensor<double> x = random_tensor({3, 4, 3, 5}, seed + 70);
      BatchNormParams<double> bn(4);
      fill_uniform(bn.gamma, seed + 71, 0.5, 1.5);
      fill_uniform(bn.beta, seed + 72, -0.5, 0.5);
      fill_uniform(bn.running_mean, seed + 73, -0.3, 0.3);
      fill_uniform(bn.running_var, seed + 74, 0.5, 2.0);
      const std::string name = mode == Mode::kTrain ? "batch_norm train" : "batch_norm infer";
      return gradcheck_graph(name, {&x, &bn.gamma, &bn.beta},
                             [&](Graph<double>& g, const std::vector<Var>& v) {
                               return g.batch_norm(v[0], bn, mode, 0.9, 1e-3);
                             });
    }));
  }

  out.push_back(timed([&] {
    Tensor<double> x = random_tensor({2, 3, 4, 4}, seed + 80, -1.0, 1.0, 0.01);
    return gradcheck_graph("relu", {&x}, [](Graph<double>& g, const std::vector<Var>& v) {
      return g.relu(v[0]);
    });
  }));
  for (const auto& [th, tw, label] : {std::tuple{6, 8, "upsample 2x exact"}, std::tuple{5, 7, "upsample 2x trimmed"}}) {
    out.push_back(timed([&, th = th, tw = tw, label = label] {
      Tensor<double> x = random_tensor({2, 2, 3, 4}, seed + 90);
      return gradcheck_graph(label, {&x}, [&](Graph<double>& g, const std::vector<Var>& v) {
        return g.upsample_nearest2x(v[0], th, tw);
      });
    }));
  }
  out.push_back(timed([&] {
    Tensor<double> a = random_tensor({2, 3, 2, 2}, seed + 100);
    Tensor<double> b = random_tensor({2, 3, 2, 2}, seed + 101);
    return gradcheck_graph("add", {&a, &b}, [](Graph<double>& g, const std::vector<Var>& v) {
      return g.add(v[0], v[1]);
    });
  }));
  out.push_back(timed([&] {
    Tensor<double> a = random_tensor({2, 3, 2, 2}, seed + 110);
    return gradcheck_graph("sum", {&a}, [](Graph<double>& g, const std::vector<Var>& v) {
      return g.sum(v[0]);
    });
  }));
  out.push_back(timed([&] {
    Tensor<double> a = random_tensor({2, 6, 3, 2}, seed + 120);
    Tensor<double> b = random_tensor({2, 6, 2, 1}, seed + 121);
    return gradcheck_graph("flatten_anchor_maps", {&a, &b},
                           [](Graph<double>& g, const std::vector<Var>& v) {
                             return g.flatten_anchor_maps({v[0], v[1]}, 2);
                           });
  }));
}

MatchAssignment random_assignment(std::uint64_t seed, int boxes) {
  Rng rng(seed);
  auto [d, g] = random_layout(rng, boxes, 3);
  return match_boxes(d, g, MatchOptions{0.3, false});
}

void loss_gradients(std::vector<CheckResult>& out, std::uint64_t seed) {
  const int boxes = 40;
  const MatchAssignment a = random_assignment(seed + 200, boxes);

  auto logits_case = [&](const std::string& name, int classes,
                         const std::function<double(const Tensor<double>&, Tensor<double>*)>& loss,
                         std::uint64_t s) {
    return timed([&] {
      Tensor<double> z = random_tensor({boxes, classes}, s, -3.0, 3.0);
      Tensor<double> grad;
      loss(z, &grad);
      return gradcheck(name, {&z}, [&] { return loss(z, nullptr); },
                       {std::vector<double>(grad.data().begin(), grad.data().end())});
    });
  };

  out.push_back(logits_case("confidence_loss (all negatives)", 2,
                            [&](const Tensor<double>& z, Tensor<double>* g) {
                              return confidence_loss(z, a, g);
                            },
                            seed + 210));
  {
    Tensor<double> z0 = random_tensor({boxes, 2}, seed + 220, -3.0, 3.0);
    const auto mask = hard_negative_mask(z0, a, 3);
    out.push_back(logits_case("confidence_loss (hard-negative mask)", 2,
                              [&](const Tensor<double>& z, Tensor<double>* g) {
                                return confidence_loss(z, a, g, &mask);
                              },
                              seed + 220));
  }
  out.push_back(logits_case("confidence_loss 3 classes", 3,
                            [&](const Tensor<double>& z, Tensor<double>* g) {
                              return confidence_loss(z, a, g);
                            },
                            seed + 230));
  struct FocalCase {
    double alpha, gamma;
    int classes;
  };
  for (const FocalCase fc : {FocalCase{0.7, 2.0, 2}, FocalCase{0.5, 0.0, 2}, FocalCase{0.25, 0.5, 2},
                             FocalCase{0.7, 2.0, 3}}) {
    char name[64];
    std::snprintf(name, sizeof(name), "focal_loss a=%.2f g=%.1f K=%d", fc.alpha, fc.gamma, fc.classes);
    out.push_back(logits_case(name, fc.classes,
                              [&](const Tensor<double>& z, Tensor<double>* g) {
                                return focal_loss(z, a, fc.alpha, fc.gamma, g);
                              },
                              seed + 240));
  }

  out.push_back(timed([&] {
    // Offsets kept away from the |z| = 1 kink of smooth-L1.
    Tensor<double> o({boxes, 4});
    Rng rng(seed + 250);
    for (int i = 0; i < boxes; ++i) {
      for (int m = 0; m < 4; ++m) {
        const double t = a.targets[i] ? (*a.targets[i])[m] : 0.0;
        double z;
        do {
          z = rng.uniform(-2.5, 2.5);
        } while (std::abs(std::abs(z) - 1.0) < 0.01);
        o[i * 4 + m] = t + z;
      }
    }
    Tensor<double> grad;
    localization_loss(o, a, &grad);
    return gradcheck("localization_loss", {&o}, [&] { return localization_loss(o, a); },
                     {std::vector<double>(grad.data().begin(), grad.data().end())});
  }));

  for (const bool focal : {true, false}) {
    out.push_back(timed([&] {
      LossConfig cfg;
      cfg.focal_enabled = focal;
      Tensor<double> z = random_tensor({boxes, 2}, seed + 260, -3.0, 3.0);
      Tensor<double> o = random_tensor({boxes, 4}, seed + 261, -0.45, 0.45);
      const auto r = multitask_loss(z, o, a, cfg);
      return gradcheck(focal ? "multitask_loss (focal)" : "multitask_loss (CE + mining)", {&z, &o},
                       [&] { return multitask_loss(z, o, a, cfg).value; },
                       {std::vector<double>(r.grad_logits.data().begin(), r.grad_logits.data().end()),
                        std::vector<double>(r.grad_offsets.data().begin(), r.grad_offsets.data().end())});
    }));
  }

  out.push_back(timed([&] {
    LossConfig cfg;
    std::vector<MatchAssignment> as = {a, random_assignment(seed + 270, boxes)};
    Tensor<double> z = random_tensor({2, boxes, 2}, seed + 271, -3.0, 3.0);
    Tensor<double> o = random_tensor({2, boxes, 4}, seed + 272, -0.45, 0.45);
    const auto r = batch_multitask_loss(z, o, as, cfg);
    return gradcheck("batch_multitask_loss", {&z, &o},
                     [&] { return batch_multitask_loss(z, o, as, cfg).value; },
                     {std::vector<double>(r.grad_logits.data().begin(), r.grad_logits.data().end()),
                      std::vector<double>(r.grad_offsets.data().begin(), r.grad_offsets.data().end())});
  }));
}

void detector_gradient(std::vector<CheckResult>& out, std::uint64_t seed) {
  out.push_back(timed([&] {
    BackboneConfig bc;
    bc.width_multiplier = 0.25;
    bc.fpn_channels = 8;
    bc.input_h = 64;
    bc.input_w = 72;
    Detector<double> det = Detector<double>::build(bc, AnchorConfig{}, seed + 300);
    Tensor<double> images = random_tensor({2, 1, 64, 72}, seed + 301);
    Rng rng(seed + 302);
    std::vector<MatchAssignment> as;
    for (int n = 0; n < 2; ++n) {
      std::vector<Box> gt = {random_box(rng, 0.1, 0.6), random_box(rng, 0.1, 0.6)};
      as.push_back(match_boxes(det.default_boxes(), gt));
    }
    LossConfig cfg;
    auto params = det.parameters();
    std::vector<Tensor<double>*> inputs = {&images};
    for (auto& p : params) {
      if (p.trainable()) inputs.push_back(p.tensor);
    }
    const auto loss = [&](bool record) {
      Graph<double> g(record);
      const auto x = g.leaf(images);
      const auto h = det.forward(g, x, Mode::kTrain);
      auto r = batch_multitask_loss(g.value(h.class_logits), g.value(h.box_offsets), as, cfg);
      if (record) {
        const auto root = g.external_scalar(r.value, {{h.class_logits, std::move(r.grad_logits)},
                                                      {h.box_offsets, std::move(r.grad_offsets)}});
        g.backward(root);
      }
      return r.value;
    };
    for (auto* t : inputs) t->zero_grad();
    loss(true);
    std::vector<std::vector<double>> analytic;
    for (auto* t : inputs) analytic.emplace_back(t->grad().begin(), t->grad().end());
    // At initialization the loss has ReLU kinks on the 1e-8 scale along a
    // random parameter direction, below any useful per-element step.
    return directional_gradcheck("detector end-to-end (backbone + head + loss)", inputs,
                                 [&] { return loss(false); }, analytic);
  }));
}

// --- oracle equivalence ------------------------------------------------------

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return m;
}

CheckResult conv_oracle(const SuiteOptions& o, bool depthwise) {
  Timer t;
  CheckResult c = start("oracle", depthwise ? "depthwise_conv2d vs direct loops" : "conv2d vs direct loops");
  Rng rng(o.seed + (depthwise ? 401 : 400));
  for (int k = 0; k < o.oracle_cases; ++k) {
    const int n = static_cast<int>(rng.uniform_int(1, 2));
    const int ch = static_cast<int>(rng.uniform_int(1, 4));
    const int out_ch = depthwise ? ch : static_cast<int>(rng.uniform_int(1, 5));
    const int kernel = rng.uniform() < 0.5 ? 1 : 3;
    const int stride = static_cast<int>(rng.uniform_int(1, 2));
    const bool same = rng.uniform() < 0.8;
    const int h = static_cast<int>(rng.uniform_int(same ? 1 : kernel, 9));
    const int w = static_cast<int>(rng.uniform_int(same ? 1 : kernel, 9));
    const bool bias = rng.uniform() < 0.5;
    Tensor<double> x = random_tensor({n, ch, h, w}, rng.next_u64());
    Tensor<double> wt = random_tensor({out_ch, depthwise ? 1 : ch, kernel, kernel}, rng.next_u64());
    Tensor<double> b = random_tensor({out_ch}, rng.next_u64());
    const ConvSpec spec = conv_spec(out_ch, kernel, stride, depthwise, same ? Padding::kSameCeil : Padding::kNone);
    const Tensor<double> got = depthwise ? ops::depthwise_conv2d(x, wt, bias ? &b : nullptr, spec)
                                         : ops::conv2d(x, wt, bias ? &b : nullptr, spec);
    const Tensor<double> want = depthwise ? naive_depthwise_conv2d(x, wt, bias ? &b : nullptr, stride, same)
                                          : naive_conv2d(x, wt, bias ? &b : nullptr, stride, same);
    c.worst = std::max(c.worst, max_abs_diff(got, want));
    ++c.cases;
  }
  c.passed = c.worst <= 1e-6;
  c.seconds = t.seconds();
  return c;
}

CheckResult batch_norm_oracle(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("oracle", "batch_norm train vs two-pass statistics");
  Rng rng(o.seed + 402);
  for (int k = 0; k < o.oracle_cases; ++k) {
    const Shape s = {static_cast<int>(rng.uniform_int(1, 3)), static_cast<int>(rng.uniform_int(1, 4)),
                     static_cast<int>(rng.uniform_int(1, 5)), static_cast<int>(rng.uniform_int(1, 5))};
    if (s[0] * s[2] * s[3] < 2) continue;
    Tensor<double> x = random_tensor(s, rng.next_u64(), -2.0, 3.0);
    BatchNormParams<double> bn(s[1]);
    fill_uniform(bn.gamma, rng.next_u64(), 0.5, 1.5);
    fill_uniform(bn.beta, rng.next_u64(), -0.5, 0.5);
    const auto got = ops::batch_norm(x, bn, Mode::kTrain, 0.9, 1e-3);
    const auto want = naive_batch_norm_train(x, bn.gamma, bn.beta, 1e-3);
    c.worst = std::max(c.worst, max_abs_diff(got, want));
    ++c.cases;
  }
  c.passed = c.cases >= static_cast<std::size_t>(o.oracle_cases) * 9 / 10 && c.worst <= 1e-6;
  c.seconds = t.seconds();
  return c;
}

std::vector<Detection> random_detections(Rng& rng, int count, int images) {
  std::vector<Detection> d;
  for (int i = 0; i < count; ++i) {
    Detection x;
    x.image_id = "img" + std::to_string(rng.uniform_int(0, images - 1));
    x.box = random_box(rng, 0.05, 0.5);
    // Coarse scores force ties.
    x.score = std::round(rng.uniform() * 10.0) / 10.0;
    x.class_id = static_cast<int>(rng.uniform_int(1, 2));
    d.push_back(x);
  }
  return d;
}

bool same_detections(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].image_id != b[i].image_id || !(a[i].box == b[i].box) || a[i].score != b[i].score ||
        a[i].class_id != b[i].class_id) {
      return false;
    }
  }
  return true;
}

CheckResult nms_oracle(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("oracle", "nms vs pairwise definition");
  Rng rng(o.seed + 403);
  std::size_t mismatches = 0;
  for (int k = 0; k < o.oracle_cases; ++k) {
    // Clustered boxes so suppression actually happens.
    auto dets = random_detections(rng, static_cast<int>(rng.uniform_int(0, 30)), 1);
    for (auto& d : dets) {
      d.box.cx = 0.5 + (d.box.cx - 0.5) * 0.3;
      d.box.cy = 0.5 + (d.box.cy - 0.5) * 0.3;
    }
    const double thr = rng.uniform(0.2, 0.8);
    if (!same_detections(nms(dets, thr), naive_nms(dets, thr))) ++mismatches;
    ++c.cases;
  }
  c.worst = static_cast<double>(mismatches);
  c.passed = mismatches == 0;
  c.detail = std::to_string(mismatches) + " mismatching cases";
  c.seconds = t.seconds();
  return c;
}

CheckResult match_oracle(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("oracle", "match_boxes vs exhaustive matcher");
  Rng rng(o.seed + 404);
  std::size_t mismatches = 0;
  for (int k = 0; k < o.oracle_cases; ++k) {
    auto [d, g] = random_layout(rng, static_cast<int>(rng.uniform_int(1, 60)),
                                static_cast<int>(rng.uniform_int(0, 6)));
    const bool strict = k % 3 == 2;
    const double thr = rng.uniform(0.3, 0.6);
    const auto got = match_boxes(d, g, MatchOptions{thr, strict});
    const auto want = naive_match(d, g, thr, strict);
    bool same = got.labels == want.labels && got.matched_gt == want.matched_gt &&
                got.num_positive == want.num_positive;
    for (std::size_t i = 0; same && i < d.size(); ++i) {
      if (!got.targets[i]) continue;
      for (int m = 0; m < 4; ++m) {
        const double diff = std::abs((*got.targets[i])[m] - (*want.targets[i])[m]);
        c.worst = std::max(c.worst, diff);
        if (diff > 1e-12) same = false;
      }
    }
    if (!same) ++mismatches;
    ++c.cases;
  }
  c.passed = mismatches == 0;
  c.detail = std::to_string(mismatches) + " mismatching cases";
  c.seconds = t.seconds();
  return c;
}

CheckResult ap_oracle(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("oracle", "compute_ap vs exhaustive evaluator");
  Rng rng(o.seed + 405);
  for (int k = 0; k < o.oracle_cases; ++k) {
    const int images = static_cast<int>(rng.uniform_int(1, 3));
    GroundTruthSet gt;
    for (int i = 0; i < images; ++i) {
      auto& boxes = gt["img" + std::to_string(i)];
      const int n = static_cast<int>(rng.uniform_int(0, 6));
      for (int j = 0; j < n; ++j) boxes.push_back(random_box(rng, 0.1, 0.5));
    }
    // Detections: jittered copies of GT plus clutter.
    std::vector<Detection> dets = random_detections(rng, static_cast<int>(rng.uniform_int(0, 8)), images);
    for (const auto& [id, boxes] : gt) {
      for (const Box& b : boxes) {
        if (rng.uniform() < 0.2) continue;
        Box j = b;
        j.cx += rng.uniform(-0.05, 0.05);
        j.cy += rng.uniform(-0.05, 0.05);
        j.w *= rng.uniform(0.8, 1.2);
        j.h *= rng.uniform(0.8, 1.2);
        dets.push_back({id, j, 1, rng.uniform()});
      }
    }
    if (dets.size() > 20) dets.resize(20);
    const double thr = coco_iou_thresholds()[k % 10];
    c.worst = std::max(c.worst, std::abs(compute_ap(dets, gt, thr) - naive_ap(dets, gt, thr)));
    ++c.cases;
  }
  c.passed = c.worst <= 1e-12;
  c.seconds = t.seconds();
  return c;
}

// --- round trips ---------------------------------------------------------------

CheckResult encode_roundtrip(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("round-trip", "decode(encode(g, d)) == g");
  Rng rng(o.seed + 500);
  for (int k = 0; k < 10 * o.oracle_cases; ++k) {
    const Box g = random_box(rng, 0.01, 0.9);
    const Box d = random_box(rng, 0.01, 0.9);
    const Box r = decode_offsets(encode_offsets(g, d), d);
    c.worst = std::max({c.worst, std::abs(r.cx - g.cx), std::abs(r.cy - g.cy), std::abs(r.w - g.w),
                        std::abs(r.h - g.h)});
    ++c.cases;
  }
  c.passed = c.worst <= 1e-12;
  c.seconds = t.seconds();
  return c;
}

fs::path scratch(const SuiteOptions& o, const std::string& leaf) {
  fs::path base = o.scratch_dir;
  if (base.empty()) base = fs::temp_directory_path() / ("shotnet-verify-" + std::to_string(o.seed));
  fs::remove_all(base / leaf);
  fs::create_directories(base / leaf);
  return base / leaf;
}

CheckResult checkpoint_roundtrip(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("round-trip", "checkpoint save/load, forward bit-exact");
  RunConfig cfg = RunConfig::desk();
  cfg.backbone.input_h = cfg.backbone.input_w = 64;
  cfg.backbone.fpn_channels = 8;
  Detector<float> a = Detector<float>::build(cfg.backbone, cfg.anchors, o.seed + 600);
  // Perturb running statistics so they are not at their defaults.
  for (auto& p : a.parameters()) {
    if (p.kind == ParamKind::kBnStatistic || p.kind == ParamKind::kBnGamma) {
      Rng rng(o.seed + 601);
      for (float& v : p.tensor->data()) v = static_cast<float>(rng.uniform(0.5, 1.5));
    }
  }
  RmspropState<float> opt;
  const fs::path path = scratch(o, "ckpt") / "model.sgck";
  save_checkpoint(path, capture_checkpoint(a, &opt, cfg.loss, cfg.train));
  Detector<float> b = detector_from_checkpoint(load_checkpoint(path));
  Tensor<float> img({2, 1, 64, 64});
  Rng rng(o.seed + 602);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(-1, 1));
  Graph<float> ga(false), gb(false);
  const auto ha = a.forward(ga, ga.constant(img), Mode::kInfer);
  const auto hb = b.forward(gb, gb.constant(img), Mode::kInfer);
  c.passed = ga.value(ha.class_logits) == gb.value(hb.class_logits) &&
             ga.value(ha.box_offsets) == gb.value(hb.box_offsets);
  c.cases = 1;
  c.detail = c.passed ? "" : "forward outputs differ after reload";
  c.seconds = t.seconds();
  return c;
}

CheckResult dataset_roundtrip(const SuiteOptions& o) {
  Timer t;
  CheckResult c = start("round-trip", "dataset write/read bit-exact");
  SynthConfig sc = SynthConfig::desk();
  sc.rng_seed = o.seed;
  const auto samples = generate_corpus(sc, 10);
  const fs::path dir = scratch(o, "dataset");
  write_dataset(samples, dir);
  const auto back = read_dataset(dir);
  c.passed = back.size() == samples.size();
  for (std::size_t i = 0; c.passed && i < samples.size(); ++i) {
    c.passed = back[i].id == samples[i].id && back[i].image == samples[i].image &&
               back[i].boxes == samples[i].boxes;
  }
  c.cases = samples.size();
  c.seconds = t.seconds();
  return c;
}

CheckResult config_roundtrip(const SuiteOptions&) {
  Timer t;
  CheckResult c = start("round-trip", "run config JSON round-trip");
  const RunConfig a = RunConfig::desk();
  c.passed = parse_run_config(run_config_to_json(a)) == a &&
             parse_run_config(run_config_to_json(RunConfig{})) == RunConfig{};
  c.cases = 2;
  c.seconds = t.seconds();
  return c;
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(const SuiteOptions& o) {
  std::vector<CheckResult> out;
  op_gradients(out, o.seed);
  loss_gradients(out, o.seed);
  detector_gradient(out, o.seed);
  return out;
}

std::vector<CheckResult> run_oracle_checks(const SuiteOptions& o) {
  return {conv_oracle(o, false), conv_oracle(o, true), batch_norm_oracle(o), nms_oracle(o),
          match_oracle(o), ap_oracle(o)};
}

std::vector<CheckResult> run_roundtrip_checks(const SuiteOptions& o) {
  return {encode_roundtrip(o), checkpoint_roundtrip(o), dataset_roundtrip(o), config_roundtrip(o)};
}

std::vector<CheckResult> run_verify_suite(const SuiteOptions& o) {
  std::vector<CheckResult> all = run_gradient_checks(o);
  for (auto& r : run_oracle_checks(o)) all.push_back(std::move(r));
  for (auto& r : run_roundtrip_checks(o)) all.push_back(std::move(r));
  return all;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return !results.empty() &&
         std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

std::string format_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-6s %-11s %-48s %7s %11s %8s\n", "result", "category", "check",
                "cases", "worst", "seconds");
  os << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%-6s %-11s %-48s %7zu %11.3e %8.2f", r.passed ? "PASS" : "FAIL",
                  r.category.c_str(), r.name.c_str(), r.cases, r.worst, r.seconds);
    os << line;
    if (!r.detail.empty()) os << "  " << r.detail;
    os << "\n";
  }
  return os.str();
}

}  // namespace shotnet::verify
