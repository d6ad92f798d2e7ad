// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "shotnet/detector.hpp"
#include "shotnet/ssd_head.hpp"
#include "test_util.hpp"

namespace shotnet {
namespace {

using testing::random_tensor;
using Var = Graph<double>::Var;

TEST(Anchors, PaperSizeCount) {
  const AnchorConfig cfg;
  EXPECT_EQ(cfg.anchors_per_location(), 6);
  const auto boxes = generate_default_boxes(cfg, projection_sizes(600, 600), 600, 600);
  EXPECT_EQ(boxes.size(), 44580u);
  EXPECT_EQ(6 * (75 * 75 + 38 * 38 + 19 * 19), 44580);
}

TEST(Anchors, SingleCellSingleRatio) {
  AnchorConfig cfg;
  cfg.aspect_ratios = {1.0};
  cfg.extra_scale_for_ratio1 = false;
  const auto boxes = generate_default_boxes(cfg, {{1, 1, 8}}, 8, 8);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].cx, 0.5);
  EXPECT_EQ(boxes[0].cy, 0.5);
  EXPECT_NEAR(boxes[0].w, 0.08, 1e-15);
}

TEST(Anchors, RatioTwoShape) {
  AnchorConfig cfg;
  cfg.aspect_ratios = {2.0};
  cfg.extra_scale_for_ratio1 = false;
  cfg.scales = {0.2, 0.3, 0.4};
  const auto boxes = generate_default_boxes(cfg, {{1, 1, 8}}, 8, 8);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_NEAR(boxes[0].w, 0.2828427, 1e-6);
  EXPECT_NEAR(boxes[0].h, 0.1414214, 1e-6);
  EXPECT_NEAR(boxes[0].w / boxes[0].h, 2.0, 1e-6);
}

TEST(Anchors, ExtraBoxUsesGeometricMeanScale) {
  AnchorConfig cfg;
  cfg.aspect_ratios = {1.0};
  const auto sizes = projection_sizes(64, 64);
  const auto boxes = generate_default_boxes(cfg, sizes, 64, 64);
  // p8 cell (0,0): the extra box has side sqrt(0.08 * 0.20), clipped at 0.
  const Box extra = boxes[1];
  const double s = std::sqrt(0.08 * 0.20);
  EXPECT_NEAR(extra.x1(), 0.5 / 8 + s / 2, 1e-12);
  // The stride-32 extra box pairs 0.42 with 1.
  const Box last = boxes.back();
  EXPECT_NEAR(last.x0(), 1.5 / 2 - std::sqrt(0.42) / 2, 1e-12);
}

TEST(Anchors, CentersInsideAndOrder) {
  const AnchorConfig cfg;
  const auto boxes = generate_default_boxes(cfg, projection_sizes(192, 160), 192, 160);
  EXPECT_EQ(boxes.size(), 6u * (24 * 20 + 12 * 10 + 6 * 5));
  for (const auto& b : boxes) {
    EXPECT_GT(b.cx, 0.0);
    EXPECT_LT(b.cx, 1.0);
    EXPECT_GT(b.cy, 0.0);
    EXPECT_LT(b.cy, 1.0);
    EXPECT_GE(b.x0(), -1e-12);
    EXPECT_LE(b.x1(), 1.0 + 1e-12);
  }
  // Row-major cells, anchors innermost: the 7th box is cell (0, 1). Only
  // coordinates far enough from the border to escape clipping are checked.
  EXPECT_NEAR(boxes[6].cx, 1.5 / 20, 1e-12);
  EXPECT_NEAR(boxes[6 * 20].cy, 1.5 / 24, 1e-12);
  EXPECT_NEAR(boxes[6 * 20].cx, 0.5 / 20, 0.5 / 20);
}

TEST(Anchors, InconsistentSizesRejected) {
  EXPECT_THROW(generate_default_boxes(AnchorConfig{}, {{10, 10, 8}}, 64, 64), ConfigError);
  EXPECT_THROW(generate_default_boxes(AnchorConfig{}, {}, 64, 64), ConfigError);
  AnchorConfig bad;
  bad.scales = {0.3, 0.2, 0.4};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = AnchorConfig{};
  bad.aspect_ratios = {1.0, -2.0};
  EXPECT_THROW(bad.validate(), ConfigError);
}

ProjectionSet<double> constant_projections(Graph<double>& g, int n, int c, int h, int w,
                                           std::uint64_t seed) {
  const auto sizes = projection_sizes(h, w);
  ProjectionSet<double> p;
  Var* slots[3] = {&p.p8, &p.p16, &p.p32};
  for (int k = 0; k < 3; ++k) {
    *slots[k] = g.constant(random_tensor<double>({n, c, sizes[k].h, sizes[k].w}, seed + k));
  }
  return p;
}

TEST(Head, ZeroWeightsGiveBias) {
  auto head = SsdHead<double>::build(AnchorConfig{}, 8, 3);
  for (auto& l : head.levels) {
    l.cls_weight.fill(0.0);
    l.box_weight.fill(0.0);
  }
  Graph<double> g(false);
  const auto out = head.forward(g, constant_projections(g, 2, 8, 64, 64, 1));
  const auto& logits = g.value(out.class_logits);
  const double prior = std::log(0.01 / 0.99);
  EXPECT_NEAR(prior, -4.59512, 1e-5);
  for (std::size_t i = 0; i < logits.size(); i += 2) {
    EXPECT_EQ(logits[i], 0.0);
    EXPECT_EQ(logits[i + 1], prior);
  }
  for (double v : g.value(out.box_offsets).data()) EXPECT_EQ(v, 0.0);
}

TEST(Head, OutputCountMatchesAnchors) {
  for (const auto& [h, w] : {std::pair{64, 64}, std::pair{100, 72}, std::pair{192, 192}}) {
    const AnchorConfig cfg;
    auto head = SsdHead<double>::build(cfg, 8, 3);
    Graph<double> g(false);
    const auto out = head.forward(g, constant_projections(g, 1, 8, h, w, 2));
    const auto b = generate_default_boxes(cfg, projection_sizes(h, w), h, w).size();
    EXPECT_EQ(g.value(out.class_logits).shape(), (Shape{1, static_cast<int>(b), 2}));
    EXPECT_EQ(g.value(out.box_offsets).shape(), (Shape{1, static_cast<int>(b), 4}));
  }
}

TEST(Head, ChannelMismatchRejected) {
  auto head = SsdHead<double>::build(AnchorConfig{}, 8, 3);
  Graph<double> g(false);
  EXPECT_THROW(head.forward(g, constant_projections(g, 1, 4, 64, 64, 2)), ShapeError);
}

// With only the centre tap of every head kernel kept, an output cell depends
// on its own input cell alone, so a one-cell perturbation of p32 must touch
// exactly the A rows of that cell.
TEST(Head, LocalityProbeMatchesAnchorOrder) {
  const AnchorConfig cfg;
  const int a = cfg.anchors_per_location();
  auto head = SsdHead<double>::build(cfg, 8, 4);
  for (auto& l : head.levels) {
    for (Tensor<double>* w : {&l.cls_weight, &l.box_weight}) {
      for (int o = 0; o < w->dim(0); ++o)
        for (int c = 0; c < w->dim(1); ++c)
          for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x)
              if (y != 1 || x != 1) w->at(o, c, y, x) = 0.0;
    }
  }
  const int h = 96, w = 128;
  const auto sizes = projection_sizes(h, w);
  std::vector<Tensor<double>> maps;
  for (int k = 0; k < 3; ++k) maps.push_back(random_tensor<double>({1, 8, sizes[k].h, sizes[k].w}, 10 + k));

  auto run = [&](const std::vector<Tensor<double>>& m) {
    Graph<double> g(false);
    ProjectionSet<double> p{g.constant(m[0]), g.constant(m[1]), g.constant(m[2])};
    const auto out = head.forward(g, p);
    return std::pair{g.value(out.class_logits), g.value(out.box_offsets)};
  };
  const auto base = run(maps);
  const int ci = 2, cj = 1;  // cell of the 3x4 stride-32 map
  auto bumped = maps;
  for (int c = 0; c < 8; ++c) bumped[2].at(0, c, ci, cj) += 1.0;
  const auto moved = run(bumped);

  const std::size_t start = static_cast<std::size_t>(a) *
                            (sizes[0].h * sizes[0].w + sizes[1].h * sizes[1].w +
                             ci * sizes[2].w + cj);
  const auto boxes = generate_default_boxes(cfg, sizes, h, w);
  EXPECT_NEAR(boxes[start].cx, (cj + 0.5) / sizes[2].w, 1e-12);
  const std::size_t rows = boxes.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const bool inside = r >= start && r < start + a;
    bool changed = false;
    for (int k = 0; k < 2; ++k) changed |= base.first[r * 2 + k] != moved.first[r * 2 + k];
    for (int k = 0; k < 4; ++k) changed |= base.second[r * 4 + k] != moved.second[r * 4 + k];
    EXPECT_EQ(changed, inside) << "row " << r;
  }
}

TEST(Detector, PredictOnBlankImageIsQuiet) {
  BackboneConfig bc;
  bc.width_multiplier = 0.25;
  bc.fpn_channels = 8;
  bc.input_h = bc.input_w = 64;
  auto model = Detector<float>::build(bc, AnchorConfig{}, 1);
  PostprocessOptions opts;
  opts.score_threshold = 0.3;
  const auto dets = model.predict(Tensor<float>({1, 1, 64, 64}, 0.0f), {"blank"}, opts);
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_TRUE(dets[0].empty());
}

TEST(Detector, RecalibrationIgnoresBatching) {
  BackboneConfig bc;
  bc.width_multiplier = 0.25;
  bc.fpn_channels = 8;
  bc.input_h = bc.input_w = 64;
  const auto images = random_tensor<double>({4, 1, 64, 64}, 9, 0.0, 1.0);
  std::vector<Tensor<double>> singles;
  for (int i = 0; i < 4; ++i) {
    Tensor<double> one({1, 1, 64, 64});
    std::copy_n(images.ptr() + i * 64 * 64, 64 * 64, one.ptr());
    singles.push_back(std::move(one));
  }
  auto whole = Detector<double>::build(bc, AnchorConfig{}, 3);
  auto split = Detector<double>::build(bc, AnchorConfig{}, 3);
  whole.recalibrate_batch_norm({images});
  split.recalibrate_batch_norm(singles);

  const auto a = whole.parameters(), b = split.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].kind != ParamKind::kBnStatistic) continue;
    for (std::size_t c = 0; c < a[i].tensor->size(); ++c) {
      EXPECT_NEAR((*a[i].tensor)[c], (*b[i].tensor)[c], 1e-6 * (1 + std::abs((*a[i].tensor)[c]))) << a[i].name;
    }
  }

  // Fixed point: infer-mode inputs to the deepest layer carry the stored stats.
  auto& bn = whole.backbone.laterals[2].bn;
  BatchNormMoments m;
  bn.moments = &m;
  Graph<double> g(false);
  whole.backbone.forward(g, g.constant(images), Mode::kInfer);
  bn.moments = nullptr;
  for (int c = 0; c < bc.fpn_channels; ++c) {
    const double mu = m.sum[c] / m.count;
    EXPECT_NEAR(bn.running_mean[c], mu, 1e-6 * (1 + std::abs(mu)));
    EXPECT_NEAR(bn.running_var[c], m.sum_sq[c] / m.count - mu * mu, 1e-6 * (1 + bn.running_var[c]));
  }
}

}  // namespace
}  // namespace shotnet
