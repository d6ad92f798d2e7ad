// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "shotnet/backbone.hpp"
#include "test_util.hpp"

namespace shotnet {
namespace {

using testing::random_tensor;
using Var = Graph<double>::Var;

BackboneConfig small(int h, int w) {
  BackboneConfig c;
  c.width_multiplier = 0.25;
  c.fpn_channels = 8;
  c.input_h = h;
  c.input_w = w;
  return c;
}

TEST(Backbone, DefaultTapChannels) {
  const auto b = Backbone<float>::build(BackboneConfig{}, 1);
  EXPECT_EQ(b.tap_channels(), (std::array<int, 3>{256, 512, 1024}));
  EXPECT_EQ(b.blocks.size(), 13u);
  EXPECT_EQ(b.stem.weight.shape(), (Shape{32, 1, 3, 3}));
  EXPECT_EQ(b.laterals[2].weight.shape(), (Shape{256, 1024, 1, 1}));
}

TEST(Backbone, Schedule) {
  const auto& s = mobilenet_v1_schedule();
  const std::array<std::pair<int, int>, 13> want = {{{64, 1}, {128, 2}, {128, 1}, {256, 2},
                                                     {256, 1}, {512, 2}, {512, 1}, {512, 1},
                                                     {512, 1}, {512, 1}, {512, 1}, {1024, 2},
                                                     {1024, 1}}};
  for (std::size_t i = 0; i < 13; ++i) {
    EXPECT_EQ(s[i].out_channels, want[i].first) << i;
    EXPECT_EQ(s[i].stride, want[i].second) << i;
  }
}

TEST(Backbone, QuarterWidthStem) {
  const auto b = Backbone<float>::build(small(192, 192), 1);
  EXPECT_EQ(b.stem.weight.dim(0), 8);
  EXPECT_EQ(b.tap_channels(), (std::array<int, 3>{64, 128, 256}));
}

TEST(Backbone, InvalidConfigRejected) {
  auto c = small(192, 192);
  c.width_multiplier = 0.2;  // round(6.4) < 8
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(192, 192);
  c.fpn_channels = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small(32, 192);
  EXPECT_THROW(Backbone<float>::build(c, 0), ConfigError);
}

TEST(Backbone, SameSeedSameParameters) {
  auto a = Backbone<float>::build(small(96, 96), 5);
  auto b = Backbone<float>::build(small(96, 96), 5);
  auto c = Backbone<float>::build(small(96, 96), 6);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(*pa[i].tensor, *pb[i].tensor) << pa[i].name;
    any_diff |= !(*pa[i].tensor == *pc[i].tensor);
  }
  EXPECT_TRUE(any_diff);
}

TEST(Backbone, TruncatedNormalInit) {
  auto b = Backbone<double>::build(BackboneConfig{}, 3);
  const auto& w = b.blocks[12].pointwise.weight;
  double sum = 0.0, sq = 0.0;
  for (double v : w.data()) {
    EXPECT_LE(std::abs(v), 0.06 + 1e-12);
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  // A normal truncated at two sigma has stddev 0.8796 sigma.
  EXPECT_NEAR(sd, 0.03 * 0.8796, 0.001);
  for (double v : b.stem.bn.gamma.data()) EXPECT_EQ(v, 1.0);
  for (double v : b.stem.bn.beta.data()) EXPECT_EQ(v, 0.0);
}

struct SizeCase {
  int input;
  int p8, p16, p32;
};

class ProjectionSizes : public ::testing::TestWithParam<SizeCase> {};

TEST_P(ProjectionSizes, CeilStrideArithmetic) {
  const auto sc = GetParam();
  auto b = Backbone<float>::build(small(sc.input, sc.input), 2);
  Tensor<float> img = random_tensor<float>({1, 1, sc.input, sc.input}, 3);
  Graph<float> g(false);
  const auto out = b.forward(g, g.constant(img), Mode::kInfer);
  EXPECT_EQ(g.value(out.projections.p8).shape(), (Shape{1, 8, sc.p8, sc.p8}));
  EXPECT_EQ(g.value(out.projections.p16).shape(), (Shape{1, 8, sc.p16, sc.p16}));
  EXPECT_EQ(g.value(out.projections.p32).shape(), (Shape{1, 8, sc.p32, sc.p32}));
}

INSTANTIATE_TEST_SUITE_P(Backbone, ProjectionSizes,
                         ::testing::Values(SizeCase{600, 75, 38, 19}, SizeCase{608, 76, 38, 19},
                                           SizeCase{192, 24, 12, 6}, SizeCase{100, 13, 7, 4},
                                           SizeCase{64, 8, 4, 2}));

TEST(Backbone, NonSquareInput) {
  auto b = Backbone<float>::build(small(72, 130), 2);
  Tensor<float> img = random_tensor<float>({2, 1, 72, 130}, 3);
  Graph<float> g(false);
  const auto out = b.forward(g, g.constant(img), Mode::kInfer);
  EXPECT_EQ(g.value(out.projections.p8).shape(), (Shape{2, 8, 9, 17}));
  EXPECT_EQ(g.value(out.projections.p16).shape(), (Shape{2, 8, 5, 9}));
  EXPECT_EQ(g.value(out.projections.p32).shape(), (Shape{2, 8, 3, 5}));
}

TEST(Backbone, WrongInputSizeRejected) {
  auto b = Backbone<float>::build(small(96, 96), 2);
  Tensor<float> img({1, 1, 64, 96});
  Graph<float> g(false);
  EXPECT_THROW(b.forward(g, g.constant(img), Mode::kInfer), ShapeError);
}

TEST(Backbone, ZeroedStride32LateralLeavesOnlyAdditiveFusion) {
  auto b = Backbone<double>::build(small(96, 96), 4);
  b.laterals[2].weight.fill(0.0);
  Tensor<double> img = random_tensor<double>({1, 1, 96, 96}, 5);

  Graph<double> g(false);
  const auto out = b.forward(g, g.constant(img), Mode::kInfer);
  for (double v : g.value(out.projections.p32).data()) EXPECT_EQ(v, 0.0);

  Graph<double> g2(false);
  const Var c16 = g2.constant(g.value(out.c16));
  const Var l16 = b.laterals[1].forward(g2, c16, Mode::kInfer, b.config());
  EXPECT_EQ(g.value(out.projections.p16), g2.value(l16));
}

TEST(Backbone, Stride32TapReachesFinerMapsOnlyThroughUpsample) {
  auto b = Backbone<double>::build(small(96, 96), 4);
  Tensor<double> img = random_tensor<double>({1, 1, 96, 96}, 6);
  Graph<double> g(false);
  const auto out = b.forward(g, g.constant(img), Mode::kInfer);

  Graph<double> g2(false);
  const Var l8 = b.laterals[0].forward(g2, g2.constant(g.value(out.c8)), Mode::kInfer, b.config());
  const Var l16 = b.laterals[1].forward(g2, g2.constant(g.value(out.c16)), Mode::kInfer, b.config());
  const Var p32 = g2.constant(g.value(out.projections.p32));
  const Var p16 = g2.add(l16, g2.upsample_nearest2x(p32, 6, 6));
  const Var p8 = g2.add(l8, g2.upsample_nearest2x(p16, 12, 12));
  EXPECT_EQ(g.value(out.projections.p16), g2.value(p16));
  EXPECT_EQ(g.value(out.projections.p8), g2.value(p8));
}

TEST(Backbone, EveryTrainableParameterReceivesGradient) {
  auto b = Backbone<double>::build(small(64, 64), 7);
  Tensor<double> img = random_tensor<double>({2, 1, 64, 64}, 8, 0.05, 1.0);
  Graph<double> g;
  const auto out = b.forward(g, g.constant(img), Mode::kTrain);
  // sum(relu(p + r)) with a random offset r: a nonlinear readout, since a
  // plain sum is annihilated by the train-mode batch norm backward.
  Var total{};
  bool first = true;
  std::uint64_t s = 20;
  for (const Var p : {out.projections.p8, out.projections.p16, out.projections.p32}) {
    const Var r = g.constant(random_tensor<double>(g.value(p).shape(), s++));
    const Var term = g.sum(g.relu(g.add(p, r)));
    total = first ? term : g.add(total, term);
    first = false;
  }
  g.backward(total);
  for (const auto& p : b.parameters()) {
    if (!p.trainable()) continue;
    const auto grad = p.tensor->grad();
    const bool all_zero = std::all_of(grad.begin(), grad.end(), [](double v) { return v == 0.0; });
    EXPECT_FALSE(all_zero) << p.name;
  }
}

}  // namespace
}  // namespace shotnet
