// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "shotnet/box.hpp"
#include "shotnet/rng.hpp"
#include "shotnet/verify/oracles.hpp"

namespace shotnet {
namespace {

Box random_box(Rng& rng) {
  return Box{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.02, 0.6),
             rng.uniform(0.02, 0.6)};
}

TEST(Iou, IdenticalAndDisjoint) {
  const Box a{0.3, 0.4, 0.2, 0.1};
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, Box{0.8, 0.8, 0.1, 0.1}), 0.0);
  // Touching edges share no area.
  EXPECT_EQ(iou(Box::from_corners(0, 0, 0.5, 0.5), Box::from_corners(0.5, 0, 1, 0.5)), 0.0);
}

TEST(Iou, OffsetSquares) {
  // 2x2 squares at (0,0) and (1,1) in units of 0.1: I = 1, U = 7.
  const Box a = Box::from_corners(0.0, 0.0, 0.2, 0.2);
  const Box b = Box::from_corners(0.1, 0.1, 0.3, 0.3);
  EXPECT_NEAR(iou(a, b), 1.0 / 7.0, 1e-12);
}

TEST(Iou, SymmetricBoundedAndMatchesOracle) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_NEAR(v, verify::naive_iou(a, b), 1e-12);
  }
}

TEST(Encode, IdentityIsZero) {
  const Box d{0.4, 0.6, 0.3, 0.2};
  const auto t = encode_offsets(d, d);
  EXPECT_EQ(t.t_cx, 0.0);
  EXPECT_EQ(t.t_cy, 0.0);
  EXPECT_EQ(t.t_w, 0.0);
  EXPECT_EQ(t.t_h, 0.0);
  EXPECT_EQ(decode_offsets(OffsetVector{}, d), d);
}

TEST(Encode, WorkedExample) {
  const Box d{0.5, 0.5, 0.2, 0.2};
  const Box g{0.6, 0.5, 0.4, 0.2};
  const auto t = encode_offsets(g, d);
  EXPECT_NEAR(t.t_cx, 0.5, 1e-12);
  EXPECT_NEAR(t.t_cy, 0.0, 1e-12);
  EXPECT_NEAR(t.t_w, 0.693147, 1e-6);
  EXPECT_NEAR(t.t_h, 0.0, 1e-12);

  const Box back = decode_offsets(OffsetVector{0.5, 0.0, std::log(2.0), 0.0}, d);
  EXPECT_NEAR(back.cx, 0.6, 1e-12);
  EXPECT_NEAR(back.cy, 0.5, 1e-12);
  EXPECT_NEAR(back.w, 0.4, 1e-12);
  EXPECT_NEAR(back.h, 0.2, 1e-12);
}

TEST(Encode, RoundTripThousandPairs) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Box g = random_box(rng), d = random_box(rng);
    const Box r = decode_offsets(encode_offsets(g, d), d);
    EXPECT_NEAR(r.cx, g.cx, 1e-6);
    EXPECT_NEAR(r.cy, g.cy, 1e-6);
    EXPECT_NEAR(r.w, g.w, 1e-6);
    EXPECT_NEAR(r.h, g.h, 1e-6);
  }
}

TEST(Encode, Errors) {
  EXPECT_THROW(encode_offsets(Box{0.5, 0.5, 0.0, 0.1}, Box{}), ConfigError);
  EXPECT_THROW(encode_offsets(Box{0.5, 0.5, 0.1, -0.1}, Box{}), ConfigError);
  EXPECT_THROW(decode_offsets(OffsetVector{0, 0, 1000.0, 0}, Box{}), NumericalError);
  EXPECT_THROW(decode_offsets(OffsetVector{std::numeric_limits<double>::quiet_NaN(), 0, 0, 0}, Box{}),
               NumericalError);
}

std::vector<Box> grid_defaults() {
  std::vector<Box> d;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) d.push_back(Box{(j + 0.5) / 4, (i + 0.5) / 4, 0.25, 0.25});
  return d;
}

TEST(Match, GroundTruthEqualToDefault) {
  const auto d = grid_defaults();
  const auto a = match_boxes(d, {d[5]});
  EXPECT_EQ(a.num_positive, 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(a.is_positive(i), i == 5) << i;
    EXPECT_EQ(a.matched_gt[i].has_value(), i == 5);
    EXPECT_EQ(a.targets[i].has_value(), i == 5);
  }
  const auto& t = *a.targets[5];
  EXPECT_EQ(t.t_cx, 0.0);
  EXPECT_EQ(t.t_cy, 0.0);
  EXPECT_EQ(t.t_w, 0.0);
  EXPECT_EQ(t.t_h, 0.0);
}

TEST(Match, BestBelowThresholdStillMatched) {
  const std::vector<Box> d = {Box{0.25, 0.5, 0.5, 1.0}, Box{0.75, 0.5, 0.5, 1.0}};
  // A GT inside the left default covering 40% of its area: IoU 0.4.
  const Box gt = Box::from_corners(0.0, 0.0, 0.2, 1.0);
  ASSERT_NEAR(iou(gt, d[0]), 0.4, 1e-12);
  const auto a = match_boxes(d, {gt});
  EXPECT_EQ(a.num_positive, 1);
  EXPECT_TRUE(a.is_positive(0));
  EXPECT_FALSE(a.is_positive(1));

  MatchOptions strict;
  strict.strict_threshold_matching = true;
  EXPECT_EQ(match_boxes(d, {gt}, strict).num_positive, 0);
}

TEST(Match, ThresholdRuleIsStrictlyGreater) {
  const std::vector<Box> d = {Box{0.25, 0.5, 0.5, 1.0}, Box::from_corners(0.0, 0.0, 0.25, 1.0)};
  const Box gt = Box::from_corners(0.0, 0.0, 0.5, 1.0);
  ASSERT_NEAR(iou(gt, d[1]), 0.5, 1e-12);
  const auto a = match_boxes(d, {gt});
  EXPECT_TRUE(a.is_positive(0));
  EXPECT_FALSE(a.is_positive(1));  // IoU 0.5 is not > 0.5
}

TEST(Match, EmptyGroundTruthAndErrors) {
  const auto d = grid_defaults();
  const auto a = match_boxes(d, {});
  EXPECT_EQ(a.num_positive, 0);
  EXPECT_EQ(a.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(a.labels[i], MatchAssignment::kBackground);
  EXPECT_THROW(match_boxes({}, {Box{}}), ConfigError);
  EXPECT_THROW(match_boxes(d, {Box{}}, MatchOptions{1.0, false}), ConfigError);
  EXPECT_THROW(match_boxes(d, {Box{}}, MatchOptions{0.0, false}), ConfigError);
}

TEST(Match, AgreesWithExhaustiveOracle) {
  Rng rng(3);
  for (int c = 0; c < 100; ++c) {
    std::vector<Box> d(100);
    for (auto& b : d) b = random_box(rng);
    const std::vector<Box> gt = {random_box(rng), random_box(rng)};
    for (const bool strict : {false, true}) {
      const auto got = match_boxes(d, gt, MatchOptions{0.5, strict});
      const auto want = verify::naive_match(d, gt, 0.5, strict);
      ASSERT_EQ(got.labels, want.labels) << c;
      ASSERT_EQ(got.matched_gt, want.matched_gt) << c;
      EXPECT_EQ(got.num_positive, want.num_positive);
    }
  }
}

TEST(Match, EveryGroundTruthOwnsADefault) {
  Rng rng(4);
  for (int c = 0; c < 50; ++c) {
    std::vector<Box> d(60);
    for (auto& b : d) b = random_box(rng);
    std::vector<Box> gt(5);
    for (auto& b : gt) b = random_box(rng);
    const auto a = match_boxes(d, gt);
    std::vector<int> owned(gt.size(), 0);
    int positives = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.is_positive(i), a.matched_gt[i].has_value());
      EXPECT_EQ(a.is_positive(i), a.targets[i].has_value());
      if (a.is_positive(i)) {
        ++owned[*a.matched_gt[i]];
        ++positives;
      }
    }
    EXPECT_EQ(positives, a.num_positive);
    EXPECT_GE(a.num_positive, static_cast<int>(gt.size()));
    for (int n : owned) EXPECT_GE(n, 1);
  }
}

Detection det(Box b, double score, int cls = 1) {
  return Detection{"img", b, cls, score};
}

TEST(Nms, AboveThresholdSuppressed) {
  // Same height, widths 0.2, horizontal overlap chosen for IoU 0.7.
  const double o = 2 * 0.2 * 0.7 / 1.7;  // overlap width
  const Box a = Box::from_corners(0.1, 0.1, 0.3, 0.3);
  const Box b = Box::from_corners(0.3 - o, 0.1, 0.5 - o, 0.3);
  ASSERT_NEAR(iou(a, b), 0.7, 1e-12);
  const auto kept = nms({det(b, 0.8), det(a, 0.9)});
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].score, 0.9);
}

TEST(Nms, BelowThresholdKept) {
  const double o = 2 * 0.2 * 0.5 / 1.5;
  const Box a = Box::from_corners(0.1, 0.1, 0.3, 0.3);
  const Box b = Box::from_corners(0.3 - o, 0.1, 0.5 - o, 0.3);
  ASSERT_NEAR(iou(a, b), 0.5, 1e-12);
  const auto kept = nms({det(b, 0.8), det(a, 0.9)});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].score, 0.9);
  EXPECT_EQ(kept[1].score, 0.8);
}

TEST(Nms, EmptyAndClassAware) {
  EXPECT_TRUE(nms({}).empty());
  const Box a{0.5, 0.5, 0.2, 0.2};
  EXPECT_EQ(nms({det(a, 0.9, 1), det(a, 0.8, 2)}).size(), 2u);
}

TEST(Nms, TiesKeepInputOrder) {
  const auto kept = nms({det(Box{0.2, 0.2, 0.1, 0.1}, 0.5), det(Box{0.7, 0.7, 0.1, 0.1}, 0.5)});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].box.cx, 0.2);
}

TEST(Nms, AgreesWithOracleAndInvariants) {
  Rng rng(5);
  std::vector<Detection> dets;
  for (int i = 0; i < 1000; ++i) dets.push_back(det(random_box(rng), rng.uniform()));
  const auto got = nms(dets, 0.6);
  const auto want = verify::naive_nms(dets, 0.6);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].box, want[i].box);
    EXPECT_EQ(got[i].score, want[i].score);
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (i > 0) {
      EXPECT_GE(got[i - 1].score, got[i].score);
    }
    for (std::size_t j = i + 1; j < got.size(); ++j) EXPECT_LE(iou(got[i].box, got[j].box), 0.6);
  }
  // Appending a copy of a suppressed detection changes nothing.
  std::size_t suppressed = 0;
  while (suppressed < dets.size()) {
    bool kept = false;
    for (const auto& k : got) kept |= k.box == dets[suppressed].box;
    if (!kept) break;
    ++suppressed;
  }
  ASSERT_LT(suppressed, dets.size());
  auto more = dets;
  more.push_back(dets[suppressed]);
  const auto again = nms(more, 0.6);
  ASSERT_EQ(again.size(), got.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(again[i].box, got[i].box);
}

TEST(Box, ClipAndValidity) {
  EXPECT_TRUE(is_valid_box(Box{0.5, 0.5, 0.2, 0.2}));
  EXPECT_FALSE(is_valid_box(Box{0.5, 0.5, 0.0, 0.2}));
  EXPECT_FALSE(is_valid_box(Box{2.0, 2.0, 0.2, 0.2}));
  const auto c = clip_to_unit(Box{0.0, 0.5, 0.4, 0.2});
  ASSERT_TRUE(c.has_value());
  EXPECT_NEAR(c->x0(), 0.0, 1e-12);
  EXPECT_NEAR(c->x1(), 0.2, 1e-12);
  EXPECT_FALSE(clip_to_unit(Box{-1.0, 0.5, 0.2, 0.2}).has_value());
}

}  // namespace
}  // namespace shotnet
