// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include <json.hpp>

#include "shotnet/checkpoint.hpp"
#include "shotnet/rmsprop.hpp"
#include "shotnet/trainer.hpp"
#include "shotnet/verify/oracles.hpp"
#include "test_util.hpp"

namespace shotnet {
namespace {

using testing::TempDir;

// --- rmsprop ---------------------------------------------------------------

RmspropConfig no_l2() {
  RmspropConfig c;
  c.l2_weight = 0.0;
  return c;
}

TEST(Rmsprop, FirstScalarStep) {
  std::vector<double> p = {0.0}, g = {1.0}, ms = {0.0}, mom = {0.0};
  rmsprop_update<double>(p, g, ms, mom, no_l2(), false, "w");
  EXPECT_NEAR(ms[0], 0.1, 1e-15);
  EXPECT_NEAR(mom[0], 0.004 / std::sqrt(0.2), 1e-15);
  EXPECT_NEAR(mom[0], 0.0089443, 1e-7);
  EXPECT_NEAR(p[0], -0.0089443, 1e-7);
}

TEST(Rmsprop, ZeroGradientIsIdentity) {
  std::vector<double> p = {0.3, -1.2}, g = {0.0, 0.0}, ms = {0.0, 0.0}, mom = {0.0, 0.0};
  rmsprop_update<double>(p, g, ms, mom, no_l2(), true, "w");
  EXPECT_EQ(p, (std::vector<double>{0.3, -1.2}));
}

TEST(Rmsprop, MatchesScalarReferenceOverSteps) {
  const RmspropConfig cfg;
  verify::ScalarRmsprop ref{cfg.learning_rate, cfg.decay, cfg.momentum, cfg.epsilon, cfg.l2_weight};
  std::vector<double> p = {0.7}, ms = {0.0}, mom = {0.0};
  double q = 0.7;
  for (const double grad : {1.0, -0.35, 2.5, 0.0}) {
    std::vector<double> g = {grad};
    rmsprop_update<double>(p, g, ms, mom, cfg, true, "w");
    q = ref.step(q, grad);
    EXPECT_NEAR(p[0], q, 1e-12);
  }
}

TEST(Rmsprop, PureL2ShrinksNorm) {
  std::vector<double> p = {0.5, -0.25, 1.0}, ms(3, 0.0), mom(3, 0.0);
  const std::vector<double> zero(3, 0.0);
  double prev = INFINITY;
  for (int k = 0; k < 10; ++k) {
    rmsprop_update<double>(p, zero, ms, mom, RmspropConfig{}, true, "w");
    const double norm = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    EXPECT_LT(norm, prev);
    prev = norm;
  }
}

TEST(Rmsprop, NanGradientNamesParameterAndLeavesStateAlone) {
  Tensor<float> a({2}, 1.0f), b({2}, 1.0f);
  a.grad()[0] = 0.5f;
  b.grad()[1] = std::numeric_limits<float>::quiet_NaN();
  ParameterList<float> params = {{"head.p8.cls.weight", &a, ParamKind::kWeight},
                                 {"backbone.stem.bn.gamma", &b, ParamKind::kBnGamma}};
  RmspropState<float> state;
  try {
    rmsprop_step(params, state, RmspropConfig{});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("backbone.stem.bn.gamma"), std::string::npos) << e.what();
  }
  EXPECT_EQ(a, Tensor<float>({2}, 1.0f));
  EXPECT_EQ(state.steps, 0u);
}

TEST(Rmsprop, BatchNormAffineExcludedFromL2) {
  Tensor<float> w({1}, 1.0f), gamma({1}, 1.0f), stat({1}, 1.0f);
  w.grad();
  gamma.grad();
  ParameterList<float> params = {{"w", &w, ParamKind::kWeight},
                                 {"bn.gamma", &gamma, ParamKind::kBnGamma},
                                 {"bn.running_mean", &stat, ParamKind::kBnStatistic}};
  RmspropState<float> state;
  rmsprop_step(params, state, RmspropConfig{});
  EXPECT_LT(w[0], 1.0f);
  EXPECT_EQ(gamma[0], 1.0f);
  EXPECT_EQ(stat[0], 1.0f);
  EXPECT_EQ(state.steps, 1u);
}

// --- small end-to-end setup ------------------------------------------------

RunConfig small_config() {
  RunConfig c = RunConfig::desk();
  c.synth.height = c.synth.width = 64;
  c.synth.swell_band_width_px = {6, 16};
  c.synth.burst_size_px = {6, 20};
  c.synth.rng_seed = 5;
  c.backbone.fpn_channels = 8;
  c.backbone.input_h = c.backbone.input_w = 64;
  c.train.batch_size = 2;
  c.train.epochs = 2;
  c.train.seed = 3;
  return c;
}

std::vector<ShotGatherSample> small_corpus(const RunConfig& c, std::size_t n) {
  return generate_corpus(c.synth, n);
}

void expect_same_parameters(Detector<float>& a, Detector<float>& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(*pa[i].tensor == *pb[i].tensor) << pa[i].name;
  }
}

// --- checkpoint ------------------------------------------------------------

TEST(Checkpoint, RoundTripReproducesForwardBitExactly) {
  TempDir dir("ck");
  const auto cfg = small_config();
  Trainer t(cfg, small_corpus(cfg, 4));
  t.step({0, 1});
  save_checkpoint(dir / "a.sgck", t.checkpoint());
  const Checkpoint back = load_checkpoint(dir / "a.sgck");
  EXPECT_EQ(back.step, 1u);
  EXPECT_EQ(back.backbone, cfg.backbone);
  EXPECT_EQ(back.anchors, cfg.anchors);
  EXPECT_EQ(back.loss, cfg.loss);
  EXPECT_EQ(back.train, cfg.train);
  auto model = detector_from_checkpoint(back);
  expect_same_parameters(model, t.model());

  Tensor<float> img({1, 1, 64, 64});
  std::copy(t.train_set()[2].image.data().begin(), t.train_set()[2].image.data().end(), img.ptr());
  Graph<float> g1(false), g2(false);
  const auto o1 = t.model().forward(g1, g1.constant(img), Mode::kInfer);
  const auto o2 = model.forward(g2, g2.constant(img), Mode::kInfer);
  EXPECT_EQ(g1.value(o1.class_logits), g2.value(o2.class_logits));
  EXPECT_EQ(g1.value(o1.box_offsets), g2.value(o2.box_offsets));

  // Saving the reloaded checkpoint reproduces the file byte for byte.
  save_checkpoint(dir / "b.sgck", back);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir / "a.sgck"), slurp(dir / "b.sgck"));
}

TEST(Checkpoint, LayoutMagicAndManifest) {
  TempDir dir("ck_layout");
  const auto cfg = small_config();
  Trainer t(cfg, small_corpus(cfg, 2));
  save_checkpoint(dir / "a.sgck", t.checkpoint());
  std::ifstream in(dir / "a.sgck", std::ios::binary);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t header = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&header), 8);
  EXPECT_EQ(std::string(magic, 4), "SGCK");
  EXPECT_EQ(version, kCheckpointVersion);
  std::string text(header, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header));
  const auto j = nlohmann::json::parse(text);
  std::uint64_t offset = 0;
  for (const auto& e : j["manifest"]) {
    EXPECT_EQ(e["offset"].get<std::uint64_t>(), offset);
    std::uint64_t n = 1;
    for (const auto& d : e["shape"]) n *= d.get<std::uint64_t>();
    offset += 4 * n;
  }
  EXPECT_EQ(std::filesystem::file_size(dir / "a.sgck"), 16 + header + offset);
}

TEST(Checkpoint, CorruptionRejected) {
  TempDir dir("ck_bad");
  const auto cfg = small_config();
  Trainer t(cfg, small_corpus(cfg, 2));
  const auto ck = t.checkpoint();
  save_checkpoint(dir / "a.sgck", ck);

  auto bytes = [&] {
    std::ifstream in(dir / "a.sgck", std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  auto write = [&](const std::string& name, const std::string& b) {
    std::ofstream(dir / name, std::ios::binary) << b;
    return dir / name;
  };

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    load_checkpoint(write("magic.sgck", bad_magic));
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.field(), "magic");
  }

  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(load_checkpoint(write("version.sgck", bad_version)), CompatibilityError);

  EXPECT_THROW(load_checkpoint(write("short.sgck", bytes.substr(0, bytes.size() - 7))), IoError);

  std::string stale = bytes;
  const auto at = stale.find(ck.architecture_hash);
  ASSERT_NE(at, std::string::npos);
  stale[at] = stale[at] == '0' ? '1' : '0';
  EXPECT_THROW(load_checkpoint(write("stale.sgck", stale)), CompatibilityError);
}

TEST(Checkpoint, MismatchedAnchorConfigRejected) {
  const auto cfg = small_config();
  Trainer t(cfg, small_corpus(cfg, 2));
  const auto ck = t.checkpoint();
  AnchorConfig other = cfg.anchors;
  other.aspect_ratios = {1.0, 2.0, 0.5};
  auto model = Detector<float>::build(cfg.backbone, other, 0);
  EXPECT_THROW(restore_parameters(ck, model), CompatibilityError);
  other = cfg.anchors;
  other.scales = {0.1, 0.2, 0.4};
  auto same_shapes = Detector<float>::build(cfg.backbone, other, 0);
  EXPECT_THROW(restore_parameters(ck, same_shapes), CompatibilityError);
}

// --- trainer ---------------------------------------------------------------

TEST(Trainer, ZeroEpochsWritesInitialCheckpoint) {
  TempDir dir("tr0");
  auto cfg = small_config();
  cfg.train.epochs = 0;
  Trainer t(cfg, small_corpus(cfg, 4));
  Detector<float> fresh = Detector<float>::build(cfg.backbone, cfg.anchors, cfg.train.seed);
  const auto rec = t.run(dir.path());
  EXPECT_EQ(rec.step, 0);
  ASSERT_TRUE(std::filesystem::exists(dir / "last.sgck"));
  auto reloaded = detector_from_checkpoint(load_checkpoint(dir / "last.sgck"));
  expect_same_parameters(reloaded, fresh);
}

TEST(Trainer, MetricsLogSchema) {
  TempDir dir("tr_metrics");
  const auto cfg = small_config();
  const auto corpus = small_corpus(cfg, 6);
  Trainer t(cfg, {corpus.begin(), corpus.begin() + 4}, {corpus.begin() + 4, corpus.end()});
  t.run(dir.path());
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"epoch", "step", "train_loss", "val_ap50", "val_ap_coco", "wall_seconds"})
      EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["epoch"].get<int>(), ++lines);
    EXPECT_EQ(j["step"].get<int>(), 2 * lines);
  }
  EXPECT_EQ(lines, 2);
}

TEST(Trainer, LossIsDeterministicAndDecreases) {
  const auto cfg = small_config();
  const auto corpus = small_corpus(cfg, 4);
  Trainer a(cfg, corpus), b(cfg, corpus);
  double first = 0.0, last = 0.0;
  for (int k = 0; k < 8; ++k) {
    const double la = a.step({0, 1});
    EXPECT_EQ(la, b.step({0, 1}));
    if (k == 0) first = la;
    last = la;
  }
  EXPECT_LT(last, first);
  expect_same_parameters(a.model(), b.model());
}

TEST(Trainer, LossLeavesModelUntouched) {
  const auto cfg = small_config();
  Trainer t(cfg, small_corpus(cfg, 4));
  const Checkpoint before = t.checkpoint();
  const double l1 = t.loss({0, 1});
  EXPECT_EQ(t.loss({0, 1}), l1);
  const Checkpoint after = t.checkpoint();
  ASSERT_EQ(before.tensors.size(), after.tensors.size());
  for (std::size_t i = 0; i < before.tensors.size(); ++i)
    EXPECT_TRUE(before.tensors[i].value == after.tensors[i].value) << before.tensors[i].name;
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  TempDir dir("tr_resume");
  auto cfg = small_config();
  cfg.train.epochs = 3;
  const auto corpus = small_corpus(cfg, 6);  // 3 steps per epoch

  Trainer whole(cfg, corpus);
  whole.run(dir / "whole");

  // Stop mid-epoch, then continue from the checkpoint in a fresh trainer.
  auto capped = cfg;
  capped.train.max_steps = 4;
  Trainer first(capped, corpus);
  first.run(dir / "part");
  const Checkpoint ck = load_checkpoint(dir / "part" / "last.sgck");
  EXPECT_EQ(ck.step, 4u);
  EXPECT_EQ(ck.epoch, 1u);
  EXPECT_EQ(ck.step_in_epoch, 1u);

  Trainer reference(cfg, corpus);
  for (int s = 0; s < 4; ++s) {
    const auto order = reference.epoch_order(s / 3);
    const std::size_t b = s % 3;
    reference.step({order[2 * b], order[2 * b + 1]});
  }
  Trainer resumed(cfg, corpus);
  resumed.resume(ck);
  const auto order = resumed.epoch_order(1);
  const std::vector<std::size_t> next = {order[2], order[3]};
  EXPECT_NEAR(resumed.loss(next), reference.loss(next), 1e-6);

  resumed.run(dir / "resumed");
  EXPECT_EQ(resumed.steps(), whole.steps());
  expect_same_parameters(resumed.model(), whole.model());
}

TEST(Trainer, RejectsMismatchedSamples) {
  auto cfg = small_config();
  auto other = cfg;
  other.synth.height = other.synth.width = 72;
  EXPECT_THROW(Trainer(cfg, small_corpus(other, 1)), ConfigError);
}

TEST(Trainer, LoadTrainingDataLayouts) {
  TempDir dir("tr_data");
  const auto cfg = small_config();
  const auto corpus = small_corpus(cfg, 5);
  write_dataset({corpus.begin(), corpus.begin() + 3}, dir / "split" / "train");
  write_dataset({corpus.begin() + 3, corpus.end()}, dir / "split" / "val");
  const auto split = load_training_data(dir / "split");
  EXPECT_EQ(split.train.size(), 3u);
  EXPECT_EQ(split.val.size(), 2u);
  write_dataset(corpus, dir / "flat");
  const auto flat = load_training_data(dir / "flat");
  EXPECT_EQ(flat.train.size(), 5u);
  EXPECT_TRUE(flat.val.empty());
  EXPECT_THROW(load_training_data(dir / "nope"), IoError);
}

TEST(Config, ParseDefaultsAndRejectUnknownKeys) {
  EXPECT_EQ(parse_run_config("{}"), RunConfig{});
  EXPECT_EQ(parse_run_config(R"({"profile": "desk"})"), RunConfig::desk());
  EXPECT_THROW(parse_run_config(R"({"trian": {}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train": {"batch_size": "big"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"train": {"batch_size": 0}})"), ConfigError);
  const auto c = parse_run_config(R"({"loss": {"focal_enabled": false}, "train": {"epochs": 7}})");
  EXPECT_FALSE(c.loss.focal_enabled);
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(parse_run_config(run_config_to_json(small_config())), small_config());
}

TEST(Config, PaperDefaults) {
  const RunConfig c;
  EXPECT_EQ(c.train.optimizer.learning_rate, 0.004);
  EXPECT_EQ(c.train.optimizer.momentum, 0.9);
  EXPECT_EQ(c.train.optimizer.decay, 0.9);
  EXPECT_EQ(c.train.optimizer.epsilon, 0.1);
  EXPECT_EQ(c.train.optimizer.l2_weight, 4e-5);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.train.epochs, 200);
  EXPECT_EQ(c.train.nms_iou, 0.6);
  EXPECT_EQ(c.loss.focal_alpha, 0.7);
  EXPECT_EQ(c.loss.focal_gamma, 2.0);
  EXPECT_EQ(c.backbone.bn_decay, 0.9997);
  EXPECT_EQ(c.backbone.bn_epsilon, 0.001);
  EXPECT_EQ(c.backbone.input_h, 600);
  const RunConfig d = RunConfig::desk();
  EXPECT_EQ(d.backbone.width_multiplier, 0.25);
  EXPECT_EQ(d.backbone.fpn_channels, 32);
  EXPECT_EQ(d.backbone.input_h, 192);
  EXPECT_EQ(d.train.batch_size, 8);
  EXPECT_EQ(d.anchors.anchors_per_location(), 6);
}

}  // namespace
}  // namespace shotnet
