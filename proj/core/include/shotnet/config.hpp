// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "shotnet/backbone.hpp"
#include "shotnet/detector.hpp"
#include "shotnet/losses.hpp"
#include "shotnet/rmsprop.hpp"
#include "shotnet/ssd_head.hpp"
#include "shotnet/synthetic_data.hpp"

namespace shotnet {

struct TrainConfig {
  RmspropConfig optimizer;
  int batch_size = 32;
  int epochs = 200;
  /// Stop after this many optimizer steps in total (0 = no cap).
  std::int64_t max_steps = 0;
  std::uint64_t seed = 0;
  double nms_iou = 0.6;
  double score_threshold = 0.05;
  int max_candidates = 400;
  double match_threshold = 0.5;
  bool strict_threshold_matching = false;
  /// Run validation every this many epochs (the last epoch always runs).
  int eval_every = 1;
  /// Re-estimate batch-norm running statistics from the training set before
  /// evaluating or checkpointing.
  bool bn_recalibration = true;
  /// Training-set batches used for recalibration (0 = all).
  int bn_recalibration_batches = 0;

  void validate() const;
  PostprocessOptions postprocess() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Everything a run needs. Defaults are the full-size profile.
struct RunConfig {
  SynthConfig synth;
  BackboneConfig backbone;
  AnchorConfig anchors;
  LossConfig loss;
  TrainConfig train;

  void validate() const;
  /// width 0.25, fpn 32, 192x192 input, batch 8, 192x192 synthetic images.
  static RunConfig desk();

  bool operator==(const RunConfig&) const = default;
};

/// Parses a JSON run configuration. `{}` yields the defaults; a top-level
/// "profile": "desk" starts from RunConfig::desk() instead. Unknown keys and
/// wrongly typed values throw ConfigError naming the key path.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON (sorted keys, every field present).
std::string run_config_to_json(const RunConfig& config, int indent = 2);

/// JSON fragments for the checkpoint header.
std::string backbone_config_to_json(const BackboneConfig& c);
std::string anchor_config_to_json(const AnchorConfig& c);
std::string loss_config_to_json(const LossConfig& c);
std::string train_config_to_json(const TrainConfig& c);
BackboneConfig backbone_config_from_json(const std::string& text);
AnchorConfig anchor_config_from_json(const std::string& text);
LossConfig loss_config_from_json(const std::string& text);
TrainConfig train_config_from_json(const std::string& text);

/// FNV-1a 64 of the canonical backbone + anchor JSON, as 16 hex digits.
std::string architecture_hash(const BackboneConfig& backbone, const AnchorConfig& anchors);

}  // namespace shotnet
