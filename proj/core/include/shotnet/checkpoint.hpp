// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

// Checkpoint file layout (all integers little-endian):
//
//   "SGCK"  u32 format_version  u64 header_bytes  header (UTF-8 JSON)  payload
//
// The header holds the configs, the architecture hash, counters and a
// manifest [{name, kind, shape, offset}] whose byte offsets index the payload
// of concatenated f32 tensors. Optimizer state is stored as ordinary entries
// named "opt.ms.<param>" and "opt.mom.<param>".

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shotnet/config.hpp"
#include "shotnet/detector.hpp"
#include "shotnet/rmsprop.hpp"

namespace shotnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::string kind;  // param_kind_name(...) or "optimizer"
  Tensor<float> value;
};

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  BackboneConfig backbone;
  AnchorConfig anchors;
  LossConfig loss;
  TrainConfig train;
  std::string architecture_hash;
  std::uint64_t epoch = 0;          // epochs completed
  std::uint64_t step = 0;           // optimizer steps completed
  std::uint64_t step_in_epoch = 0;  // steps already taken in epoch `epoch`
  std::uint64_t rng_seed = 0;       // shuffle order is a function of (seed, epoch)
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

/// Atomic: writes `<path>.tmp` and renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws IoError on a bad magic, malformed header or truncated payload and
/// CompatibilityError on an unknown version or a stale architecture hash.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of model parameters, optimizer state (optional) and counters.
Checkpoint capture_checkpoint(Detector<float>& model, const RmspropState<float>* optimizer,
                              const LossConfig& loss, const TrainConfig& train);

/// Copies parameters into `model`. Throws CompatibilityError if the
/// architecture hash, a name, or a shape disagrees.
void restore_parameters(const Checkpoint& checkpoint, Detector<float>& model);
void restore_optimizer(const Checkpoint& checkpoint, Detector<float>& model,
                       RmspropState<float>& optimizer);

/// Builds a detector with the checkpoint's architecture and parameters.
Detector<float> detector_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace shotnet
