// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "shotnet/checkpoint.hpp"
#include "shotnet/config.hpp"
#include "shotnet/detector.hpp"
#include "shotnet/evaluation.hpp"
#include "shotnet/rmsprop.hpp"
#include "shotnet/synthetic_data.hpp"

namespace shotnet {

/// One line of metrics.jsonl.
struct EpochRecord {
  int epoch = 0;  // epochs completed (a truncated final epoch counts)
  std::int64_t step = 0;
  double train_loss = 0.0;  // mean step loss over the epoch
  double val_ap50 = 0.0;
  double val_ap_coco = 0.0;
  double wall_seconds = 0.0;

  std::string to_json() const;
};

struct TrainingData {
  std::vector<ShotGatherSample> train;
  std::vector<ShotGatherSample> val;
};

/// `dir/train` and `dir/val` when `dir/train` exists (val may be absent),
/// otherwise `dir` itself is the training set. Missing `dir` is an IoError.
TrainingData load_training_data(const std::filesystem::path& dir);

GroundTruthSet ground_truth_of(const std::vector<ShotGatherSample>& samples);

/// Runs inference in batches and concatenates the detections.
std::vector<Detection> detect_samples(Detector<float>& model,
                                      const std::vector<ShotGatherSample>& samples,
                                      const PostprocessOptions& options, int batch_size);

class Trainer {
 public:
  /// Called after every evaluated epoch; return false to stop early.
  using EpochCallback = std::function<bool(const EpochRecord&, Trainer&)>;

  Trainer(RunConfig config, std::vector<ShotGatherSample> train,
          std::vector<ShotGatherSample> val = {});

  /// Continues from a checkpoint: parameters, optimizer state, counters.
  void resume(const Checkpoint& checkpoint);

  /// One optimizer step on training samples `batch`; returns the batch loss.
  /// Throws NumericalError, before touching any parameter, if the loss is
  /// not finite.
  double step(const std::vector<std::size_t>& batch);

  /// Batch loss in train mode with no parameter update. Running statistics
  /// are left untouched.
  double loss(const std::vector<std::size_t>& batch);

  /// Trains until `epochs` or `max_steps`. With a non-empty `out_dir` writes
  /// last.sgck after every epoch and appends evaluated epochs to
  /// metrics.jsonl. Returns the last record.
  EpochRecord run(const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

  void recalibrate_batch_norm();
  ApReport evaluate(const std::vector<ShotGatherSample>& samples);

  Checkpoint checkpoint();
  /// Sample order of epoch `epoch`, a function of (seed, epoch) only.
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  Detector<float>& model() { return model_; }
  const RunConfig& config() const { return config_; }
  const std::vector<ShotGatherSample>& train_set() const { return train_; }
  const std::vector<ShotGatherSample>& val_set() const { return val_; }
  std::int64_t steps() const { return static_cast<std::int64_t>(optimizer_.steps); }
  std::uint64_t epoch() const { return epoch_; }

 private:
  Tensor<float> batch_images(const std::vector<std::size_t>& batch) const;
  double forward_loss(const std::vector<std::size_t>& batch, bool update);

  RunConfig config_;
  std::vector<ShotGatherSample> train_;
  std::vector<ShotGatherSample> val_;
  Detector<float> model_;
  RmspropState<float> optimizer_;
  std::vector<MatchAssignment> assignments_;
  std::uint64_t epoch_ = 0;
  std::uint64_t step_in_epoch_ = 0;
};

}  // namespace shotnet
