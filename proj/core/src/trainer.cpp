// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "shotnet/error.hpp"
#include "shotnet/losses.hpp"
#include "shotnet/rng.hpp"

namespace shotnet {

namespace fs = std::filesystem;

namespace {

// Shuffle streams live far away from the weight-init streams (0 and 1).
constexpr std::uint64_t kShuffleStreamBase = 1ULL << 32;

}  // namespace

std::string EpochRecord::to_json() const {
  const nlohmann::json j{{"epoch", epoch},
                         {"step", step},
                         {"train_loss", train_loss},
                         {"val_ap50", val_ap50},
                         {"val_ap_coco", val_ap_coco},
                         {"wall_seconds", wall_seconds}};
  return j.dump();
}

TrainingData load_training_data(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "", "dataset directory does not exist");
  TrainingData d;
  if (fs::is_directory(dir / "train")) {
    d.train = read_dataset(dir / "train");
    if (fs::is_directory(dir / "val")) d.val = read_dataset(dir / "val");
  } else {
    d.train = read_dataset(dir);
  }
  return d;
}

GroundTruthSet ground_truth_of(const std::vector<ShotGatherSample>& samples) {
  GroundTruthSet gt;
  for (const auto& s : samples) gt[s.id] = s.boxes;
  return gt;
}

std::vector<Detection> detect_samples(Detector<float>& model,
                                      const std::vector<ShotGatherSample>& samples,
                                      const PostprocessOptions& options, int batch_size) {
  std::vector<Detection> all;
  const auto& cfg = model.backbone_config();
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, samples.size() - start);
    Tensor<float> images({static_cast<int>(n), cfg.in_channels, cfg.input_h, cfg.input_w});
    std::vector<std::string> ids;
    const std::size_t per = images.size() / n;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = samples[start + k];
      if (s.image.size() != per) {
        throw ConfigError("sample " + s.id + " has shape " + shape_string(s.image.shape()) +
                          " but the model expects " + std::to_string(cfg.input_h) + "x" +
                          std::to_string(cfg.input_w));
      }
      std::copy(s.image.data().begin(), s.image.data().end(), images.ptr() + k * per);
      ids.push_back(s.id);
    }
    for (auto& dets : model.predict(images, ids, options)) {
      all.insert(all.end(), dets.begin(), dets.end());
    }
  }
  return all;
}

Trainer::Trainer(RunConfig config, std::vector<ShotGatherSample> train,
                 std::vector<ShotGatherSample> val)
    : config_(std::move(config)), train_(std::move(train)), val_(std::move(val)) {
  config_.validate();
  model_ = Detector<float>::build(config_.backbone, config_.anchors, config_.train.seed);
  const auto& bc = config_.backbone;
  const MatchOptions match{config_.train.match_threshold, config_.train.strict_threshold_matching};
  for (const auto* set : {&train_, &val_}) {
    for (const auto& s : *set) {
      if (s.image.rank() != 3 || s.image.dim(0) != bc.in_channels || s.image.dim(1) != bc.input_h ||
          s.image.dim(2) != bc.input_w) {
        throw ConfigError("sample " + s.id + " has shape " + shape_string(s.image.shape()) +
                          " but the backbone expects " + std::to_string(bc.in_channels) + "x" +
                          std::to_string(bc.input_h) + "x" + std::to_string(bc.input_w));
      }
    }
  }
  assignments_.reserve(train_.size());
  for (const auto& s : train_) assignments_.push_back(match_boxes(model_.default_boxes(), s.boxes, match));
}

void Trainer::resume(const Checkpoint& ck) {
  restore_parameters(ck, model_);
  restore_optimizer(ck, model_, optimizer_);
  epoch_ = ck.epoch;
  step_in_epoch_ = ck.step_in_epoch;
}

Tensor<float> Trainer::batch_images(const std::vector<std::size_t>& batch) const {
  const auto& bc = config_.backbone;
  Tensor<float> images({static_cast<int>(batch.size()), bc.in_channels, bc.input_h, bc.input_w});
  const std::size_t per = images.size() / batch.size();
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& src = train_.at(batch[k]).image;
    std::copy(src.data().begin(), src.data().end(), images.ptr() + k * per);
  }
  return images;
}

double Trainer::forward_loss(const std::vector<std::size_t>& batch, bool update) {
  if (batch.empty()) throw ConfigError("training batch must not be empty");
  Graph<float> g(update);
  const auto out = model_.forward(g, g.constant(batch_images(batch)), Mode::kTrain);
  std::vector<MatchAssignment> assigns;
  assigns.reserve(batch.size());
  for (std::size_t i : batch) assigns.push_back(assignments_[i]);
  LossResult<float> r = batch_multitask_loss(g.value(out.class_logits), g.value(out.box_offsets),
                                             assigns, config_.loss);
  if (!std::isfinite(r.value)) {
    throw NumericalError("non-finite training loss at step " + std::to_string(optimizer_.steps + 1));
  }
  if (!update) return r.value;

  auto params = model_.parameters();
  for (auto& p : params) p.tensor->zero_grad();
  const auto root = g.external_scalar(static_cast<float>(r.value),
                                      {{out.class_logits, std::move(r.grad_logits)},
                                       {out.box_offsets, std::move(r.grad_offsets)}});
  g.backward(root);
  rmsprop_step(params, optimizer_, config_.train.optimizer);
  return r.value;
}

double Trainer::step(const std::vector<std::size_t>& batch) { return forward_loss(batch, true); }

double Trainer::loss(const std::vector<std::size_t>& batch) {
  std::vector<Tensor<float>> saved;
  auto params = model_.parameters();
  for (const auto& p : params) {
    if (p.kind == ParamKind::kBnStatistic) saved.push_back(*p.tensor);
  }
  const double v = forward_loss(batch, false);
  std::size_t k = 0;
  for (auto& p : params) {
    if (p.kind == ParamKind::kBnStatistic) *p.tensor = std::move(saved[k++]);
  }
  return v;
}

std::vector<std::size_t> Trainer::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(config_.train.seed, kShuffleStreamBase + epoch);
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

void Trainer::recalibrate_batch_norm() {
  const int bs = config_.train.batch_size;
  std::vector<Tensor<float>> batches;
  for (std::size_t start = 0; start < train_.size(); start += bs) {
    if (config_.train.bn_recalibration_batches > 0 &&
        batches.size() >= static_cast<std::size_t>(config_.train.bn_recalibration_batches)) {
      break;
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(train_.size(), start + bs); ++i) idx.push_back(i);
    batches.push_back(batch_images(idx));
  }
  model_.recalibrate_batch_norm(batches);
}

ApReport Trainer::evaluate(const std::vector<ShotGatherSample>& samples) {
  const auto dets = detect_samples(model_, samples, config_.train.postprocess(), config_.train.batch_size);
  return ap_sweep(dets, ground_truth_of(samples));
}

Checkpoint Trainer::checkpoint() {
  Checkpoint ck = capture_checkpoint(model_, &optimizer_, config_.loss, config_.train);
  ck.epoch = epoch_;
  ck.step_in_epoch = step_in_epoch_;
  return ck;
}

EpochRecord Trainer::run(const fs::path& out_dir, const EpochCallback& on_epoch) {
  const TrainConfig& tc = config_.train;
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const bool persist = !out_dir.empty();
  if (persist) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError(out_dir.string(), "", "cannot create output directory: " + ec.message());
  }
  const auto save = [&] {
    if (persist) save_checkpoint(out_dir / "last.sgck", checkpoint());
  };
  const auto append_metrics = [&](const EpochRecord& r) {
    if (!persist) return;
    std::ofstream out(out_dir / "metrics.jsonl", std::ios::app);
    if (!out) throw IoError((out_dir / "metrics.jsonl").string(), "", "cannot append");
    out << r.to_json() << "\n";
  };

  EpochRecord record;
  record.epoch = static_cast<int>(epoch_);
  record.step = steps();
  if (tc.epochs == 0 || epoch_ >= static_cast<std::uint64_t>(tc.epochs) || train_.empty()) {
    save();
    record.wall_seconds = elapsed();
    return record;
  }

  const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
  const std::size_t per_epoch = (train_.size() + bs - 1) / bs;
  bool stop = false;
  while (!stop && epoch_ < static_cast<std::uint64_t>(tc.epochs)) {
    const auto order = epoch_order(epoch_);
    double loss_sum = 0.0;
    int loss_count = 0;
    bool capped = false;
    for (std::size_t b = step_in_epoch_; b < per_epoch; ++b) {
      if (tc.max_steps > 0 && steps() >= tc.max_steps) {
        capped = true;
        break;
      }
      std::vector<std::size_t> batch(order.begin() + b * bs,
                                     order.begin() + std::min(order.size(), (b + 1) * bs));
      loss_sum += step(batch);
      ++loss_count;
      ++step_in_epoch_;
    }
    if (!capped) {
      ++epoch_;
      step_in_epoch_ = 0;
    }
    stop = capped || (tc.max_steps > 0 && steps() >= tc.max_steps);
    const bool last = stop || epoch_ >= static_cast<std::uint64_t>(tc.epochs);

    record.epoch = static_cast<int>(epoch_) + (capped ? 1 : 0);
    record.step = steps();
    record.train_loss = loss_count ? loss_sum / loss_count : 0.0;
    const bool eval = last || epoch_ % static_cast<std::uint64_t>(tc.eval_every) == 0;
    if (eval) {
      if (tc.bn_recalibration) recalibrate_batch_norm();
      if (!val_.empty()) {
        const ApReport rep = evaluate(val_);
        record.val_ap50 = rep.ap50;
        record.val_ap_coco = rep.ap_coco;
      } else {
        record.val_ap50 = record.val_ap_coco = 0.0;
      }
      record.wall_seconds = elapsed();
      append_metrics(record);
    }
    save();
    if (eval && on_epoch && !on_epoch(record, *this)) stop = true;
    if (capped && loss_count == 0) break;
  }
  record.wall_seconds = elapsed();
  return record;
}

}  // namespace shotnet
