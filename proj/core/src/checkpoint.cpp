// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shotnet/error.hpp"

namespace shotnet {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};
constexpr const char* kOptMeanSquare = "opt.ms.";
constexpr const char* kOptMomentum = "opt.mom.";
constexpr const char* kOptimizerKind = "optimizer";

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

const json& require(const json& j, const char* key, const std::string& file) {
  if (!j.is_object() || !j.contains(key)) throw IoError(file, std::string("header.") + key, "missing");
  return j.at(key);
}

std::uint64_t require_u64(const json& j, const char* key, const std::string& file) {
  const json& v = require(j, key, file);
  if (!v.is_number_unsigned()) throw IoError(file, std::string("header.") + key, "not an unsigned integer");
  return v.get<std::uint64_t>();
}

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
  json manifest = json::array();
  std::uint64_t offset = 0;
  std::set<std::string> names;
  for (const auto& t : ck.tensors) {
    if (!names.insert(t.name).second) throw ShapeError("save_checkpoint: duplicate tensor " + t.name);
    manifest.push_back({{"name", t.name}, {"kind", t.kind}, {"shape", t.value.shape()}, {"offset", offset}});
    offset += 4 * t.value.size();
  }
  const json header{
      {"backbone", json::parse(backbone_config_to_json(ck.backbone))},
      {"anchors", json::parse(anchor_config_to_json(ck.anchors))},
      {"loss", json::parse(loss_config_to_json(ck.loss))},
      {"train", json::parse(train_config_to_json(ck.train))},
      {"architecture_hash", architecture_hash(ck.backbone, ck.anchors)},
      {"epoch", ck.epoch},
      {"step", ck.step},
      {"step_in_epoch", ck.step_in_epoch},
      {"rng", {{"seed", ck.rng_seed}, {"epoch", ck.epoch}}},
      {"payload_bytes", offset},
      {"manifest", manifest}};
  const std::string text = header.dump();

  std::string bytes(kMagic, 4);
  put_le<std::uint32_t>(bytes, ck.format_version);
  put_le<std::uint64_t>(bytes, text.size());
  bytes += text;
  bytes.reserve(bytes.size() + offset);
  for (const auto& t : ck.tensors) {
    for (float v : t.value.data()) put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));
  }

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "", "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError(path.string(), "", "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(path.string(), "", "rename failed: " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  const std::string f = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(f, "", "cannot open checkpoint");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 16) throw IoError(f, "header", "truncated preamble");
  if (std::memcmp(b, kMagic, 4) != 0) throw IoError(f, "magic", "expected \"SGCK\"");
  Checkpoint ck;
  ck.format_version = get_le<std::uint32_t>(b + 4);
  if (ck.format_version != kCheckpointVersion) {
    throw CompatibilityError(f + ": checkpoint format version " + std::to_string(ck.format_version) +
                             " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = get_le<std::uint64_t>(b + 8);
  if (header_len > bytes.size() - 16) throw IoError(f, "header", "truncated header");
  json h;
  try {
    h = json::parse(bytes.substr(16, header_len));
  } catch (const json::parse_error& e) {
    throw IoError(f, "header", std::string("invalid JSON: ") + e.what());
  }

  try {
    ck.backbone = backbone_config_from_json(require(h, "backbone", f).dump());
    ck.anchors = anchor_config_from_json(require(h, "anchors", f).dump());
    ck.loss = loss_config_from_json(require(h, "loss", f).dump());
    ck.train = train_config_from_json(require(h, "train", f).dump());
  } catch (const ConfigError& e) {
    throw IoError(f, "header", std::string("invalid config section: ") + e.what());
  }
  const json& hash = require(h, "architecture_hash", f);
  if (!hash.is_string()) throw IoError(f, "header.architecture_hash", "not a string");
  ck.architecture_hash = hash.get<std::string>();
  if (ck.architecture_hash != architecture_hash(ck.backbone, ck.anchors)) {
    throw CompatibilityError(f + ": architecture hash " + ck.architecture_hash +
                             " does not match the stored configuration");
  }
  ck.epoch = require_u64(h, "epoch", f);
  ck.step = require_u64(h, "step", f);
  ck.step_in_epoch = require_u64(h, "step_in_epoch", f);
  ck.rng_seed = require_u64(require(h, "rng", f), "seed", f);

  const std::uint64_t payload = bytes.size() - 16 - header_len;
  const json& manifest = require(h, "manifest", f);
  if (!manifest.is_array()) throw IoError(f, "header.manifest", "not an array");
  std::uint64_t expected = 0;
  const unsigned char* base = b + 16 + header_len;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const std::string w = "manifest[" + std::to_string(i) + "]";
    const json& e = manifest[i];
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("kind") ||
        !e["kind"].is_string() || !e.contains("shape") || !e["shape"].is_array() ||
        !e.contains("offset") || !e["offset"].is_number_unsigned()) {
      throw IoError(f, w, "malformed manifest entry");
    }
    Shape shape;
    for (const json& d : e["shape"]) {
      if (!d.is_number_integer() || d.get<std::int64_t>() < 1 || d.get<std::int64_t>() > (1 << 30)) {
        throw IoError(f, w + ".shape", "extents must be positive integers");
      }
      shape.push_back(d.get<int>());
    }
    const auto offset = e["offset"].get<std::uint64_t>();
    if (offset != expected) {
      throw IoError(f, w + ".offset", "expected " + std::to_string(expected) + ", found " +
                                          std::to_string(offset) + " (entries must tile the payload)");
    }
    const std::uint64_t n = shape_numel(shape);
    if (offset + 4 * n > payload) throw IoError(f, "payload", "truncated at tensor " + e["name"].get<std::string>());
    CheckpointTensor t{e["name"].get<std::string>(), e["kind"].get<std::string>(), Tensor<float>(shape)};
    for (std::uint64_t k = 0; k < n; ++k) {
      t.value[k] = std::bit_cast<float>(get_le<std::uint32_t>(base + offset + 4 * k));
    }
    expected = offset + 4 * n;
    ck.tensors.push_back(std::move(t));
  }
  if (expected != payload) {
    throw IoError(f, "payload", std::to_string(payload - expected) + " trailing bytes after the last tensor");
  }
  return ck;
}

Checkpoint capture_checkpoint(Detector<float>& model, const RmspropState<float>* optimizer,
                              const LossConfig& loss, const TrainConfig& train) {
  Checkpoint ck;
  ck.backbone = model.backbone_config();
  ck.anchors = model.anchor_config();
  ck.loss = loss;
  ck.train = train;
  ck.architecture_hash = architecture_hash(ck.backbone, ck.anchors);
  ck.rng_seed = train.seed;
  const auto params = model.parameters();
  for (const auto& p : params) ck.tensors.push_back({p.name, param_kind_name(p.kind), *p.tensor});
  if (optimizer) {
    for (const auto& p : params) {
      auto it = optimizer->slots.find(p.name);
      if (it == optimizer->slots.end()) continue;
      ck.tensors.push_back({kOptMeanSquare + p.name, kOptimizerKind, it->second.mean_square});
      ck.tensors.push_back({kOptMomentum + p.name, kOptimizerKind, it->second.momentum});
    }
    ck.step = optimizer->steps;
  }
  // The grad slots are not part of the snapshot.
  for (auto& t : ck.tensors) t.value.drop_grad();
  return ck;
}

namespace {

void check_architecture(const Checkpoint& ck, const Detector<float>& model) {
  const std::string want = architecture_hash(model.backbone_config(), model.anchor_config());
  if (ck.architecture_hash != want) {
    throw CompatibilityError("checkpoint architecture " + ck.architecture_hash +
                             " does not match the model architecture " + want);
  }
}

void copy_into(const CheckpointTensor& src, Tensor<float>& dst, const std::string& name) {
  if (src.value.shape() != dst.shape()) {
    throw CompatibilityError("checkpoint tensor '" + name + "' has shape " +
                             shape_string(src.value.shape()) + ", model expects " +
                             shape_string(dst.shape()));
  }
  std::copy(src.value.data().begin(), src.value.data().end(), dst.data().begin());
}

}  // namespace

void restore_parameters(const Checkpoint& ck, Detector<float>& model) {
  check_architecture(ck, model);
  auto params = model.parameters();
  for (auto& p : params) {
    const CheckpointTensor* t = ck.find(p.name);
    if (!t) throw CompatibilityError("checkpoint lacks parameter '" + p.name + "'");
    copy_into(*t, *p.tensor, p.name);
  }
  for (const auto& t : ck.tensors) {
    if (t.kind == kOptimizerKind) continue;
    const bool known = std::any_of(params.begin(), params.end(), [&](const auto& p) { return p.name == t.name; });
    if (!known) throw CompatibilityError("checkpoint has unknown parameter '" + t.name + "'");
  }
}

void restore_optimizer(const Checkpoint& ck, Detector<float>& model, RmspropState<float>& opt) {
  check_architecture(ck, model);
  opt = RmspropState<float>{};
  for (auto& p : model.parameters()) {
    if (!p.trainable()) continue;
    const CheckpointTensor* ms = ck.find(kOptMeanSquare + p.name);
    const CheckpointTensor* mom = ck.find(kOptMomentum + p.name);
    if (!ms && !mom) continue;
    if (!ms || !mom) throw CompatibilityError("checkpoint has partial optimizer state for '" + p.name + "'");
    auto& slot = opt.slots[p.name];
    slot.mean_square = Tensor<float>(p.tensor->shape());
    slot.momentum = Tensor<float>(p.tensor->shape());
    copy_into(*ms, slot.mean_square, ms->name);
    copy_into(*mom, slot.momentum, mom->name);
  }
  opt.steps = ck.step;
}

Detector<float> detector_from_checkpoint(const Checkpoint& ck) {
  Detector<float> model = Detector<float>::build(ck.backbone, ck.anchors, ck.rng_seed);
  restore_parameters(ck, model);
  return model;
}

}  // namespace shotnet
