// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shotnet/error.hpp"

namespace shotnet {

using json = nlohmann::json;

void TrainConfig::validate() const {
  optimizer.validate();
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
  if (!(match_threshold > 0.0 && match_threshold < 1.0)) {
    throw ConfigError("train.match_threshold must lie in (0,1)");
  }
  if (bn_recalibration_batches < 0) throw ConfigError("train.bn_recalibration_batches must be >= 0");
  postprocess().validate();
}

PostprocessOptions TrainConfig::postprocess() const {
  PostprocessOptions p;
  p.score_threshold = score_threshold;
  p.nms_iou = nms_iou;
  p.max_candidates = max_candidates;
  return p;
}

void RunConfig::validate() const {
  synth.validate();
  backbone.validate();
  anchors.validate();
  loss.validate();
  train.validate();
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.synth = SynthConfig::desk();
  c.backbone.width_multiplier = 0.25;
  c.backbone.fpn_channels = 32;
  c.backbone.input_h = 192;
  c.backbone.input_w = 192;
  c.train.batch_size = 8;
  return c;
}

namespace {

// One visitor per section drives both parsing and serialization, so the two
// can never disagree on key names.

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + " must be a JSON object");
  }

  template <typename V>
  void field(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    read(j_.at(key), out, where(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + where(k) + "'");
    }
  }

 private:
  std::string where(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  static void read(const json& v, bool& out, const std::string& w) {
    if (!v.is_boolean()) throw ConfigError("config key '" + w + "' must be a boolean");
    out = v.get<bool>();
  }
  static void read(const json& v, double& out, const std::string& w) {
    if (!v.is_number()) throw ConfigError("config key '" + w + "' must be a number");
    out = v.get<double>();
  }
  static void read(const json& v, int& out, const std::string& w) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + w + "' must be an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError("config key '" + w + "' out of range");
    out = static_cast<int>(x);
  }
  static void read(const json& v, std::int64_t& out, const std::string& w) {
    if (!v.is_number_integer()) throw ConfigError("config key '" + w + "' must be an integer");
    out = v.get<std::int64_t>();
  }
  static void read(const json& v, std::uint64_t& out, const std::string& w) {
    if (!v.is_number_unsigned()) throw ConfigError("config key '" + w + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, std::vector<double>& out, const std::string& w) {
    if (!v.is_array()) throw ConfigError("config key '" + w + "' must be an array of numbers");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      double x = 0.0;
      read(v[i], x, w + "[" + std::to_string(i) + "]");
      out.push_back(x);
    }
  }
  static void read(const json& v, std::array<double, 3>& out, const std::string& w) {
    std::vector<double> tmp;
    read(v, tmp, w);
    if (tmp.size() != 3) throw ConfigError("config key '" + w + "' must hold exactly 3 numbers");
    std::copy(tmp.begin(), tmp.end(), out.begin());
  }
  static void read(const json& v, IntRange& out, const std::string& w) {
    if (!v.is_array() || v.size() != 2) throw ConfigError("config key '" + w + "' must be [lo, hi]");
    read(v[0], out.lo, w + "[0]");
    read(v[1], out.hi, w + "[1]");
  }
  static void read(const json& v, RealRange& out, const std::string& w) {
    if (!v.is_array() || v.size() != 2) throw ConfigError("config key '" + w + "' must be [lo, hi]");
    read(v[0], out.lo, w + "[0]");
    read(v[1], out.hi, w + "[1]");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <typename V>
  void field(const char* key, const V& v) {
    j[key] = encode(v);
  }
  json j = json::object();

 private:
  template <typename V>
  static json encode(const V& v) { return json(v); }
  static json encode(const IntRange& r) { return json::array({r.lo, r.hi}); }
  static json encode(const RealRange& r) { return json::array({r.lo, r.hi}); }
};

template <typename V>
void visit(V& v, SynthConfig& c) {
  v.field("height", c.height);
  v.field("width", c.width);
  v.field("events_per_image", c.events_per_image);
  v.field("noise_count_weights", c.noise_count_weights);
  v.field("swell_band_width_px", c.swell_band_width_px);
  v.field("swell_time_extent", c.swell_time_extent);
  v.field("swell_full_extent_probability", c.swell_full_extent_probability);
  v.field("swell_probability", c.swell_probability);
  v.field("burst_size_px", c.burst_size_px);
  v.field("noise_amplitude_ratio", c.noise_amplitude_ratio);
  v.field("rng_seed", c.rng_seed);
}

template <typename V>
void visit(V& v, BackboneConfig& c) {
  v.field("in_channels", c.in_channels);
  v.field("width_multiplier", c.width_multiplier);
  v.field("fpn_channels", c.fpn_channels);
  v.field("input_h", c.input_h);
  v.field("input_w", c.input_w);
  v.field("bn_decay", c.bn_decay);
  v.field("bn_epsilon", c.bn_epsilon);
}

template <typename V>
void visit(V& v, AnchorConfig& c) {
  v.field("aspect_ratios", c.aspect_ratios);
  v.field("scales", c.scales);
  v.field("extra_scale_for_ratio1", c.extra_scale_for_ratio1);
}

template <typename V>
void visit(V& v, LossConfig& c) {
  v.field("loc_weight_alpha", c.loc_weight_alpha);
  v.field("focal_enabled", c.focal_enabled);
  v.field("focal_alpha", c.focal_alpha);
  v.field("focal_gamma", c.focal_gamma);
  v.field("hard_negative_ratio", c.hard_negative_ratio);
}

template <typename V>
void visit(V& v, TrainConfig& c) {
  v.field("learning_rate", c.optimizer.learning_rate);
  v.field("momentum", c.optimizer.momentum);
  v.field("decay", c.optimizer.decay);
  v.field("epsilon", c.optimizer.epsilon);
  v.field("l2_weight", c.optimizer.l2_weight);
  v.field("batch_size", c.batch_size);
  v.field("epochs", c.epochs);
  v.field("max_steps", c.max_steps);
  v.field("seed", c.seed);
  v.field("nms_iou", c.nms_iou);
  v.field("score_threshold", c.score_threshold);
  v.field("max_candidates", c.max_candidates);
  v.field("match_threshold", c.match_threshold);
  v.field("strict_threshold_matching", c.strict_threshold_matching);
  v.field("eval_every", c.eval_every);
  v.field("bn_recalibration", c.bn_recalibration);
  v.field("bn_recalibration_batches", c.bn_recalibration_batches);
}

template <typename C>
json to_json(const C& c) {
  Writer w;
  visit(w, const_cast<C&>(c));
  return w.j;
}

template <typename C>
void from_json_section(const json& j, const std::string& path, C& c) {
  Reader r(j, path);
  visit(r, c);
  r.finish();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": invalid JSON: " + e.what());
  }
}

template <typename C>
C section_from_text(const std::string& text, const char* name) {
  C c;
  from_json_section(parse_json(text, name), name, c);
  c.validate();
  return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  const json j = parse_json(text, "run config");
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  if (j.contains("profile")) {
    if (!j["profile"].is_string()) throw ConfigError("config key 'profile' must be a string");
    const auto p = j["profile"].get<std::string>();
    if (p == "desk") {
      c = RunConfig::desk();
    } else if (p != "paper") {
      throw ConfigError("config key 'profile' must be \"paper\" or \"desk\", got \"" + p + "\"");
    }
  }
  for (const auto& [k, v] : j.items()) {
    if (k == "profile") continue;
    if (k == "synth") from_json_section(v, k, c.synth);
    else if (k == "backbone") from_json_section(v, k, c.backbone);
    else if (k == "anchors") from_json_section(v, k, c.anchors);
    else if (k == "loss") from_json_section(v, k, c.loss);
    else if (k == "train") from_json_section(v, k, c.train);
    else throw ConfigError("unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "", "cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string run_config_to_json(const RunConfig& c, int indent) {
  json j{{"synth", to_json(c.synth)},
         {"backbone", to_json(c.backbone)},
         {"anchors", to_json(c.anchors)},
         {"loss", to_json(c.loss)},
         {"train", to_json(c.train)}};
  return j.dump(indent);
}

std::string backbone_config_to_json(const BackboneConfig& c) { return to_json(c).dump(); }
std::string anchor_config_to_json(const AnchorConfig& c) { return to_json(c).dump(); }
std::string loss_config_to_json(const LossConfig& c) { return to_json(c).dump(); }
std::string train_config_to_json(const TrainConfig& c) { return to_json(c).dump(); }

BackboneConfig backbone_config_from_json(const std::string& t) {
  return section_from_text<BackboneConfig>(t, "backbone");
}
AnchorConfig anchor_config_from_json(const std::string& t) {
  return section_from_text<AnchorConfig>(t, "anchors");
}
LossConfig loss_config_from_json(const std::string& t) {
  return section_from_text<LossConfig>(t, "loss");
}
TrainConfig train_config_from_json(const std::string& t) {
  return section_from_text<TrainConfig>(t, "train");
}

std::string architecture_hash(const BackboneConfig& backbone, const AnchorConfig& anchors) {
  const std::string canonical =
      json{{"backbone", to_json(backbone)}, {"anchors", to_json(anchors)}}.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace shotnet
