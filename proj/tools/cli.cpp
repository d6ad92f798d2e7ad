// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "shotnet/checkpoint.hpp"
#include "shotnet/config.hpp"
#include "shotnet/error.hpp"
#include "shotnet/evaluation.hpp"
#include "shotnet/parallel.hpp"
#include "shotnet/trainer.hpp"
#include "shotnet/verify/suite.hpp"

namespace shotnet::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "", "cannot open for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string(), "", "cannot create directory: " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "", "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "", "write failed");
}

RunConfig load_config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

std::array<double, 3> parse_split(const std::string& text) {
  std::array<double, 3> f{};
  std::stringstream ss(text);
  std::string item;
  int k = 0;
  while (std::getline(ss, item, ',')) {
    if (k == 3) throw ConfigError("--split takes three comma-separated fractions");
    try {
      std::size_t used = 0;
      f[k] = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--split: '" + item + "' is not a number");
    }
    ++k;
  }
  if (k != 3) throw ConfigError("--split takes three comma-separated fractions");
  return f;
}

void require_input_size(const ShotGatherSample& s, const BackboneConfig& bc, const std::string& what) {
  if (s.height() != bc.input_h || s.width() != bc.input_w) {
    throw CompatibilityError(what + " is " + std::to_string(s.height()) + "x" +
                             std::to_string(s.width()) + " but the model expects " +
                             std::to_string(bc.input_h) + "x" + std::to_string(bc.input_w));
  }
}

json curve_json(const PrecisionRecallCurve& c) {
  return json(std::vector<double>(c.precision.begin(), c.precision.end()));
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::string split = "0.8,0.1,0.1";
  bool export_pgm = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig sc = load_config_or_default(a.config).synth;
  sc.rng_seed = a.seed;
  sc.validate();
  const auto fractions = parse_split(a.split);
  auto parts = split_dataset(generate_corpus(sc, a.count), fractions);
  static const char* kNames[3] = {"train", "val", "test"};
  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %7s %7s %7s %7s\n", "split", "images", "good", "bad", "boxes");
  out << line;
  for (int i = 0; i < 3; ++i) {
    write_dataset(parts[i], fs::path(a.out) / kNames[i], a.export_pgm);
    std::size_t bad = 0, boxes = 0;
    for (const auto& s : parts[i]) {
      bad += s.is_bad();
      boxes += s.boxes.size();
    }
    std::snprintf(line, sizeof(line), "%-6s %7zu %7zu %7zu %7zu\n", kNames[i], parts[i].size(),
                  parts[i].size() - bad, bad, boxes);
    out << line;
  }
  out << "wrote " << a.out << " (" << sc.height << "x" << sc.width << ", seed " << sc.rng_seed << ")\n";
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  int threads = 1;
  std::optional<int> epochs;
  std::optional<std::int64_t> max_steps;
  std::optional<std::uint64_t> seed;
  std::optional<int> batch_size;
  std::optional<int> eval_every;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_config_or_default(a.config);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.max_steps) cfg.train.max_steps = *a.max_steps;
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.eval_every) cfg.train.eval_every = *a.eval_every;
  cfg.validate();
  if (a.threads < 1) throw ConfigError("--threads must be >= 1");
  set_num_threads(a.threads);

  TrainingData data = load_training_data(a.data);
  Trainer trainer(cfg, std::move(data.train), std::move(data.val));
  if (!a.resume.empty()) {
    trainer.resume(load_checkpoint(a.resume));
    out << "resumed at epoch " << trainer.epoch() << ", step " << trainer.steps() << "\n";
  }
  write_text(fs::path(a.out) / "config.json", run_config_to_json(cfg) + "\n");
  out << "training on " << trainer.train_set().size() << " images, validating on "
      << trainer.val_set().size() << "\n";
  const EpochRecord last = trainer.run(a.out, [&](const EpochRecord& r, Trainer&) {
    out << r.to_json() << "\n" << std::flush;
    return true;
  });
  out << "done: epoch " << last.epoch << ", step " << last.step << ", checkpoint "
      << (fs::path(a.out) / "last.sgck").string() << "\n";
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string config;
  std::string detections;
  std::optional<double> iou;
  bool sweep = false;
  double score_thresh = 0.05;
  std::optional<double> nms_iou;
  int batch = 8;
  int threads = 1;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.ckpt.empty() && a.detections.empty()) throw ConfigError("eval needs --ckpt or --detections");
  if (a.iou && !(*a.iou > 0.0 && *a.iou <= 1.0)) throw ConfigError("--iou must lie in (0,1]");
  if (a.batch < 1) throw ConfigError("--batch must be >= 1");
  if (a.threads < 1) throw ConfigError("--threads must be >= 1");
  set_num_threads(a.threads);

  const auto samples = evaluation_samples(a.data);
  json report;
  report["data"] = a.data;
  report["images"] = samples.size();
  std::size_t gt_boxes = 0;
  for (const auto& s : samples) gt_boxes += s.boxes.size();
  report["ground_truth_boxes"] = gt_boxes;

  std::vector<Detection> dets;
  if (!a.detections.empty()) {
    report["source"] = "detections";
    report["detections_file"] = a.detections;
    dets = detections_from_json(read_text(a.detections), samples, a.detections);
  } else {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    if (!a.config.empty()) {
      const RunConfig rc = load_run_config(a.config);
      const std::string want = architecture_hash(rc.backbone, rc.anchors);
      if (want != ck.architecture_hash) {
        throw CompatibilityError(a.ckpt + ": architecture hash " + ck.architecture_hash +
                                 " does not match " + a.config + " (" + want + ")");
      }
    }
    Detector<float> model = detector_from_checkpoint(ck);
    for (const auto& s : samples) require_input_size(s, model.backbone_config(), "image " + s.id);
    PostprocessOptions po = ck.train.postprocess();
    po.score_threshold = a.score_thresh;
    if (a.nms_iou) po.nms_iou = *a.nms_iou;
    po.validate();
    dets = detect_samples(model, samples, po, a.batch);
    report["source"] = "checkpoint";
    report["checkpoint"] = a.ckpt;
    report["architecture_hash"] = ck.architecture_hash;
    report["epoch"] = ck.epoch;
    report["step"] = ck.step;
    report["score_threshold"] = po.score_threshold;
    report["nms_iou"] = po.nms_iou;
  }
  report["detections"] = dets.size();

  const GroundTruthSet gt = ground_truth_of(samples);
  json per = json::array();
  if (a.sweep || !a.iou) {
    const ApReport r = ap_sweep(dets, gt);
    for (const auto& [thr, ap] : r.ap_per_threshold) {
      per.push_back({{"iou", thr}, {"ap", ap}, {"precision", curve_json(r.pr_curves.at(thr))}});
    }
    report["mode"] = "sweep";
    report["ap50"] = r.ap50;
    report["ap_coco"] = r.ap_coco;
    out << "AP@0.5 " << r.ap50 << "  AP@[.5:.95] " << r.ap_coco << "\n";
  } else {
    PrecisionRecallCurve curve;
    const double ap = compute_ap(dets, gt, *a.iou, {}, &curve);
    per.push_back({{"iou", *a.iou}, {"ap", ap}, {"precision", curve_json(curve)}});
    report["mode"] = "single";
    report["ap"] = ap;
    out << "AP@" << *a.iou << " " << ap << "\n";
  }
  report["ap_per_threshold"] = per;
  write_text(a.out, report.dump(2) + "\n");
  out << samples.size() << " images, " << dets.size() << " detections, report " << a.out << "\n";
  return 0;
}

// --- predict -----------------------------------------------------------------

struct PredictArgs {
  std::string image;
  std::string ckpt;
  double score_thresh = 0.3;
  double nms_iou = 0.6;
  std::string out;
  std::string render;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  Detector<float> model = detector_from_checkpoint(ck);
  ShotGatherSample s;
  s.id = fs::path(a.image).stem().string();
  s.image = read_sgt(a.image);
  const auto& bc = model.backbone_config();
  require_input_size(s, bc, a.image);
  PostprocessOptions po = ck.train.postprocess();
  po.score_threshold = a.score_thresh;
  po.nms_iou = a.nms_iou;
  po.validate();
  Tensor<float> batch({1, bc.in_channels, bc.input_h, bc.input_w});
  std::copy(s.image.data().begin(), s.image.data().end(), batch.ptr());
  const auto dets = model.predict(batch, {s.id}, po).at(0);
  write_text(a.out, detections_to_json(dets, s.height(), s.width(), s.id));
  if (!a.render.empty()) {
    std::vector<Box> boxes;
    for (const auto& d : dets) boxes.push_back(d.box);
    write_pgm(a.render, s.image, boxes);
  }
  out << dets.size() << " detections above " << a.score_thresh << " written to " << a.out << "\n";
  return 0;
}

// --- verify ------------------------------------------------------------------

struct VerifyArgs {
  std::uint64_t seed = 2026;
  int cases = 100;
  std::string scratch;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  if (a.cases < 1) throw ConfigError("--cases must be >= 1");
  verify::SuiteOptions o;
  o.seed = a.seed;
  o.oracle_cases = a.cases;
  o.scratch_dir = a.scratch;
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = verify::run_verify_suite(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << verify::format_table(results);
  const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.passed; });
  out << passed << "/" << results.size() << " checks passed in " << secs << " s\n";
  return verify::all_passed(results) ? 0 : 1;
}

}  // namespace

std::string detections_to_json(const std::vector<Detection>& detections, int height, int width,
                               const std::string& image_id) {
  json doc;
  if (!image_id.empty()) {
    doc["image_id"] = image_id;
    doc["height"] = height;
    doc["width"] = width;
  }
  json list = json::array();
  for (const Detection& d : detections) {
    const double x0 = std::clamp(d.box.x0() * width, 0.0, static_cast<double>(width));
    const double y0 = std::clamp(d.box.y0() * height, 0.0, static_cast<double>(height));
    const double x1 = std::clamp(d.box.x1() * width, 0.0, static_cast<double>(width));
    const double y1 = std::clamp(d.box.y1() * height, 0.0, static_cast<double>(height));
    list.push_back({{"image_id", d.image_id}, {"box", {x0, y0, x1, y1}}, {"score", d.score}});
  }
  doc["detections"] = list;
  return doc.dump(2) + "\n";
}

std::vector<Detection> detections_from_json(const std::string& text,
                                            const std::vector<ShotGatherSample>& samples,
                                            const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(source, "", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("detections") || !doc["detections"].is_array()) {
    throw IoError(source, "detections", "missing or not an array");
  }
  std::map<std::string, std::pair<int, int>> sizes;
  for (const auto& s : samples) sizes[s.id] = {s.height(), s.width()};
  std::vector<Detection> out;
  const json& list = doc["detections"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "detections[" + std::to_string(i) + "]";
    const json& d = list[i];
    if (!d.is_object() || !d.contains("image_id") || !d["image_id"].is_string()) {
      throw IoError(source, where + ".image_id", "missing or not a string");
    }
    if (!d.contains("score") || !d["score"].is_number()) {
      throw IoError(source, where + ".score", "missing or not a number");
    }
    if (!d.contains("box") || !d["box"].is_array() || d["box"].size() != 4 ||
        !std::all_of(d["box"].begin(), d["box"].end(), [](const json& v) { return v.is_number(); })) {
      throw IoError(source, where + ".box", "expected [x0, y0, x1, y1]");
    }
    Detection det;
    det.image_id = d["image_id"].get<std::string>();
    const auto it = sizes.find(det.image_id);
    if (it == sizes.end()) throw IoError(source, where + ".image_id", "unknown image '" + det.image_id + "'");
    const double h = it->second.first, w = it->second.second;
    const auto& b = d["box"];
    det.box = Box::from_corners(b[0].get<double>() / w, b[1].get<double>() / h, b[2].get<double>() / w,
                                b[3].get<double>() / h);
    if (!is_valid_box(det.box)) throw IoError(source, where + ".box", "degenerate or outside the image");
    det.score = d["score"].get<double>();
    if (!std::isfinite(det.score)) throw IoError(source, where + ".score", "not finite");
    out.push_back(std::move(det));
  }
  return out;
}

std::vector<ShotGatherSample> evaluation_samples(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "", "dataset directory does not exist");
  return read_dataset(fs::is_directory(dir / "test") ? dir / "test" : dir);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"shotnet: swell-noise detection in seismic shot gathers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "shotnet 0.1.0");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  synth->add_option("--count", sa.count, "Number of images")->required();
  synth->add_option("--seed", sa.seed, "Generator seed")->required();
  synth->add_option("--out", sa.out, "Output directory (train/, val/, test/)")->required();
  synth->add_option("--config", sa.config, "Run config JSON (synth section is used)");
  synth->add_option("--split", sa.split, "train,val,test fractions")->capture_default_str();
  synth->add_flag("--export-pgm", sa.export_pgm, "Also write 8-bit PGM previews");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a detector");
  train->add_option("--data", ta.data, "Dataset directory")->required();
  train->add_option("--config", ta.config, "Run config JSON");
  train->add_option("--out", ta.out, "Output directory (last.sgck, metrics.jsonl)")->required();
  train->add_option("--resume", ta.resume, "Checkpoint to continue from");
  train->add_option("--threads", ta.threads, "Worker threads")->capture_default_str();
  train->add_option("--epochs", ta.epochs, "Override train.epochs");
  train->add_option("--max-steps", ta.max_steps, "Override train.max_steps");
  train->add_option("--seed", ta.seed, "Override train.seed");
  train->add_option("--batch-size", ta.batch_size, "Override train.batch_size");
  train->add_option("--eval-every", ta.eval_every, "Override train.eval_every");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a detection file");
  eval->add_option("--data", ea.data, "Dataset directory (its test/ split when present)")->required();
  eval->add_option("--ckpt", ea.ckpt, "Checkpoint");
  eval->add_option("--config", ea.config, "Run config the checkpoint must match");
  eval->add_option("--detections", ea.detections, "Evaluate this detection JSON instead of a model");
  auto* iou = eval->add_option("--iou", ea.iou, "Single IoU threshold");
  eval->add_flag("--sweep", ea.sweep, "AP at IoU 0.50:0.05:0.95 (default)")->excludes(iou);
  eval->add_option("--score-thresh", ea.score_thresh, "Minimum detection score")->capture_default_str();
  eval->add_option("--nms-iou", ea.nms_iou, "NMS IoU (default: checkpoint's train.nms_iou)");
  eval->add_option("--batch", ea.batch, "Inference batch size")->capture_default_str();
  eval->add_option("--threads", ea.threads, "Worker threads")->capture_default_str();
  eval->add_option("--out", ea.out, "Report JSON")->required();

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Detect noise in one .sgt image");
  predict->add_option("--image", pa.image, "Input .sgt")->required();
  predict->add_option("--ckpt", pa.ckpt, "Checkpoint")->required();
  predict->add_option("--score-thresh", pa.score_thresh, "Minimum detection score")->capture_default_str();
  predict->add_option("--nms-iou", pa.nms_iou, "NMS IoU")->capture_default_str();
  predict->add_option("--out", pa.out, "Detections JSON (pixel xyxy)")->required();
  predict->add_option("--render", pa.render, "PGM with detection outlines");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run gradient, oracle and round-trip checks");
  verify->add_option("--seed", va.seed, "Suite seed")->capture_default_str();
  verify->add_option("--cases", va.cases, "Cases per oracle check")->capture_default_str();
  verify->add_option("--scratch", va.scratch, "Scratch directory for file round-trips");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*train) return cmd_train(ta, out);
    if (*eval) return cmd_eval(ea, out);
    if (*predict) return cmd_predict(pa, out);
    if (*verify) return cmd_verify(va, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace shotnet::cli
