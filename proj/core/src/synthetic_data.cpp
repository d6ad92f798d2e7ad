// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/synthetic_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "shotnet/error.hpp"
#include "shotnet/parallel.hpp"
#include "shotnet/rng.hpp"

namespace shotnet {

using json = nlohmann::json;
namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synth.size must be at least 8x8");
  if (events_per_image.lo < 0 || events_per_image.hi < events_per_image.lo) {
    throw ConfigError("synth.events_per_image must be a non-negative range");
  }
  if (noise_count_weights.empty()) throw ConfigError("synth.noise_count_weights must not be empty");
  double total = 0.0;
  for (double w : noise_count_weights) {
    if (!(w >= 0.0)) throw ConfigError("synth.noise_count_weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("synth.noise_count_weights must sum to 1");
  for (const IntRange& r : {swell_band_width_px, burst_size_px}) {
    if (r.lo < 1 || r.hi < r.lo) throw ConfigError("synth pixel ranges must be positive, lo <= hi");
  }
  if (!(swell_time_extent.lo > 0.0 && swell_time_extent.hi <= 1.0 &&
        swell_time_extent.lo <= swell_time_extent.hi)) {
    throw ConfigError("synth.swell_time_extent must lie in (0,1]");
  }
  for (double p : {swell_full_extent_probability, swell_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth probabilities must lie in [0,1]");
  }
  if (!(noise_amplitude_ratio >= 2.0)) throw ConfigError("synth.noise_amplitude_ratio must be >= 2");
}

SynthConfig SynthConfig::desk() {
  SynthConfig c;
  c.height = 192;
  c.width = 192;
  c.swell_band_width_px = {16, 40};
  c.burst_size_px = {18, 52};
  return c;
}

namespace {

constexpr int kMaxRetries = 64;

struct PixelRect {
  int x0, y0, x1, y1;  // half-open
  int w() const { return x1 - x0; }
  int h() const { return y1 - y0; }
};

double ricker(double tau, double freq) {
  const double a = std::numbers::pi * freq * tau;
  const double a2 = a * a;
  return (1.0 - 2.0 * a2) * std::exp(-a2);
}

int draw_count(const std::vector<double>& weights, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

std::vector<double> background(const SynthConfig& cfg, Rng& rng) {
  const int h = cfg.height, w = cfg.width;
  std::vector<double> img(static_cast<std::size_t>(h) * w, 0.0);
  const int events = static_cast<int>(rng.uniform_int(cfg.events_per_image.lo, cfg.events_per_image.hi));
  for (int e = 0; e < events; ++e) {
    const double t0 = rng.uniform(0.05, 0.85);
    const double velocity = rng.uniform(0.7, 3.0);
    const double freq = rng.uniform(20.0, 40.0);  // cycles per record length
    const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.3, 1.0);
    const double half_support = 1.5 / freq;
    for (int j = 0; j < w; ++j) {
      const double x = static_cast<double>(j) / w;
      const double t = std::sqrt(t0 * t0 + (x / velocity) * (x / velocity));
      if (t - half_support > 1.0) continue;
      const double a = amp / (1.0 + 2.0 * t);
      const int r0 = std::max(0, static_cast<int>(std::floor((t - half_support) * h)));
      const int r1 = std::min(h - 1, static_cast<int>(std::ceil((t + half_support) * h)));
      for (int i = r0; i <= r1; ++i) {
        img[static_cast<std::size_t>(i) * w + j] += a * ricker((i + 0.5) / h - t, freq);
      }
    }
  }
  double sq = 0.0;
  for (double v : img) sq += v * v;
  const double rms = std::sqrt(sq / img.size());
  const double sigma = 0.02 * (rms > 0.0 ? rms : 1.0);
  for (double& v : img) v += sigma * rng.normal();
  return img;
}

/// Draws a rectangle and trims it to the image; zero-area draws are retried.
PixelRect draw_rect(const SynthConfig& cfg, Rng& rng, bool swell) {
  const int h = cfg.height, w = cfg.width;
  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    PixelRect r{};
    if (swell) {
      const int bw = static_cast<int>(rng.uniform_int(cfg.swell_band_width_px.lo, cfg.swell_band_width_px.hi));
      r.x0 = static_cast<int>(rng.uniform_int(-bw / 4, std::max(-bw / 4, w - 3 * bw / 4)));
      r.x1 = r.x0 + bw;
      if (rng.uniform() < cfg.swell_full_extent_probability) {
        r.y0 = 0;
        r.y1 = h;
      } else {
        const int bh = static_cast<int>(std::lround(rng.uniform(cfg.swell_time_extent.lo, cfg.swell_time_extent.hi) * h));
        r.y0 = static_cast<int>(rng.uniform_int(0, std::max(0, h - bh)));
        r.y1 = r.y0 + bh;
      }
    } else {
      const int bw = static_cast<int>(rng.uniform_int(cfg.burst_size_px.lo, cfg.burst_size_px.hi));
      const int bh = static_cast<int>(rng.uniform_int(cfg.burst_size_px.lo, cfg.burst_size_px.hi));
      r.x0 = static_cast<int>(rng.uniform_int(-bw / 4, std::max(-bw / 4, w - 3 * bw / 4)));
      r.y0 = static_cast<int>(rng.uniform_int(-bh / 4, std::max(-bh / 4, h - 3 * bh / 4)));
      r.x1 = r.x0 + bw;
      r.y1 = r.y0 + bh;
    }
    r.x0 = std::clamp(r.x0, 0, w);
    r.x1 = std::clamp(r.x1, 0, w);
    r.y0 = std::clamp(r.y0, 0, h);
    r.y1 = std::clamp(r.y1, 0, h);
    if (r.w() >= 2 && r.h() >= 2) return r;
  }
  throw ConfigError("synth: could not draw a non-empty artifact after " +
                    std::to_string(kMaxRetries) + " attempts; check pixel ranges");
}

void add_swell(std::vector<double>& img, const SynthConfig& cfg, const PixelRect& r, double level,
               Rng& rng) {
  const int w = cfg.width, h = cfg.height;
  const double freq = rng.uniform(2.0, 8.0);  // cycles per image height
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double drift = rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
  const double amp = level * rng.uniform(1.0, 1.5) * std::numbers::pi / 2.0;
  for (int j = r.x0; j < r.x1; ++j) {
    const double phj = phase + drift * (j - r.x0) / std::max(1, r.w());
    const double trace_gain = rng.uniform(0.85, 1.15);
    for (int i = r.y0; i < r.y1; ++i) {
      img[static_cast<std::size_t>(i) * w + j] +=
          amp * trace_gain * std::sin(2.0 * std::numbers::pi * freq * (i + 0.5) / h + phj);
    }
  }
}

void add_burst(std::vector<double>& img, const SynthConfig& cfg, const PixelRect& r, double level,
               Rng& rng) {
  const int w = cfg.width;
  const double gain = cfg.noise_amplitude_ratio * rng.uniform(1.0, 1.5);
  double peak = 0.0;
  for (int i = r.y0; i < r.y1; ++i) {
    for (int j = r.x0; j < r.x1; ++j) {
      double& v = img[static_cast<std::size_t>(i) * w + j];
      v = gain * (v + level / cfg.noise_amplitude_ratio * rng.normal());
      peak = std::max(peak, std::abs(v));
    }
  }
  const double clip = 0.8 * peak;
  for (int i = r.y0; i < r.y1; ++i) {
    for (int j = r.x0; j < r.x1; ++j) {
      double& v = img[static_cast<std::size_t>(i) * w + j];
      v = std::clamp(v, -clip, clip);
    }
  }
}

Box to_box(const PixelRect& r, int h, int w) {
  return Box::from_corners(static_cast<double>(r.x0) / w, static_cast<double>(r.y0) / h,
                           static_cast<double>(r.x1) / w, static_cast<double>(r.y1) / h);
}

PixelRect to_pixels(const Box& b, int h, int w) {
  PixelRect r{static_cast<int>(std::lround(b.x0() * w)), static_cast<int>(std::lround(b.y0() * h)),
              static_cast<int>(std::lround(b.x1() * w)), static_cast<int>(std::lround(b.y1() * h))};
  r.x0 = std::clamp(r.x0, 0, w);
  r.x1 = std::clamp(r.x1, 0, w);
  r.y0 = std::clamp(r.y0, 0, h);
  r.y1 = std::clamp(r.y1, 0, h);
  return r;
}

std::string sample_id(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sg_%06llu", static_cast<unsigned long long>(index));
  return buf;
}

}  // namespace

ContrastStats measure_contrast(const ShotGatherSample& s) {
  const int h = s.height(), w = s.width();
  std::vector<char> covered(static_cast<std::size_t>(h) * w, 0);
  ContrastStats stats;
  for (const Box& b : s.boxes) {
    const PixelRect r = to_pixels(b, h, w);
    double sum = 0.0;
    for (int i = r.y0; i < r.y1; ++i) {
      for (int j = r.x0; j < r.x1; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * w + j;
        sum += std::abs(s.image[k]);
        covered[k] = 1;
      }
    }
    const double area = static_cast<double>(std::max(1, r.w() * r.h()));
    stats.box_mean_abs.push_back(sum / area);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < covered.size(); ++k) {
    if (covered[k]) continue;
    sum += std::abs(s.image[k]);
    ++stats.background_pixels;
  }
  stats.background_mean_abs = stats.background_pixels ? sum / stats.background_pixels : 0.0;
  return stats;
}

ShotGatherSample generate_sample(const SynthConfig& cfg, std::uint64_t index) {
  cfg.validate();
  const int h = cfg.height, w = cfg.width;
  Rng rng = Rng::stream(cfg.rng_seed, index);

  const std::vector<double> clean = background(cfg, rng);
  double level = 0.0;
  for (double v : clean) level += std::abs(v);
  level /= clean.size();
  if (!(level > 0.0)) level = 1e-3;
  const int count = draw_count(cfg.noise_count_weights, rng);

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    std::vector<double> img = clean;
    std::vector<PixelRect> rects;
    for (int k = 0; k < count; ++k) {
      const bool swell = rng.uniform() < cfg.swell_probability;
      const PixelRect r = draw_rect(cfg, rng, swell);
      if (swell) {
        add_swell(img, cfg, r, cfg.noise_amplitude_ratio * level, rng);
      } else {
        add_burst(img, cfg, r, cfg.noise_amplitude_ratio * level, rng);
      }
      rects.push_back(r);
    }
    double peak = 0.0;
    for (double v : img) peak = std::max(peak, std::abs(v));
    const double scale = peak > 0.0 ? 1.0 / peak : 1.0;

    ShotGatherSample s;
    s.id = sample_id(index);
    s.image = Tensor<float>({1, h, w});
    for (std::size_t k = 0; k < img.size(); ++k) s.image[k] = static_cast<float>(img[k] * scale);
    for (const PixelRect& r : rects) s.boxes.push_back(to_box(r, h, w));

    // Detectability guarantee: every artifact at least twice as energetic as
    // the untouched background. Redraw the artifacts otherwise.
    const ContrastStats c = measure_contrast(s);
    const bool ok = std::all_of(c.box_mean_abs.begin(), c.box_mean_abs.end(), [&](double m) {
      return c.background_pixels == 0 || m >= 2.0 * c.background_mean_abs;
    });
    if (ok) return s;
  }
  throw ConfigError("synth: sample " + std::to_string(index) +
                    " failed the amplitude-contrast check after retries");
}

std::vector<ShotGatherSample> generate_corpus(const SynthConfig& config, std::size_t count) {
  config.validate();
  std::vector<ShotGatherSample> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = generate_sample(config, i); });
  return out;
}

std::array<std::vector<ShotGatherSample>, 3> split_dataset(std::vector<ShotGatherSample> samples,
                                                           const std::array<double, 3>& f) {
  const double total = f[0] + f[1] + f[2];
  for (double x : f) {
    if (!(x >= 0.0)) throw ConfigError("split fractions must be non-negative");
  }
  if (std::abs(total - 1.0) > 1e-6) throw ConfigError("split fractions must sum to 1");

  // Walk the samples grouped by box count and hand each to the split furthest
  // below its share so far. Rounding per group would send every singleton
  // group to train.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].boxes.size() < samples[b].boxes.size();
  });
  std::vector<int> dest(samples.size(), 0);
  std::array<double, 3> taken{};
  for (std::size_t k = 0; k < order.size(); ++k) {
    int best = 0;
    double best_deficit = -1e300;
    for (int s = 0; s < 3; ++s) {
      if (f[s] == 0.0) continue;
      const double deficit = f[s] * static_cast<double>(k + 1) - taken[s];
      if (deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    dest[order[k]] = best;
    taken[best] += 1.0;
  }
  std::array<std::vector<ShotGatherSample>, 3> out;
  for (std::size_t i = 0; i < samples.size(); ++i) out[dest[i]].push_back(std::move(samples[i]));
  return out;
}

// --- I/O -------------------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "", "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string(), "", "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string(), "", "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(path.string(), "", "rename failed: " + ec.message());
}

json box_json(const Box& b) { return json{{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}}; }

double number_field(const json& obj, const char* key, const std::string& file,
                    const std::string& where) {
  if (!obj.is_object() || !obj.contains(key) || !obj[key].is_number()) {
    throw IoError(file, where + "." + key, "missing or non-numeric");
  }
  return obj[key].get<double>();
}

std::string string_field(const json& obj, const char* key, const std::string& file,
                         const std::string& where) {
  if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) {
    throw IoError(file, where + "." + key, "missing or not a string");
  }
  return obj[key].get<std::string>();
}

}  // namespace

void write_sgt(const fs::path& path, const Tensor<float>& image) {
  require_rank(image.shape(), 3, "write_sgt image");
  std::ostringstream os;
  os.write("SGT1", 4);
  put_u32(os, static_cast<std::uint32_t>(image.dim(1)));
  put_u32(os, static_cast<std::uint32_t>(image.dim(2)));
  for (float v : image.data()) put_u32(os, std::bit_cast<std::uint32_t>(v));
  write_file_atomic(path, os.str());
}

Tensor<float> read_sgt(const fs::path& path) {
  const std::string bytes = read_all(path);
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12) throw IoError(path.string(), "header", "truncated header");
  if (std::memcmp(b, "SGT1", 4) != 0) throw IoError(path.string(), "magic", "expected \"SGT1\"");
  const std::uint32_t h = get_u32(b + 4), w = get_u32(b + 8);
  if (h == 0 || w == 0 || h > 65536 || w > 65536) {
    throw IoError(path.string(), "header", "implausible size " + std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (bytes.size() != 12 + 4 * n) {
    throw IoError(path.string(), "payload",
                  "expected " + std::to_string(4 * n) + " payload bytes, found " +
                      std::to_string(bytes.size() - 12));
  }
  Tensor<float> img({1, static_cast<int>(h), static_cast<int>(w)});
  for (std::size_t k = 0; k < n; ++k) img[k] = std::bit_cast<float>(get_u32(b + 12 + 4 * k));
  return img;
}

void write_pgm(const fs::path& path, const Tensor<float>& image, const std::vector<Box>& outlines) {
  require_rank(image.shape(), 3, "write_pgm image");
  const int h = image.dim(1), w = image.dim(2);
  std::vector<unsigned char> px(static_cast<std::size_t>(h) * w);
  for (std::size_t k = 0; k < px.size(); ++k) {
    const double v = std::clamp(static_cast<double>(image[k]), -1.0, 1.0);
    px[k] = static_cast<unsigned char>(std::lround((v + 1.0) * 127.5));
  }
  for (const Box& b : outlines) {
    const PixelRect r = to_pixels(b, h, w);
    if (r.w() <= 0 || r.h() <= 0) continue;
    for (int j = r.x0; j < r.x1; ++j) {
      px[static_cast<std::size_t>(r.y0) * w + j] = 255;
      px[static_cast<std::size_t>(r.y1 - 1) * w + j] = 255;
    }
    for (int i = r.y0; i < r.y1; ++i) {
      px[static_cast<std::size_t>(i) * w + r.x0] = 255;
      px[static_cast<std::size_t>(i) * w + r.x1 - 1] = 255;
    }
  }
  std::ostringstream os;
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  write_file_atomic(path, os.str());
}

std::vector<ManifestEntry> write_dataset(const std::vector<ShotGatherSample>& samples,
                                         const fs::path& dir, bool export_pgm) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "", "cannot create directory: " + ec.message());
  std::vector<ManifestEntry> manifest;
  json doc{{"samples", json::array()}};
  for (const ShotGatherSample& s : samples) {
    ManifestEntry e{s.id, s.id + ".sgt", s.label(), s.boxes};
    write_sgt(dir / e.image, s.image);
    if (export_pgm) write_pgm(dir / (s.id + ".pgm"), s.image);
    json boxes = json::array();
    for (const Box& b : s.boxes) boxes.push_back(box_json(b));
    doc["samples"].push_back({{"id", e.id}, {"image", e.image}, {"label", e.label}, {"boxes", boxes}});
    manifest.push_back(std::move(e));
  }
  write_file_atomic(dir / "annotations.json", doc.dump(2) + "\n");
  return manifest;
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  const fs::path file = dir / "annotations.json";
  if (!fs::exists(dir)) throw IoError(dir.string(), "", "dataset directory does not exist");
  if (!fs::exists(file)) return {};
  const std::string f = file.string();
  json doc;
  try {
    doc = json::parse(read_all(file));
  } catch (const json::parse_error& e) {
    throw IoError(f, "", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array()) {
    throw IoError(f, "samples", "missing or not an array");
  }
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < doc["samples"].size(); ++i) {
    const json& s = doc["samples"][i];
    const std::string where = "samples[" + std::to_string(i) + "]";
    ManifestEntry e;
    e.id = string_field(s, "id", f, where);
    e.image = string_field(s, "image", f, where);
    e.label = string_field(s, "label", f, where);
    if (e.label != "good" && e.label != "bad") throw IoError(f, where + ".label", "must be good|bad");
    if (!s.contains("boxes") || !s["boxes"].is_array()) throw IoError(f, where + ".boxes", "missing or not an array");
    for (std::size_t j = 0; j < s["boxes"].size(); ++j) {
      const std::string bw = where + ".boxes[" + std::to_string(j) + "]";
      const json& jb = s["boxes"][j];
      Box b{number_field(jb, "cx", f, bw), number_field(jb, "cy", f, bw),
            number_field(jb, "w", f, bw), number_field(jb, "h", f, bw)};
      if (!is_valid_box(b)) throw IoError(f, bw, "box outside image or with invalid extent");
      e.boxes.push_back(b);
    }
    if ((e.label == "bad") != !e.boxes.empty()) {
      throw IoError(f, where + ".label", "label '" + e.label + "' inconsistent with box count");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ShotGatherSample> read_dataset(const fs::path& dir) {
  std::vector<ShotGatherSample> out;
  for (ManifestEntry& e : read_manifest(dir)) {
    ShotGatherSample s;
    s.id = std::move(e.id);
    s.image = read_sgt(dir / e.image);
    s.boxes = std::move(e.boxes);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace shotnet
