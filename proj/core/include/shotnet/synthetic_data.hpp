// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shotnet/box.hpp"
#include "shotnet/tensor.hpp"

namespace shotnet {

struct IntRange {
  int lo;
  int hi;
  bool operator==(const IntRange&) const = default;
};

struct RealRange {
  double lo;
  double hi;
  bool operator==(const RealRange&) const = default;
};

/// Synthetic shot-gather generator settings. Pixel ranges refer to the
/// configured image size.
struct SynthConfig {
  int height = 600;
  int width = 600;
  IntRange events_per_image{6, 14};
  /// P(k noise boxes), k = 0..8. Default: 24.3% noise-free, mean 2.9 boxes
  /// per noisy image.
  std::vector<double> noise_count_weights = {0.243,   0.18925, 0.19682, 0.14383, 0.09084,
                                             0.06056, 0.03785, 0.02271, 0.01514};
  IntRange swell_band_width_px{48, 120};
  RealRange swell_time_extent{0.3, 0.9};  // fraction of height for partial bands
  double swell_full_extent_probability = 0.3;
  double swell_probability = 0.5;  // otherwise an amplitude burst
  IntRange burst_size_px{50, 160};
  double noise_amplitude_ratio = 4.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
  /// 192x192 profile with pixel ranges scaled to match.
  static SynthConfig desk();

  bool operator==(const SynthConfig&) const = default;
};

struct ShotGatherSample {
  std::string id;
  Tensor<float> image;     // [1, H, W], max |amplitude| = 1
  std::vector<Box> boxes;  // normalized; empty <=> "good"

  bool is_bad() const { return !boxes.empty(); }
  const char* label() const { return boxes.empty() ? "good" : "bad"; }
  int height() const { return image.dim(1); }
  int width() const { return image.dim(2); }
};

/// Deterministic in (config.rng_seed, index).
ShotGatherSample generate_sample(const SynthConfig& config, std::uint64_t index);

/// Samples 0..count-1, generated in parallel over indices.
std::vector<ShotGatherSample> generate_corpus(const SynthConfig& config, std::size_t count);

/// Mean |amplitude| inside a box and over pixels covered by no box.
struct ContrastStats {
  std::vector<double> box_mean_abs;
  double background_mean_abs = 0.0;
  std::size_t background_pixels = 0;
};
ContrastStats measure_contrast(const ShotGatherSample& sample);

/// Train/val/test split stratified by box count.
std::array<std::vector<ShotGatherSample>, 3> split_dataset(std::vector<ShotGatherSample> samples,
                                                           const std::array<double, 3>& fractions);

// --- on-disk formats -------------------------------------------------------

/// `.sgt`: "SGT1", u32 LE height, u32 LE width, height*width f32 LE, row-major.
void write_sgt(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_sgt(const std::filesystem::path& path);

/// 8-bit binary PGM of [-1,1] mapped linearly to [0,255]. Box outlines, when
/// given, are burned in at 255.
void write_pgm(const std::filesystem::path& path, const Tensor<float>& image,
               const std::vector<Box>& outlines = {});

struct ManifestEntry {
  std::string id;
  std::string image;  // path relative to the dataset directory
  std::string label;
  std::vector<Box> boxes;
};

/// Writes `<id>.sgt` files plus `annotations.json`; returns the manifest.
std::vector<ManifestEntry> write_dataset(const std::vector<ShotGatherSample>& samples,
                                         const std::filesystem::path& dir,
                                         bool export_pgm = false);

/// Reads `annotations.json` and the referenced images. A directory without
/// annotations.json (or an empty directory) yields an empty list. Throws
/// IoError naming the file and field on malformed input.
std::vector<ShotGatherSample> read_dataset(const std::filesystem::path& dir);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

}  // namespace shotnet
