// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "shotnet/synthetic_data.hpp"
#include "test_util.hpp"

namespace shotnet {
namespace {

using testing::TempDir;

SynthConfig tiny() {
  SynthConfig c;
  c.height = c.width = 96;
  c.swell_band_width_px = {8, 20};
  c.burst_size_px = {8, 28};
  c.rng_seed = 9;
  return c;
}

TEST(SynthConfig, Validation) {
  EXPECT_NO_THROW(SynthConfig{}.validate());
  EXPECT_NO_THROW(SynthConfig::desk().validate());
  EXPECT_EQ(SynthConfig::desk().height, 192);
  auto c = tiny();
  c.noise_count_weights = {0.5, 0.4};
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.noise_amplitude_ratio = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.burst_size_px = {10, 5};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DefaultHistogram, MatchesTheDocumentedShape) {
  const auto& w = SynthConfig{}.noise_count_weights;
  ASSERT_EQ(w.size(), 9u);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-9);
  EXPECT_NEAR(w[0], 0.24, 0.01);
  double mean_bad = 0.0;
  for (std::size_t k = 1; k < w.size(); ++k) mean_bad += k * w[k];
  mean_bad /= 1.0 - w[0];
  EXPECT_NEAR(mean_bad, 2.9, 0.05);
  for (std::size_t k = 2; k < w.size(); ++k) EXPECT_LE(w[k], w[k - 1] + 0.01);
}

TEST(GenerateSample, AllGoodWeights) {
  auto c = tiny();
  c.noise_count_weights = {1.0};
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto s = generate_sample(c, i);
    EXPECT_FALSE(s.is_bad());
    EXPECT_STREQ(s.label(), "good");
    EXPECT_TRUE(s.boxes.empty());
  }
}

TEST(GenerateSample, Deterministic) {
  const auto c = tiny();
  for (std::uint64_t i = 0; i < 5; ++i) {
    const auto a = generate_sample(c, i), b = generate_sample(c, i);
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.boxes, b.boxes);
  }
  auto other = c;
  other.rng_seed = 10;
  EXPECT_FALSE(generate_sample(c, 0).image == generate_sample(other, 0).image);
  EXPECT_FALSE(generate_sample(c, 0).image == generate_sample(c, 1).image);
}

TEST(GenerateSample, CorpusMatchesPerIndexGeneration) {
  const auto c = tiny();
  const auto corpus = generate_corpus(c, 6);
  for (std::uint64_t i = 0; i < 6; ++i) EXPECT_EQ(corpus[i].image, generate_sample(c, i).image);
}

TEST(GenerateSample, InvariantsAndContrast) {
  auto c = SynthConfig::desk();
  c.rng_seed = 4;
  int boxes = 0;
  for (std::uint64_t i = 0; i < 60; ++i) {
    const auto s = generate_sample(c, i);
    EXPECT_EQ(s.image.shape(), (Shape{1, 192, 192}));
    EXPECT_EQ(s.is_bad(), !s.boxes.empty());
    float peak = 0.0f;
    for (float v : s.image.data()) {
      ASSERT_TRUE(std::isfinite(v));
      peak = std::max(peak, std::abs(v));
    }
    EXPECT_FLOAT_EQ(peak, 1.0f);
    for (const auto& b : s.boxes) EXPECT_TRUE(is_valid_box(b));
    const auto stats = measure_contrast(s);
    for (double m : stats.box_mean_abs) {
      EXPECT_GE(m, 2.0 * stats.background_mean_abs) << s.id;
      ++boxes;
    }
  }
  EXPECT_GT(boxes, 60);
}

TEST(GenerateSample, BoxCountHistogramWithinTotalVariation) {
  const auto c = tiny();
  const std::size_t n = 5000;
  const auto corpus = generate_corpus(c, n);
  std::vector<double> freq(c.noise_count_weights.size(), 0.0);
  for (const auto& s : corpus) {
    ASSERT_LT(s.boxes.size(), freq.size());
    freq[s.boxes.size()] += 1.0 / n;
  }
  double tv = 0.0;
  for (std::size_t k = 0; k < freq.size(); ++k) tv += 0.5 * std::abs(freq[k] - c.noise_count_weights[k]);
  EXPECT_LT(tv, 0.05);
}

TEST(SplitDataset, FractionsAndStratification) {
  const auto corpus = generate_corpus(tiny(), 100);
  const auto parts = split_dataset(corpus, {0.8, 0.1, 0.1});
  EXPECT_EQ(parts[0].size() + parts[1].size() + parts[2].size(), 100u);
  EXPECT_NEAR(static_cast<double>(parts[0].size()), 80.0, 3.0);
  EXPECT_NEAR(static_cast<double>(parts[1].size()), 10.0, 3.0);
  const auto all_train = split_dataset(corpus, {1.0, 0.0, 0.0});
  EXPECT_EQ(all_train[0].size(), 100u);
  EXPECT_TRUE(all_train[1].empty());
  EXPECT_THROW(split_dataset(corpus, {0.5, 0.1, 0.1}), ConfigError);

  // Box-count groups keep roughly the requested proportions.
  std::size_t good_total = 0, good_train = 0;
  for (const auto& s : corpus) good_total += s.boxes.empty();
  for (const auto& s : parts[0]) good_train += s.boxes.empty();
  EXPECT_NEAR(static_cast<double>(good_train), 0.8 * good_total, 1.5);
}

TEST(SplitDataset, SmallCorporaHitEverySplit) {
  const std::array<double, 3> f = {0.5, 0.25, 0.25};
  for (std::size_t n = 1; n <= 12; ++n) {
    const auto parts = split_dataset(generate_corpus(tiny(), n), f);
    for (int s = 0; s < 3; ++s) {
      EXPECT_LT(std::abs(static_cast<double>(parts[s].size()) - f[s] * n), 1.0) << "n=" << n << " split " << s;
    }
  }
}

TEST(Sgt, RoundTripAndLayout) {
  TempDir dir("sgt");
  const auto s = generate_sample(tiny(), 3);
  write_sgt(dir / "x.sgt", s.image);
  EXPECT_EQ(read_sgt(dir / "x.sgt"), s.image);

  std::ifstream in(dir / "x.sgt", std::ios::binary);
  char magic[4];
  std::uint32_t hw[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(hw), 8);
  EXPECT_EQ(std::string(magic, 4), "SGT1");
  EXPECT_EQ(hw[0], 96u);
  EXPECT_EQ(hw[1], 96u);
  EXPECT_EQ(std::filesystem::file_size(dir / "x.sgt"), 12u + 96u * 96u * 4u);
}

TEST(Sgt, BadMagicAndTruncation) {
  TempDir dir("sgt_bad");
  const auto s = generate_sample(tiny(), 3);
  write_sgt(dir / "x.sgt", s.image);
  {
    std::fstream f(dir / "x.sgt", std::ios::binary | std::ios::in | std::ios::out);
    f.write("SGT2", 4);
  }
  try {
    read_sgt(dir / "x.sgt");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_EQ(e.field(), "magic");
    EXPECT_NE(e.file().find("x.sgt"), std::string::npos);
  }
  write_sgt(dir / "y.sgt", s.image);
  std::filesystem::resize_file(dir / "y.sgt", 100);
  EXPECT_THROW(read_sgt(dir / "y.sgt"), IoError);
  EXPECT_THROW(read_sgt(dir / "missing.sgt"), IoError);
}

TEST(Dataset, RoundTripBitExact) {
  TempDir dir("ds");
  const auto corpus = generate_corpus(tiny(), 10);
  write_dataset(corpus, dir.path());
  const auto back = read_dataset(dir.path());
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back[i].id, corpus[i].id);
    EXPECT_EQ(back[i].image, corpus[i].image);
    EXPECT_EQ(back[i].boxes, corpus[i].boxes);
  }
}

TEST(Dataset, AnnotationSchema) {
  TempDir dir("ds_schema");
  write_dataset(generate_corpus(tiny(), 4), dir.path(), true);
  std::ifstream in(dir / "annotations.json");
  const auto j = nlohmann::json::parse(in);
  ASSERT_TRUE(j.contains("samples"));
  for (const auto& s : j["samples"]) {
    EXPECT_TRUE(s["id"].is_string());
    EXPECT_TRUE(std::filesystem::exists(dir.path() / s["image"].get<std::string>()));
    EXPECT_TRUE(s["label"] == "good" || s["label"] == "bad");
    for (const auto& b : s["boxes"])
      for (const char* k : {"cx", "cy", "w", "h"}) EXPECT_TRUE(b[k].is_number());
    EXPECT_TRUE(std::filesystem::exists(dir.path() / (s["id"].get<std::string>() + ".pgm")));
  }
}

TEST(Dataset, EmptyDirectoryIsEmptyDataset) {
  TempDir dir("ds_empty");
  EXPECT_TRUE(read_dataset(dir.path()).empty());
  write_dataset({}, dir / "sub");
  EXPECT_TRUE(read_dataset(dir / "sub").empty());
  EXPECT_THROW(read_dataset(dir / "does_not_exist"), IoError);
}

TEST(Dataset, MalformedManifestNamesField) {
  TempDir dir("ds_bad");
  write_dataset(generate_corpus(tiny(), 2), dir.path());
  auto rewrite = [&](const std::function<void(nlohmann::json&)>& edit) {
    std::ifstream in(dir / "annotations.json");
    auto j = nlohmann::json::parse(in);
    in.close();
    edit(j);
    std::ofstream(dir / "annotations.json") << j.dump();
  };
  rewrite([](nlohmann::json& j) {
    j["samples"][0]["label"] = "bad";
    j["samples"][0]["boxes"] = nlohmann::json::array({{{"cx", 2.5}, {"cy", 0.5}, {"w", 0.1}, {"h", 0.1}}});
  });
  try {
    read_dataset(dir.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(e.field().find("boxes"), std::string::npos) << e.what();
  }
  rewrite([](nlohmann::json& j) { j["samples"][0]["label"] = "maybe"; });
  EXPECT_THROW(read_dataset(dir.path()), IoError);
}

TEST(Pgm, HeaderAndSize) {
  TempDir dir("pgm");
  const auto s = generate_sample(tiny(), 1);
  write_pgm(dir / "x.pgm", s.image, s.boxes);
  std::ifstream in(dir / "x.pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P5");
  EXPECT_EQ(w, 96);
  EXPECT_EQ(h, 96);
  EXPECT_EQ(maxv, 255);
}

}  // namespace
}  // namespace shotnet
