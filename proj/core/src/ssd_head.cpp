// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/ssd_head.hpp"

#include <algorithm>
#include <cmath>

#include "shotnet/rng.hpp"

namespace shotnet {

void AnchorConfig::validate() const {
  if (aspect_ratios.empty()) throw ConfigError("anchors.aspect_ratios must not be empty");
  for (double r : aspect_ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("anchors.aspect_ratios must be positive");
  }
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (!(scales[k] > 0.0 && scales[k] <= 1.0)) throw ConfigError("anchors.scales must lie in (0,1]");
    if (k > 0 && !(scales[k] > scales[k - 1])) {
      throw ConfigError("anchors.scales must increase with stride");
    }
  }
}

int AnchorConfig::anchors_per_location() const {
  return static_cast<int>(aspect_ratios.size()) + (extra_scale_for_ratio1 ? 1 : 0);
}

std::vector<FeatureMapSize> projection_sizes(int image_h, int image_w) {
  std::vector<FeatureMapSize> out;
  for (int s : {8, 16, 32}) out.push_back({(image_h + s - 1) / s, (image_w + s - 1) / s, s});
  return out;
}

std::vector<Box> generate_default_boxes(const AnchorConfig& config,
                                        const std::vector<FeatureMapSize>& sizes, int image_h,
                                        int image_w) {
  config.validate();
  if (sizes.empty() || sizes.size() > config.scales.size()) {
    throw ConfigError("generate_default_boxes: expected 1.." + std::to_string(config.scales.size()) +
                      " projection sizes, got " + std::to_string(sizes.size()));
  }
  if (image_h < 1 || image_w < 1) throw ConfigError("generate_default_boxes: bad image size");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const auto& s = sizes[k];
    if (s.h < 1 || s.w < 1 || s.stride < 1 || s.h != (image_h + s.stride - 1) / s.stride ||
        s.w != (image_w + s.stride - 1) / s.stride) {
      throw ConfigError("generate_default_boxes: projection " + std::to_string(k) + " size " +
                        std::to_string(s.h) + "x" + std::to_string(s.w) + " inconsistent with stride " +
                        std::to_string(s.stride) + " on a " + std::to_string(image_h) + "x" +
                        std::to_string(image_w) + " image");
    }
  }

  // Scales refer to the shorter side; convert to per-axis fractions.
  const double side = std::min(image_h, image_w);
  const double sx = side / image_w;
  const double sy = side / image_h;

  std::vector<Box> boxes;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double scale = config.scales[k];
    const double next = k + 1 < config.scales.size() ? config.scales[k + 1] : 1.0;
    std::vector<std::pair<double, double>> shapes;  // (w, h) before axis conversion
    for (double r : config.aspect_ratios) shapes.emplace_back(scale * std::sqrt(r), scale / std::sqrt(r));
    if (config.extra_scale_for_ratio1) {
      const double s = std::sqrt(scale * next);
      shapes.emplace_back(s, s);
    }
    const auto& fm = sizes[k];
    for (int i = 0; i < fm.h; ++i) {
      for (int j = 0; j < fm.w; ++j) {
        const double cx = (j + 0.5) / fm.w;
        const double cy = (i + 0.5) / fm.h;
        for (const auto& [w, h] : shapes) {
          const Box raw{cx, cy, w * sx, h * sy};
          boxes.push_back(clip_to_unit(raw).value_or(raw));
        }
      }
    }
  }
  return boxes;
}

template <typename T>
SsdHead<T> SsdHead<T>::build(const AnchorConfig& anchors, int in_channels, std::uint64_t seed) {
  anchors.validate();
  if (in_channels < 1) throw ConfigError("head in_channels must be >= 1");
  SsdHead head;
  head.in_channels_ = in_channels;
  head.anchors_per_location_ = anchors.anchors_per_location();
  const int a = head.anchors_per_location_;
  const T noise_prior = static_cast<T>(std::log(0.01 / 0.99));
  Rng rng = Rng::stream(seed, 1);

  for (auto& level : head.levels) {
    level.cls_spec = ConvSpec{a * kNumClasses, 3, 3, 1, Padding::kSameCeil, false};
    level.box_spec = ConvSpec{a * 4, 3, 3, 1, Padding::kSameCeil, false};
    level.cls_weight = Tensor<T>({a * kNumClasses, in_channels, 3, 3});
    level.box_weight = Tensor<T>({a * 4, in_channels, 3, 3});
    for (T& w : level.cls_weight.data()) w = static_cast<T>(rng.truncated_normal(0.03));
    for (T& w : level.box_weight.data()) w = static_cast<T>(rng.truncated_normal(0.03));
    level.cls_bias = Tensor<T>({a * kNumClasses});
    for (int k = 0; k < a; ++k) level.cls_bias[k * kNumClasses + 1] = noise_prior;
    level.box_bias = Tensor<T>({a * 4});
  }
  return head;
}

template <typename T>
HeadOutputs<T> SsdHead<T>::forward(Graph<T>& g, const ProjectionSet<T>& p) {
  const std::array<typename Graph<T>::Var, 3> maps = {p.p8, p.p16, p.p32};
  std::vector<typename Graph<T>::Var> cls, box;
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor<T>& v = g.value(maps[k]);
    if (v.rank() != 4 || v.dim(1) != in_channels_) {
      throw ShapeError("ssd head: projection " + std::to_string(k) + " has shape " +
                       shape_string(v.shape()) + ", expected " + std::to_string(in_channels_) +
                       " channels");
    }
    Level& l = levels[k];
    cls.push_back(g.conv2d(maps[k], g.leaf(l.cls_weight), g.leaf(l.cls_bias), l.cls_spec));
    box.push_back(g.conv2d(maps[k], g.leaf(l.box_weight), g.leaf(l.box_bias), l.box_spec));
  }
  return {g.flatten_anchor_maps(cls, kNumClasses), g.flatten_anchor_maps(box, 4)};
}

template <typename T>
void SsdHead<T>::collect(ParameterList<T>& out) {
  static const char* kNames[3] = {"head.p8", "head.p16", "head.p32"};
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string p = kNames[k];
    out.push_back({p + ".cls.weight", &levels[k].cls_weight, ParamKind::kWeight});
    out.push_back({p + ".cls.bias", &levels[k].cls_bias, ParamKind::kBias});
    out.push_back({p + ".box.weight", &levels[k].box_weight, ParamKind::kWeight});
    out.push_back({p + ".box.bias", &levels[k].box_bias, ParamKind::kBias});
  }
}

template class SsdHead<float>;
template class SsdHead<double>;

}  // namespace shotnet
