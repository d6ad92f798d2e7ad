// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "shotnet/backbone.hpp"

#include <cmath>

#include "shotnet/rng.hpp"

namespace shotnet {

const char* param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::kWeight: return "weight";
    case ParamKind::kBias: return "bias";
    case ParamKind::kBnGamma: return "bn_gamma";
    case ParamKind::kBnBeta: return "bn_beta";
    case ParamKind::kBnStatistic: return "bn_statistic";
  }
  return "weight";
}

ParamKind param_kind_from_name(const std::string& name) {
  for (ParamKind k : {ParamKind::kWeight, ParamKind::kBias, ParamKind::kBnGamma,
                      ParamKind::kBnBeta, ParamKind::kBnStatistic}) {
    if (name == param_kind_name(k)) return k;
  }
  throw ConfigError("unknown parameter kind '" + name + "'");
}

void BackboneConfig::validate() const {
  if (in_channels < 1) throw ConfigError("backbone.in_channels must be >= 1");
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) {
    throw ConfigError("backbone.width_multiplier must lie in (0,1]");
  }
  if (std::lround(width_multiplier * 32.0) < 8) {
    throw ConfigError("backbone.width_multiplier too small: round(32*w) must be >= 8");
  }
  if (fpn_channels < 8) throw ConfigError("backbone.fpn_channels must be >= 8");
  if (input_h < 64 || input_w < 64) throw ConfigError("backbone.input_size sides must be >= 64");
  if (!(bn_decay >= 0.0 && bn_decay < 1.0)) throw ConfigError("backbone.bn_decay must lie in [0,1)");
  if (!(bn_epsilon > 0.0)) throw ConfigError("backbone.bn_epsilon must be > 0");
}

int BackboneConfig::scaled(int channels) const {
  return std::max(8, static_cast<int>(std::lround(channels * width_multiplier)));
}

const std::array<DwsStage, 13>& mobilenet_v1_schedule() {
  static const std::array<DwsStage, 13> schedule = {{{64, 1},
                                                     {128, 2},
                                                     {128, 1},
                                                     {256, 2},
                                                     {256, 1},
                                                     {512, 2},
                                                     {512, 1},
                                                     {512, 1},
                                                     {512, 1},
                                                     {512, 1},
                                                     {512, 1},
                                                     {1024, 2},
                                                     {1024, 1}}};
  return schedule;
}

namespace {

template <typename T>
ConvBnRelu<T> make_conv(int in_ch, int out_ch, int kernel, int stride, bool depthwise, Rng& rng) {
  ConvBnRelu<T> layer;
  layer.spec.out_channels = out_ch;
  layer.spec.kernel_h = kernel;
  layer.spec.kernel_w = kernel;
  layer.spec.stride = stride;
  layer.spec.padding = Padding::kSameCeil;
  layer.spec.depthwise = depthwise;
  layer.spec.validate();
  layer.weight = Tensor<T>({out_ch, depthwise ? 1 : in_ch, kernel, kernel});
  for (T& w : layer.weight.data()) w = static_cast<T>(rng.truncated_normal(0.03));
  layer.bn = BatchNormParams<T>(out_ch);
  return layer;
}

}  // namespace

template <typename T>
typename Graph<T>::Var ConvBnRelu<T>::forward(Graph<T>& g, typename Graph<T>::Var x, Mode mode,
                                              const BackboneConfig& cfg) {
  const auto w = g.leaf(weight);
  const auto y = spec.depthwise ? g.depthwise_conv2d(x, w, std::nullopt, spec)
                                : g.conv2d(x, w, std::nullopt, spec);
  return g.relu(g.batch_norm(y, bn, mode, cfg.bn_decay, cfg.bn_epsilon));
}

template <typename T>
void ConvBnRelu<T>::collect(const std::string& prefix, ParameterList<T>& out) {
  out.push_back({prefix + ".weight", &weight, ParamKind::kWeight});
  out.push_back({prefix + ".bn.gamma", &bn.gamma, ParamKind::kBnGamma});
  out.push_back({prefix + ".bn.beta", &bn.beta, ParamKind::kBnBeta});
  out.push_back({prefix + ".bn.running_mean", &bn.running_mean, ParamKind::kBnStatistic});
  out.push_back({prefix + ".bn.running_var", &bn.running_var, ParamKind::kBnStatistic});
}

template <typename T>
Backbone<T> Backbone<T>::build(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  Backbone b;
  b.config_ = config;
  Rng rng = Rng::stream(seed, 0);

  int ch = config.scaled(32);
  b.stem = make_conv<T>(config.in_channels, ch, 3, 2, false, rng);
  for (const DwsStage& stage : mobilenet_v1_schedule()) {
    DwsBlock<T> block;
    block.depthwise = make_conv<T>(ch, ch, 3, stage.stride, true, rng);
    const int out = config.scaled(stage.out_channels);
    block.pointwise = make_conv<T>(ch, out, 1, 1, false, rng);
    b.blocks.push_back(std::move(block));
    ch = out;
  }
  const auto taps = b.tap_channels();
  for (std::size_t k = 0; k < 3; ++k) {
    b.laterals[k] = make_conv<T>(taps[k], config.fpn_channels, 1, 1, false, rng);
  }
  return b;
}

template <typename T>
std::array<int, 3> Backbone<T>::tap_channels() const {
  const auto& s = mobilenet_v1_schedule();
  return {config_.scaled(s[kTapBlocks[0]].out_channels),
          config_.scaled(s[kTapBlocks[1]].out_channels),
          config_.scaled(s[kTapBlocks[2]].out_channels)};
}

template <typename T>
BackboneOutputs<T> Backbone<T>::forward(Graph<T>& g, typename Graph<T>::Var image, Mode mode) {
  return forward(g, image, mode, config_.bn_decay);
}

template <typename T>
BackboneOutputs<T> Backbone<T>::forward(Graph<T>& g, typename Graph<T>::Var image, Mode mode,
                                        double bn_decay) {
  BackboneConfig cfg = config_;
  cfg.bn_decay = bn_decay;
  const Tensor<T>& in = g.value(image);
  require_rank(in.shape(), 4, "backbone input");
  if (in.dim(1) != config_.in_channels || in.dim(2) != config_.input_h ||
      in.dim(3) != config_.input_w) {
    throw ShapeError("backbone: input " + shape_string(in.shape()) + " does not match configured " +
                     std::to_string(config_.in_channels) + "x" + std::to_string(config_.input_h) +
                     "x" + std::to_string(config_.input_w));
  }
  BackboneOutputs<T> out;
  auto x = stem.forward(g, image, mode, cfg);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    x = blocks[i].depthwise.forward(g, x, mode, cfg);
    x = blocks[i].pointwise.forward(g, x, mode, cfg);
    if (static_cast<int>(i) == kTapBlocks[0]) out.c8 = x;
    if (static_cast<int>(i) == kTapBlocks[1]) out.c16 = x;
    if (static_cast<int>(i) == kTapBlocks[2]) out.c32 = x;
  }
  const auto l8 = laterals[0].forward(g, out.c8, mode, cfg);
  const auto l16 = laterals[1].forward(g, out.c16, mode, cfg);
  const auto l32 = laterals[2].forward(g, out.c32, mode, cfg);

  auto& p = out.projections;
  p.p32 = l32;
  const Tensor<T>& v16 = g.value(l16);
  p.p16 = g.add(l16, g.upsample_nearest2x(p.p32, v16.dim(2), v16.dim(3)));
  const Tensor<T>& v8 = g.value(l8);
  p.p8 = g.add(l8, g.upsample_nearest2x(p.p16, v8.dim(2), v8.dim(3)));
  return out;
}

template <typename T>
void Backbone<T>::collect(ParameterList<T>& out) {
  stem.collect("backbone.stem", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = "backbone.dws" + std::to_string(i + 1);
    blocks[i].depthwise.collect(prefix + ".dw", out);
    blocks[i].pointwise.collect(prefix + ".pw", out);
  }
  static const char* kNames[3] = {"backbone.lateral8", "backbone.lateral16", "backbone.lateral32"};
  for (std::size_t k = 0; k < 3; ++k) laterals[k].collect(kNames[k], out);
}

template <typename T>
ParameterList<T> Backbone<T>::parameters() {
  ParameterList<T> out;
  collect(out);
  return out;
}

template struct ConvBnRelu<float>;
template struct ConvBnRelu<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace shotnet
