// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "shotnet/ops.hpp"
#include "shotnet/rng.hpp"

namespace shotnet {
namespace {

Tensor<float> random(Shape shape, std::uint64_t seed) {
  Tensor<float> t(shape);
  Rng rng(seed);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

// args: channels in, channels out, spatial extent, stride
void BM_Conv2d(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0)), cout = static_cast<int>(state.range(1));
  const int hw = static_cast<int>(state.range(2)), stride = static_cast<int>(state.range(3));
  const auto x = random({1, cin, hw, hw}, 1);
  const int k = cin == cout ? 1 : 3;
  const auto w = random({cout, cin, k, k}, 2);
  ConvSpec spec{cout, k, k, stride};
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, static_cast<const Tensor<float>*>(nullptr), spec));
  state.SetItemsProcessed(state.iterations() * cout * cin * k * k * (hw / stride) * (hw / stride));
}
BENCHMARK(BM_Conv2d)->Args({8, 16, 96, 1})->Args({64, 64, 48, 1})->Args({1, 8, 192, 2})->Args({128, 128, 24, 1});

void BM_DepthwiseConv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const auto x = random({1, c, hw, hw}, 3);
  const auto w = random({c, 1, 3, 3}, 4);
  ConvSpec spec{c, 3, 3, 1, Padding::kSameCeil, true};
  for (auto _ : state)
    benchmark::DoNotOptimize(ops::depthwise_conv2d(x, w, static_cast<const Tensor<float>*>(nullptr), spec));
  state.SetItemsProcessed(state.iterations() * c * 9 * hw * hw);
}
BENCHMARK(BM_DepthwiseConv2d)->Args({16, 96})->Args({64, 48})->Args({256, 12});

}  // namespace
}  // namespace shotnet
