// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "shotnet/box.hpp"
#include "shotnet/config.hpp"
#include "shotnet/detector.hpp"
#include "shotnet/evaluation.hpp"
#include "shotnet/rng.hpp"
#include "shotnet/trainer.hpp"

namespace shotnet {
namespace {

void BM_DetectorForwardDesk(benchmark::State& state) {
  const RunConfig c = RunConfig::desk();
  auto model = Detector<float>::build(c.backbone, c.anchors, 0);
  const int n = static_cast<int>(state.range(0));
  Tensor<float> images({n, 1, c.backbone.input_h, c.backbone.input_w});
  const auto sample = generate_sample(c.synth, 0);
  for (int i = 0; i < n; ++i)
    std::copy(sample.image.data().begin(), sample.image.data().end(), images.ptr() + i * sample.image.size());
  for (auto _ : state) {
    Graph<float> g(false);
    benchmark::DoNotOptimize(model.forward(g, g.constant(images), Mode::kInfer));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_DetectorForwardDesk)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStepDesk(benchmark::State& state) {
  RunConfig c = RunConfig::desk();
  Trainer t(c, generate_corpus(c.synth, 8));
  const std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5, 6, 7};
  for (auto _ : state) benchmark::DoNotOptimize(t.step(batch));
}
BENCHMARK(BM_TrainStepDesk)->Unit(benchmark::kMillisecond);

std::vector<Detection> random_detections(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Detection> d;
  for (int i = 0; i < n; ++i)
    d.push_back({"img" + std::to_string(i % 10), Box{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9),
                                                     rng.uniform(0.02, 0.3), rng.uniform(0.02, 0.3)},
                 1, rng.uniform()});
  return d;
}

void BM_Nms(benchmark::State& state) {
  const auto dets = random_detections(static_cast<int>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(nms(dets, 0.6));
}
BENCHMARK(BM_Nms)->Arg(100)->Arg(400)->Arg(2000);

void BM_ApSweep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto dets = random_detections(n, 6);
  GroundTruthSet gt;
  for (const auto& d : random_detections(n / 4, 7)) gt[d.image_id].push_back(d.box);
  for (auto _ : state) benchmark::DoNotOptimize(ap_sweep(dets, gt));
}
BENCHMARK(BM_ApSweep)->Arg(500)->Arg(5000);

}  // namespace
}  // namespace shotnet

BENCHMARK_MAIN();
