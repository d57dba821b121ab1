// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "mdocc/metrics.hpp"
#include "mdocc/model.hpp"
#include "mdocc/rng.hpp"
#include "mdocc/synth.hpp"

namespace {

using namespace mdocc;

const OccupancyGrid& scene() {
  static const OccupancyGrid s = synth::gen_scene(synth::default_scene_spec(7));
  return s;
}

void BM_Raycast(benchmark::State& st) {
  const auto lidar = synth::preset_b(synth::split_taxonomy().for_dataset("B").space).lidar;
  for (auto _ : st) benchmark::DoNotOptimize(synth::raycast(scene(), lidar, {}));
}

void BM_RaycastSerial(benchmark::State& st) {
  const auto lidar = synth::preset_b(synth::split_taxonomy().for_dataset("B").space).lidar;
  for (auto _ : st) benchmark::DoNotOptimize(synth::raycast_serial(scene(), lidar, {}));
}

std::pair<OccupancyGrid, OccupancyGrid> grid_pair() {
  Rng rng(3, "bench");
  const GridGeometry g{{64, 64, 32}, 0.2, {}};
  std::vector<Label> a(g.dims.count()), b(g.dims.count());
  for (auto& v : a) v = Label(rng.next_u64() % 9);
  for (auto& v : b) v = Label(rng.next_u64() % 9);
  return {OccupancyGrid(g, 9, a), OccupancyGrid(g, 9, b)};
}

void BM_Accumulate(benchmark::State& st) {
  const auto [p, g] = grid_pair();
  for (auto _ : st) {
    metrics::ConfusionMatrix cm(9);
    metrics::accumulate(cm, p, g, g.geometry().extent());
    benchmark::DoNotOptimize(cm.total());
  }
}

void BM_AccumulateSerial(benchmark::State& st) {
  const auto [p, g] = grid_pair();
  for (auto _ : st) {
    metrics::ConfusionMatrix cm(9);
    metrics::accumulate_serial(cm, p, g, g.geometry().extent());
    benchmark::DoNotOptimize(cm.total());
  }
}

struct TrainFixture {
  model::ModelParams p;
  std::vector<model::Sample> samples;
  model::Batch batch;
  std::vector<double> weights;

  TrainFixture() {
    p = model::ModelParams::init(16, {{"A", 9}}, {"A"}, 1);
    Rng rng(5, "bench");
    for (int s = 0; s < 2; ++s) {
      model::Sample x{"A", {32, 32, 4}, {}, {}};
      x.x.resize(x.dims.count() * geom::kCylFeatures);
      for (auto& v : x.x) v = rng.normal();
      x.y.resize(x.dims.count());
      for (auto& v : x.y) v = Label(rng.next_u64() % 9);
      samples.push_back(std::move(x));
    }
    batch.slot = 0;
    batch.head = 0;
    for (const auto& s : samples) batch.samples.push_back(&s);
    weights.assign(9, 1.0);
  }
};

void BM_ForwardBackward(benchmark::State& st) {
  TrainFixture f;
  for (auto _ : st)
    benchmark::DoNotOptimize(model::forward_backward(f.p, f.batch, f.weights, model::Reduction::Mean));
}

void BM_ForwardBackwardSerial(benchmark::State& st) {
  TrainFixture f;
  for (auto _ : st)
    benchmark::DoNotOptimize(
        model::forward_backward_serial(f.p, f.batch, f.weights, model::Reduction::Mean));
}

}  // namespace

BENCHMARK(BM_Raycast)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RaycastSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Accumulate)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_AccumulateSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardBackwardSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
