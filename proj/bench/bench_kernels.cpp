/* Copyright 2026 The Cascaded Non-Local Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Serial vs OpenMP kernels, and the cascaded module vs the full-pairwise
// baseline. Run with --benchmark_filter to pick a subset.

#include <benchmark/benchmark.h>

#include <cmath>
#include <map>

#include "cnl/data.hpp"
#include "cnl/geom.hpp"
#include "cnl/nlops.hpp"
#include "cnl/rng.hpp"

namespace {

using namespace cnl;

constexpr std::size_t kWidth = 32;

Exec exec_of(const benchmark::State& state) {
  return state.range(1) != 0 ? Exec::kParallel : Exec::kSerial;
}

const PointCloud& scene(std::size_t n) {
  static std::map<std::size_t, PointCloud> cache;
  auto it = cache.find(n);
  if (it == cache.end())
    it = cache.emplace(n, generate_scene(standard_scene(0, n, 8.0, 4))).first;
  return it->second;
}

Matrix glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix w(rows, cols);
  const double b = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& v : w.values()) v = rng.uniform(-b, b);
  return w;
}

CascadeParams cascade_params(std::size_t c, std::size_t d) {
  Rng rng(11);
  CascadeParams p;
  p.levels[0] = {glorot(rng, c + 3, d), glorot(rng, c + 3, d)};
  p.levels[1] = {glorot(rng, d, d), glorot(rng, d, d)};
  p.levels[2] = {glorot(rng, d, d), glorot(rng, d, d)};
  p.gamma = glorot(rng, 3 * d, 2 * d);
  p.gamma_bias = Matrix(1, 2 * d);
  return p;
}

void BM_FarthestPointSample(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud& cloud = scene(n);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        farthest_point_sample(cloud.positions, n / 4, exec_of(state)));
}

void BM_Knn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud& cloud = scene(n);
  const CentroidSet centroids = farthest_point_sample(cloud.positions, n / 4);
  const auto method = state.range(2) != 0 ? KnnMethod::kGrid
                                          : KnnMethod::kExhaustive;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        knn(cloud.positions, centroids.positions, 32, exec_of(state), method));
}

void BM_NeighborhoodLevel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud& cloud = scene(n);
  const CentroidSet centroids = farthest_point_sample(cloud.positions, n / 4);
  const IndexTable neighbors = knn(cloud.positions, centroids.positions, 32);
  const CascadeParams p = cascade_params(cloud.features.cols(), kWidth);
  for (auto _ : state)
    benchmark::DoNotOptimize(neighborhood_level(
        cloud.features, cloud.positions, centroids.indices, neighbors,
        p.levels[0], true, exec_of(state)));
}

// Partition, sampling, neighbor search and the three-level module, as the
// cascaded forward would run inside one network stage.
void BM_Cascaded(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud& cloud = scene(n);
  const Exec exec = exec_of(state);
  const CascadeParams p = cascade_params(cloud.features.cols(), kWidth);
  const CascadeOptions options{LevelSet{}, true, exec};
  for (auto _ : state) {
    const SuperpointPartition partition =
        voxel_partition(cloud.positions, 1.0, 32);
    const CentroidSet centroids =
        farthest_point_sample(cloud.positions, n / 4, exec);
    const IndexTable neighbors = knn(cloud.positions, centroids.positions, 32,
                                     exec, KnnMethod::kGrid);
    const IndexTable samples = sample_superpoint_centroids(
        centroid_superpoints(partition, centroids), 20, 0);
    benchmark::DoNotOptimize(cascaded_forward(
        cloud, centroids, neighbors, samples, partition, p, options));
  }
  state.counters["points"] = static_cast<double>(n);
}

void BM_Baseline(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const PointCloud& cloud = scene(n);
  Rng rng(12);
  const std::size_t c = cloud.features.cols();
  const LevelWeights w{glorot(rng, c, kWidth), glorot(rng, c, kWidth)};
  for (auto _ : state)
    benchmark::DoNotOptimize(baseline_full_nonlocal(cloud.features, w,
                                                    exec_of(state)));
  state.counters["points"] = static_cast<double>(n);
}

void sizes(benchmark::internal::Benchmark* b) {
  for (long n : {1024, 4096})
    for (long parallel : {0, 1}) b->Args({n, parallel});
}

void knn_sizes(benchmark::internal::Benchmark* b) {
  for (long n : {1024, 4096})
    for (long parallel : {0, 1})
      for (long grid : {0, 1}) b->Args({n, parallel, grid});
}

BENCHMARK(BM_FarthestPointSample)->Apply(sizes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Knn)->Apply(knn_sizes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NeighborhoodLevel)->Apply(sizes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Cascaded)->Apply(sizes)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Baseline)
    ->Args({1024, 0})
    ->Args({1024, 1})
    ->Args({2048, 1})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
