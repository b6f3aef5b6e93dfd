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

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cnl/data.hpp"
#include "cnl/rng.hpp"

namespace cnl {

std::vector<Block> block_split(const PointCloud& cloud, double block_size,
                               std::size_t n_sample, std::uint64_t seed) {
  validate(cloud);
  require(block_size > 0.0 && std::isfinite(block_size),
          "block_size must be positive");
  require(n_sample >= 1, "n_sample must be >= 1");
  const std::size_t n = cloud.size();
  double origin[2] = {cloud.positions(0, 0), cloud.positions(0, 1)};
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t a = 0; a < 2; ++a)
      origin[a] = std::min(origin[a], cloud.positions(i, a));

  std::map<std::array<std::int64_t, 2>, std::vector<Index>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    std::array<std::int64_t, 2> key;
    for (std::size_t a = 0; a < 2; ++a)
      key[a] = static_cast<std::int64_t>(
          std::floor((cloud.positions(i, a) - origin[a]) / block_size));
    cells[key].push_back(static_cast<Index>(i));
  }

  const std::size_t extra = cloud.features.cols() - 3;
  std::vector<Block> blocks;
  std::uint64_t ordinal = 0;
  for (const auto& [key, members] : cells) {
    const std::uint64_t stream = ordinal++;
    if (members.size() < kMinBlockPoints) continue;
    Rng rng(Rng::mix(seed, stream));
    std::vector<Index> chosen;
    if (members.size() >= n_sample) {
      std::vector<Index> pool = members;
      for (std::size_t k = 0; k < n_sample; ++k)
        std::swap(pool[k], pool[k + rng.below(pool.size() - k)]);
      chosen.assign(pool.begin(), pool.begin() + static_cast<long>(n_sample));
    } else {
      chosen = members;
      while (chosen.size() < n_sample)
        chosen.push_back(members[rng.below(members.size())]);
    }
    std::ranges::sort(chosen);

    Block block;
    block.cell = key;
    block.source = chosen;
    double lo[3];
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = cloud.positions(static_cast<std::size_t>(members[0]), a);
      for (Index m : members)
        lo[a] = std::min(lo[a], cloud.positions(static_cast<std::size_t>(m), a));
    }
    PointCloud& out = block.cloud;
    out.num_classes = cloud.num_classes;
    out.positions = Matrix(n_sample, 3);
    out.features = Matrix(n_sample, 3 + extra + 3);
    for (std::size_t r = 0; r < n_sample; ++r) {
      const auto src = static_cast<std::size_t>(chosen[r]);
      for (std::size_t a = 0; a < 3; ++a) {
        const double rel = cloud.positions(src, a) - lo[a];
        out.positions(r, a) = rel;
        out.features(r, a) = rel;
        out.features(r, 3 + extra + a) = cloud.positions(src, a);
      }
      for (std::size_t e = 0; e < extra; ++e)
        out.features(r, 3 + e) = cloud.features(src, 3 + e);
      if (cloud.labeled()) out.labels.push_back(cloud.labels[src]);
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<int> merge_block_predictions(
    const PointCloud& cloud, const std::vector<Block>& blocks,
    const std::vector<std::vector<int>>& block_predictions) {
  require(blocks.size() == block_predictions.size(),
          "one prediction vector per block required");
  const std::size_t n = cloud.size();
  std::vector<int> merged(n, -1);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    require(block_predictions[b].size() == blocks[b].source.size(),
            "prediction count must match block rows");
    for (std::size_t r = 0; r < blocks[b].source.size(); ++r) {
      const auto src = static_cast<std::size_t>(blocks[b].source[r]);
      require(src < n, "block source index outside the cloud");
      merged[src] = block_predictions[b][r];
    }
  }
  std::vector<Index> covered, missing;
  for (std::size_t i = 0; i < n; ++i)
    (merged[i] >= 0 ? covered : missing).push_back(static_cast<Index>(i));
  if (missing.empty()) return merged;
  require(!covered.empty(), "no point received a prediction");

  Matrix from(covered.size(), 3), to(missing.size(), 3);
  for (std::size_t k = 0; k < covered.size(); ++k)
    std::ranges::copy(cloud.positions.row(static_cast<std::size_t>(covered[k])),
                      from.row(k).begin());
  for (std::size_t k = 0; k < missing.size(); ++k)
    std::ranges::copy(cloud.positions.row(static_cast<std::size_t>(missing[k])),
                      to.row(k).begin());
  const IndexTable nearest = knn(from, to, 1, Exec::kSerial, KnnMethod::kGrid);
  for (std::size_t k = 0; k < missing.size(); ++k)
    merged[static_cast<std::size_t>(missing[k])] = merged[static_cast<std::size_t>(
        covered[static_cast<std::size_t>(nearest.row(k)[0])])];
  return merged;
}

}  // namespace cnl
