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

#ifndef CNL_GEOM_HPP_
#define CNL_GEOM_HPP_

#include <cstdint>
#include <vector>

#include "cnl/types.hpp"

namespace cnl {

/// Positions (N x 3, meters), per-point features (N x C; the first three
/// columns mirror the positions) and optional labels in [0, num_classes).
struct PointCloud {
  Matrix positions;
  Matrix features;
  std::vector<int> labels;  // empty when unlabeled
  int num_classes = 0;

  std::size_t size() const noexcept { return positions.rows(); }
  bool labeled() const noexcept { return !labels.empty(); }
};

// Throws std::invalid_argument when any PointCloud invariant is violated.
void validate(const PointCloud& cloud);

// Builds a cloud whose features are exactly the positions.
PointCloud cloud_from_positions(const Matrix& positions);

// Row k of the result is row order[k] of the input.
PointCloud permute(const PointCloud& cloud, const std::vector<Index>& order);

struct CentroidSet {
  std::vector<Index> indices;  // into the parent cloud
  Matrix positions;            // M x 3 copies of the parent rows

  std::size_t size() const noexcept { return indices.size(); }
};

/// Total assignment of points to voxel-block superpoints.
struct SuperpointPartition {
  std::vector<Index> assignment;          // length N, ids in [0, count)
  std::vector<std::vector<Index>> members;  // ascending point indices
  double cell_size = 0.0;
  Index count = 0;
};

// Lexicographic (x, y, z, original index) ordering of the points.
std::vector<Index> canonical_order(const PointCloud& cloud);
std::vector<Index> canonical_order(const Matrix& positions);

/// Greedy farthest point sampling. The first pick is row 0; every later pick
/// maximizes the squared distance to the nearest chosen point, ties going to
/// the smallest index.
CentroidSet farthest_point_sample(const Matrix& positions, std::size_t m,
                                  Exec exec = Exec::kSerial);

enum class KnnMethod { kExhaustive, kGrid };

/// K nearest points of `points` to each query row, by Euclidean distance on
/// xyz. Ties go to the smaller index; each row is returned sorted ascending
/// by index. Both methods return identical tables.
IndexTable knn(const Matrix& points, const Matrix& queries, std::size_t k,
               Exec exec = Exec::kSerial,
               KnnMethod method = KnnMethod::kExhaustive);

SuperpointPartition voxel_partition(const Matrix& positions, double cell_size,
                                    std::size_t cap);

// Superpoint id of every centroid, looked up through its parent index.
std::vector<Index> centroid_superpoints(const SuperpointPartition& partition,
                                        const CentroidSet& centroids);
std::vector<Index> centroid_superpoints(const SuperpointPartition& partition,
                                        const std::vector<Index>& point_ids);

/// Row i holds k_sp centroid positions (indices into [0, M)) drawn from the
/// centroids that share centroid i's superpoint: without replacement when
/// there are at least k_sp of them, with replacement otherwise. Each row uses
/// its own stream derived from (seed, i).
IndexTable sample_superpoint_centroids(const SuperpointPartition& partition,
                                       const CentroidSet& centroids,
                                       std::size_t k_sp, std::uint64_t seed);
IndexTable sample_superpoint_centroids(
    const std::vector<Index>& centroid_superpoint, std::size_t k_sp,
    std::uint64_t seed);

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace cnl

#endif  // CNL_GEOM_HPP_
