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

#include "cnl/geom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "cnl/parallel.hpp"
#include "cnl/rng.hpp"

namespace cnl {

void validate(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  require(n >= 1, "point cloud must hold at least one point");
  require(cloud.positions.cols() == 3, "positions must be N x 3");
  require(cloud.features.rows() == n, "feature row count must equal N");
  require(cloud.features.cols() >= 3, "features must include xyz");
  for (double v : cloud.positions.values())
    require(std::isfinite(v), "non-finite position entry");
  for (double v : cloud.features.values())
    require(std::isfinite(v), "non-finite feature entry");
  if (cloud.labeled()) {
    require(cloud.labels.size() == n, "label count must equal N");
    for (int label : cloud.labels)
      require(label >= 0 && label < cloud.num_classes,
              "label " + std::to_string(label) + " outside [0, " +
                  std::to_string(cloud.num_classes) + ")");
  }
}

PointCloud cloud_from_positions(const Matrix& positions) {
  PointCloud cloud;
  cloud.positions = positions;
  cloud.features = positions;
  return cloud;
}

PointCloud permute(const PointCloud& cloud, const std::vector<Index>& order) {
  PointCloud out;
  out.num_classes = cloud.num_classes;
  out.positions = Matrix(order.size(), cloud.positions.cols());
  out.features = Matrix(order.size(), cloud.features.cols());
  if (cloud.labeled()) out.labels.resize(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto src = static_cast<std::size_t>(order[k]);
    std::ranges::copy(cloud.positions.row(src), out.positions.row(k).begin());
    std::ranges::copy(cloud.features.row(src), out.features.row(k).begin());
    if (cloud.labeled()) out.labels[k] = cloud.labels[src];
  }
  return out;
}

std::vector<Index> canonical_order(const Matrix& positions) {
  std::vector<Index> order(positions.rows());
  std::iota(order.begin(), order.end(), Index{0});
  std::ranges::sort(order, [&](Index a, Index b) {
    const auto pa = positions.row(static_cast<std::size_t>(a));
    const auto pb = positions.row(static_cast<std::size_t>(b));
    for (int c = 0; c < 3; ++c) {
      if (pa[c] < pb[c]) return true;
      if (pb[c] < pa[c]) return false;
    }
    return a < b;
  });
  return order;
}

std::vector<Index> canonical_order(const PointCloud& cloud) {
  return canonical_order(cloud.positions);
}

CentroidSet farthest_point_sample(const Matrix& positions, std::size_t m,
                                  Exec exec) {
  const std::size_t n = positions.rows();
  if (m < 1 || m > n)
    throw std::invalid_argument("farthest_point_sample: need 1 <= M <= N (M=" +
                                std::to_string(m) +
                                ", N=" + std::to_string(n) + ")");
  CentroidSet out;
  out.indices.reserve(m);
  out.positions = Matrix(m, 3);

  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t current = 0;
  for (std::size_t step = 0; step < m; ++step) {
    out.indices.push_back(static_cast<Index>(current));
    std::ranges::copy(positions.row(current), out.positions.row(step).begin());
    if (step + 1 == m) break;

    const auto anchor = positions.row(current);
    for_each_index(exec, n, [&](std::size_t j) {
      const double d = squared_distance(positions.row(j), anchor);
      if (d < nearest[j]) nearest[j] = d;
    });
    // Strict comparison keeps the smallest index on ties; chosen points sit
    // at distance zero and are never re-selected while unchosen ones remain.
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (nearest[j] > nearest[best]) best = j;
    current = best;
  }
  return out;
}

namespace {

struct Candidate {
  double d2;
  Index index;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

void finish_row(std::vector<Candidate>& cands, std::size_t k,
                std::span<Index> out) {
  std::nth_element(cands.begin(), cands.begin() + static_cast<long>(k - 1),
                   cands.end());
  for (std::size_t t = 0; t < k; ++t) out[t] = cands[t].index;
  std::ranges::sort(out);
}

// Uniform grid over the bounding box of the reference points. Queries expand
// ring by ring until no unvisited cell can hold a closer point.
class PointGrid {
 public:
  PointGrid(const Matrix& points, std::size_t k) : points_(points) {
    const std::size_t n = points.rows();
    lo_.fill(std::numeric_limits<double>::infinity());
    std::array<double, 3> hi;
    hi.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], points(i, a));
        hi[a] = std::max(hi[a], points(i, a));
      }
    double extent = 0.0;
    for (int a = 0; a < 3; ++a) extent = std::max(extent, hi[a] - lo_[a]);
    const double cells_per_axis =
        std::max(1.0, std::cbrt(static_cast<double>(n) /
                                static_cast<double>(std::max<std::size_t>(k, 1))));
    cell_ = extent > 0.0 ? extent / cells_per_axis : 1.0;
    for (int a = 0; a < 3; ++a)
      dims_[a] = static_cast<long>(std::floor((hi[a] - lo_[a]) / cell_)) + 1;
    buckets_.resize(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]));
    for (std::size_t i = 0; i < n; ++i) {
      std::array<long, 3> c;
      for (int a = 0; a < 3; ++a) c[a] = cell_of(points(i, a), a);
      buckets_[flat(c)].push_back(static_cast<Index>(i));
    }
  }

  void query(std::span<const double> q, std::size_t k,
             std::span<Index> out) const {
    std::array<long, 3> center;
    for (int a = 0; a < 3; ++a) center[a] = cell_of(q[a], a);
    std::vector<Candidate> cands;
    for (long r = 0;; ++r) {
      visit_ring(center, r, [&](const std::vector<Index>& bucket) {
        for (Index idx : bucket)
          cands.push_back(
              {squared_distance(points_.row(static_cast<std::size_t>(idx)), q),
               idx});
      });
      bool covers_all = true;
      double bound = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        const long first = center[a] - r;
        const long last = center[a] + r;
        if (first > 0 || last < dims_[a] - 1) covers_all = false;
        if (first > 0)
          bound = std::min(bound, q[a] - (lo_[a] + first * cell_));
        if (last < dims_[a] - 1)
          bound = std::min(bound, (lo_[a] + (last + 1) * cell_) - q[a]);
      }
      if (covers_all) break;
      // Margin absorbs rounding in cell_of near cell faces.
      bound -= 1e-9 * cell_;
      if (cands.size() >= k && bound > 0.0) {
        std::nth_element(cands.begin(),
                         cands.begin() + static_cast<long>(k - 1), cands.end());
        if (cands[k - 1].d2 < bound * bound) break;
      }
    }
    finish_row(cands, k, out);
  }

 private:
  long cell_of(double v, int axis) const {
    const long c = static_cast<long>(std::floor((v - lo_[axis]) / cell_));
    return std::clamp(c, 0L, dims_[axis] - 1);
  }
  std::size_t flat(const std::array<long, 3>& c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  template <typename Fn>
  void visit_ring(const std::array<long, 3>& center, long r, Fn&& fn) const {
    for (long x = center[0] - r; x <= center[0] + r; ++x) {
      if (x < 0 || x >= dims_[0]) continue;
      for (long y = center[1] - r; y <= center[1] + r; ++y) {
        if (y < 0 || y >= dims_[1]) continue;
        for (long z = center[2] - r; z <= center[2] + r; ++z) {
          if (z < 0 || z >= dims_[2]) continue;
          const long ring = std::max({std::labs(x - center[0]),
                                      std::labs(y - center[1]),
                                      std::labs(z - center[2])});
          if (ring != r) continue;
          fn(buckets_[flat({x, y, z})]);
        }
      }
    }
  }

  const Matrix& points_;
  std::array<double, 3> lo_;
  std::array<long, 3> dims_;
  double cell_ = 1.0;
  std::vector<std::vector<Index>> buckets_;
};

}  // namespace

IndexTable knn(const Matrix& points, const Matrix& queries, std::size_t k,
               Exec exec, KnnMethod method) {
  const std::size_t n = points.rows();
  if (k < 1 || k > n)
    throw std::invalid_argument("knn: need 1 <= K <= N (K=" +
                                std::to_string(k) +
                                ", N=" + std::to_string(n) + ")");
  IndexTable table(queries.rows(), k);
  if (method == KnnMethod::kGrid) {
    const PointGrid grid(points, k);
    for_each_index(exec, queries.rows(), [&](std::size_t i) {
      grid.query(queries.row(i), k, table.row(i));
    });
    return table;
  }
  for_each_index(exec, queries.rows(), [&](std::size_t i) {
    std::vector<Candidate> cands(n);
    const auto q = queries.row(i);
    for (std::size_t j = 0; j < n; ++j)
      cands[j] = {squared_distance(points.row(j), q), static_cast<Index>(j)};
    finish_row(cands, k, table.row(i));
  });
  return table;
}

SuperpointPartition voxel_partition(const Matrix& positions, double cell_size,
                                    std::size_t cap) {
  if (!(cell_size > 0.0))
    throw std::invalid_argument("voxel_partition: cell_size must be positive");
  require(cap >= 1, "voxel_partition: cap must be at least 1");
  const std::size_t n = positions.rows();

  using Cell = std::array<std::int64_t, 3>;
  std::map<Cell, std::vector<Index>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    Cell c;
    for (int a = 0; a < 3; ++a)
      c[a] = static_cast<std::int64_t>(std::floor(positions(i, a) / cell_size));
    cells[c].push_back(static_cast<Index>(i));
  }

  std::vector<const Cell*> by_population;
  for (const auto& [cell, pts] : cells) by_population.push_back(&cell);
  std::ranges::stable_sort(by_population, [&](const Cell* a, const Cell* b) {
    return cells.at(*a).size() > cells.at(*b).size();
  });
  std::map<Cell, bool> kept;
  for (std::size_t r = 0; r < by_population.size(); ++r)
    kept[*by_population[r]] = r < cap;

  SuperpointPartition out;
  out.cell_size = cell_size;
  out.assignment.assign(n, -1);
  std::vector<std::array<double, 3>> means;
  for (const auto& [cell, pts] : cells) {
    if (!kept.at(cell)) continue;
    const Index id = out.count++;
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    for (Index p : pts) {
      out.assignment[static_cast<std::size_t>(p)] = id;
      for (int a = 0; a < 3; ++a) sum[a] += positions(static_cast<std::size_t>(p), a);
    }
    for (int a = 0; a < 3; ++a) sum[a] /= static_cast<double>(pts.size());
    means.push_back(sum);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (out.assignment[i] >= 0) continue;
    const auto p = positions.row(i);
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < means.size(); ++s) {
      const double d = squared_distance(p, means[s]);
      if (d < best_d) {
        best_d = d;
        best = static_cast<Index>(s);
      }
    }
    out.assignment[i] = best;
  }
  out.members.resize(static_cast<std::size_t>(out.count));
  for (std::size_t i = 0; i < n; ++i)
    out.members[static_cast<std::size_t>(out.assignment[i])].push_back(
        static_cast<Index>(i));
  return out;
}

std::vector<Index> centroid_superpoints(const SuperpointPartition& partition,
                                        const std::vector<Index>& point_ids) {
  std::vector<Index> out(point_ids.size());
  for (std::size_t i = 0; i < point_ids.size(); ++i) {
    const Index p = point_ids[i];
    if (p < 0 || static_cast<std::size_t>(p) >= partition.assignment.size())
      throw DegenerateInput("centroid " + std::to_string(i) +
                            " has no superpoint");
    out[i] = partition.assignment[static_cast<std::size_t>(p)];
  }
  return out;
}

std::vector<Index> centroid_superpoints(const SuperpointPartition& partition,
                                        const CentroidSet& centroids) {
  return centroid_superpoints(partition, centroids.indices);
}

IndexTable sample_superpoint_centroids(
    const std::vector<Index>& centroid_superpoint, std::size_t k_sp,
    std::uint64_t seed) {
  require(k_sp >= 1, "sample_superpoint_centroids: K_sp must be at least 1");
  std::map<Index, std::vector<Index>> groups;
  for (std::size_t i = 0; i < centroid_superpoint.size(); ++i)
    groups[centroid_superpoint[i]].push_back(static_cast<Index>(i));

  IndexTable out(centroid_superpoint.size(), k_sp);
  for (std::size_t i = 0; i < centroid_superpoint.size(); ++i) {
    auto it = groups.find(centroid_superpoint[i]);
    if (it == groups.end() || it->second.empty())
      throw DegenerateInput("superpoint holds no sampled centroids");
    const auto& group = it->second;
    Rng rng(Rng::mix(seed, i));
    auto row = out.row(i);
    if (group.size() >= k_sp) {
      std::vector<Index> pool = group;
      for (std::size_t t = 0; t < k_sp; ++t) {
        const auto pick = t + rng.below(pool.size() - t);
        std::swap(pool[t], pool[pick]);
        row[t] = pool[t];
      }
    } else {
      for (std::size_t t = 0; t < k_sp; ++t)
        row[t] = group[rng.below(group.size())];
    }
  }
  return out;
}

IndexTable sample_superpoint_centroids(const SuperpointPartition& partition,
                                       const CentroidSet& centroids,
                                       std::size_t k_sp, std::uint64_t seed) {
  return sample_superpoint_centroids(centroid_superpoints(partition, centroids),
                                     k_sp, seed);
}

}  // namespace cnl
