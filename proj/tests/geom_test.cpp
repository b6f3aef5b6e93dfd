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
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "cnl/geom.hpp"
#include "test_util.hpp"

namespace cnl {
namespace {

using testing::random_matrix;

Matrix points_1d(std::initializer_list<double> xs) {
  Matrix m(xs.size(), 3);
  std::size_t i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

double dist2(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return s;
}

// --- canonical_order -------------------------------------------------------

TEST(CanonicalOrder, SortsLexicographically) {
  const Matrix pts(2, 3, {1, 0, 0, 0, 0, 0});
  EXPECT_EQ(canonical_order(pts), (std::vector<Index>{1, 0}));
}

TEST(CanonicalOrder, SortedCloudGivesIdentity) {
  const Matrix pts(3, 3, {0, 0, 0, 0, 0, 1, 0, 1, 0});
  EXPECT_EQ(canonical_order(pts), (std::vector<Index>{0, 1, 2}));
}

TEST(CanonicalOrder, MatchesComparisonSortOracle) {
  Matrix pts = random_matrix(50, 3, 11);
  // A few exact duplicates exercise the index tie-break.
  for (int c = 0; c < 3; ++c) pts(7, c) = pts(3, c);
  std::vector<std::tuple<double, double, double, Index>> keyed;
  for (std::size_t i = 0; i < 50; ++i)
    keyed.emplace_back(pts(i, 0), pts(i, 1), pts(i, 2), static_cast<Index>(i));
  std::sort(keyed.begin(), keyed.end());
  std::vector<Index> expected;
  for (const auto& k : keyed) expected.push_back(std::get<3>(k));
  EXPECT_EQ(canonical_order(pts), expected);
}

TEST(CanonicalOrder, Idempotent) {
  const Matrix pts = random_matrix(40, 3, 12);
  const auto order = canonical_order(pts);
  const PointCloud sorted = permute(cloud_from_positions(pts), order);
  std::vector<Index> identity(40);
  std::iota(identity.begin(), identity.end(), Index{0});
  EXPECT_EQ(canonical_order(sorted), identity);
}

// --- farthest_point_sample -------------------------------------------------

// Recomputes every candidate's distance to the chosen set from scratch.
std::vector<Index> fps_oracle(const Matrix& pts, std::size_t m) {
  std::vector<Index> chosen{0};
  while (chosen.size() < m) {
    double best_d = -1.0;
    Index best = -1;
    for (std::size_t j = 0; j < pts.rows(); ++j) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Index c : chosen)
        nearest = std::min(nearest, dist2(pts, j, pts, static_cast<std::size_t>(c)));
      if (nearest > best_d) {
        best_d = nearest;
        best = static_cast<Index>(j);
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

double coverage_radius(const Matrix& pts, const std::vector<Index>& chosen) {
  double worst = 0.0;
  for (std::size_t j = 0; j < pts.rows(); ++j) {
    double nearest = std::numeric_limits<double>::infinity();
    for (Index c : chosen)
      nearest = std::min(nearest, dist2(pts, j, pts, static_cast<std::size_t>(c)));
    worst = std::max(worst, nearest);
  }
  return worst;
}

TEST(FarthestPointSample, EndpointIsFarthest) {
  const auto out = farthest_point_sample(points_1d({0, 1, 10}), 2);
  EXPECT_EQ(out.indices, (std::vector<Index>{0, 2}));
  EXPECT_EQ(out.positions(1, 0), 10.0);
}

TEST(FarthestPointSample, FullSampleStartsAtZero) {
  const auto out = farthest_point_sample(points_1d({0, 1, 10, 4}), 4);
  EXPECT_EQ(out.indices, (std::vector<Index>{0, 2, 3, 1}));
}

TEST(FarthestPointSample, MatchesGreedyOracle) {
  const Matrix pts = random_matrix(64, 3, 21);
  EXPECT_EQ(farthest_point_sample(pts, 8).indices, fps_oracle(pts, 8));
}

TEST(FarthestPointSample, RejectsBadCounts) {
  const Matrix pts = random_matrix(5, 3, 1);
  EXPECT_THROW(farthest_point_sample(pts, 6), std::invalid_argument);
  EXPECT_THROW(farthest_point_sample(pts, 0), std::invalid_argument);
}

TEST(FarthestPointSample, CoverageRadiusNonIncreasing) {
  const Matrix pts = random_matrix(80, 3, 22);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m <= 20; ++m) {
    const double r = coverage_radius(pts, farthest_point_sample(pts, m).indices);
    EXPECT_LE(r, previous) << "M=" << m;
    previous = r;
  }
}

TEST(FarthestPointSample, InvariantToInputPermutationAfterCanonicalOrder) {
  const Matrix pts = random_matrix(60, 3, 23);
  std::vector<Index> shuffle(60);
  std::iota(shuffle.begin(), shuffle.end(), Index{0});
  Rng rng(5);
  for (std::size_t i = shuffle.size() - 1; i > 0; --i)
    std::swap(shuffle[i], shuffle[rng.below(i + 1)]);
  const PointCloud a = cloud_from_positions(pts);
  const PointCloud b = permute(a, shuffle);

  auto original_ids = [](const PointCloud& cloud,
                         const std::vector<Index>& to_input) {
    const auto order = canonical_order(cloud);
    const PointCloud sorted = permute(cloud, order);
    std::vector<Index> ids;
    for (Index k : farthest_point_sample(sorted.positions, 12).indices)
      ids.push_back(to_input[static_cast<std::size_t>(
          order[static_cast<std::size_t>(k)])]);
    return ids;
  };
  std::vector<Index> identity(60);
  std::iota(identity.begin(), identity.end(), Index{0});
  EXPECT_EQ(original_ids(a, identity), original_ids(b, shuffle));
}

TEST(FarthestPointSample, ParallelMatchesSerial) {
  const Matrix pts = random_matrix(500, 3, 24);
  EXPECT_EQ(farthest_point_sample(pts, 64, Exec::kSerial).indices,
            farthest_point_sample(pts, 64, Exec::kParallel).indices);
}

// --- knn -------------------------------------------------------------------

IndexTable knn_oracle(const Matrix& pts, const Matrix& queries, std::size_t k) {
  IndexTable out(queries.rows(), k);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    std::vector<std::pair<double, Index>> all;
    for (std::size_t j = 0; j < pts.rows(); ++j)
      all.emplace_back(dist2(queries, i, pts, j), static_cast<Index>(j));
    std::sort(all.begin(), all.end());
    std::vector<Index> row;
    for (std::size_t t = 0; t < k; ++t) row.push_back(all[t].second);
    std::sort(row.begin(), row.end());
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

TEST(Knn, PicksClosestPoints) {
  const Matrix pts = points_1d({3, 1, 2});
  const Matrix origin(1, 3);
  const auto table = knn(pts, origin, 2);
  EXPECT_EQ(std::vector<Index>(table.row(0).begin(), table.row(0).end()),
            (std::vector<Index>{1, 2}));
}

TEST(Knn, KEqualsNReturnsAll) {
  const Matrix pts = random_matrix(9, 3, 31);
  const auto table = knn(pts, random_matrix(3, 3, 32), 9);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 9; ++t)
      EXPECT_EQ(table.row(i)[t], static_cast<Index>(t));
}

TEST(Knn, MatchesExhaustiveScanOracle) {
  const Matrix pts = random_matrix(200, 3, 33);
  const Matrix queries = random_matrix(16, 3, 34);
  const auto expected = knn_oracle(pts, queries, 12);
  EXPECT_EQ(knn(pts, queries, 12), expected);
  EXPECT_EQ(knn(pts, queries, 12, Exec::kParallel), expected);
  EXPECT_EQ(knn(pts, queries, 12, Exec::kSerial, KnnMethod::kGrid), expected);
}

TEST(Knn, GridMatchesExhaustiveOnLatticeWithTies) {
  // Integer lattice: many equal distances, so tie-breaking decides.
  Matrix pts(125, 3);
  for (std::size_t i = 0; i < 125; ++i) {
    pts(i, 0) = static_cast<double>(i % 5);
    pts(i, 1) = static_cast<double>((i / 5) % 5);
    pts(i, 2) = static_cast<double>(i / 25);
  }
  Matrix queries = random_matrix(20, 3, 35, -1.0, 6.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (int c = 0; c < 3; ++c) queries(i, c) = pts(i * 17, c);
  for (std::size_t k : {1u, 6u, 7u, 27u, 125u}) {
    const auto expected = knn_oracle(pts, queries, k);
    EXPECT_EQ(knn(pts, queries, k, Exec::kSerial, KnnMethod::kGrid), expected)
        << "K=" << k;
    EXPECT_EQ(knn(pts, queries, k), expected) << "K=" << k;
  }
}

TEST(Knn, SelfIncludedWhenQueryInCloud) {
  const Matrix pts = random_matrix(50, 3, 36);
  const auto table = knn(pts, pts, 4);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto row = table.row(i);
    EXPECT_TRUE(std::find(row.begin(), row.end(), static_cast<Index>(i)) !=
                row.end());
  }
}

TEST(Knn, RowsBoundedByNextSmallestDistance) {
  const Matrix pts = random_matrix(120, 3, 37);
  const Matrix queries = random_matrix(10, 3, 38);
  const std::size_t k = 7;
  const auto table = knn(pts, queries, k, Exec::kParallel, KnnMethod::kGrid);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    std::vector<double> all;
    for (std::size_t j = 0; j < pts.rows(); ++j) all.push_back(dist2(queries, i, pts, j));
    std::sort(all.begin(), all.end());
    std::set<Index> distinct(table.row(i).begin(), table.row(i).end());
    EXPECT_EQ(distinct.size(), k);
    for (Index j : table.row(i))
      EXPECT_LE(dist2(queries, i, pts, static_cast<std::size_t>(j)), all[k]);
  }
}

TEST(Knn, RejectsKLargerThanN) {
  const Matrix pts = random_matrix(4, 3, 39);
  EXPECT_THROW(knn(pts, pts, 5), std::invalid_argument);
}

// --- voxel_partition -------------------------------------------------------

void expect_total_and_dense(const SuperpointPartition& p, std::size_t n) {
  ASSERT_EQ(p.assignment.size(), n);
  ASSERT_EQ(p.members.size(), static_cast<std::size_t>(p.count));
  std::vector<int> seen(n, 0);
  for (Index s = 0; s < p.count; ++s) {
    EXPECT_FALSE(p.members[static_cast<std::size_t>(s)].empty());
    for (Index pt : p.members[static_cast<std::size_t>(s)]) {
      ++seen[static_cast<std::size_t>(pt)];
      EXPECT_EQ(p.assignment[static_cast<std::size_t>(pt)], s);
    }
  }
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(VoxelPartition, SingleCell) {
  const Matrix pts = random_matrix(30, 3, 41, 0.1, 0.9);
  const auto p = voxel_partition(pts, 1.0, 32);
  EXPECT_EQ(p.count, 1);
  expect_total_and_dense(p, 30);
}

TEST(VoxelPartition, TwoSeparatedClusters) {
  Matrix pts = random_matrix(40, 3, 42, 0.1, 0.4);
  for (std::size_t i = 20; i < 40; ++i) pts(i, 0) += 5.0;
  const auto p = voxel_partition(pts, 1.0, 32);
  ASSERT_EQ(p.count, 2);
  for (std::size_t i = 0; i < 40; ++i)
    EXPECT_EQ(p.assignment[i], i < 20 ? 0 : 1);
}

TEST(VoxelPartition, CapReassignsToNearestMean) {
  // 8 x 5 grid of unit cells, one layer, so 40 occupied cells.
  Rng rng(43);
  Matrix pts(800, 3);
  for (std::size_t i = 0; i < 800; ++i) {
    pts(i, 0) = rng.uniform(0.0, 8.0);
    pts(i, 1) = rng.uniform(0.0, 5.0);
    pts(i, 2) = rng.uniform(0.0, 0.9);
  }
  const auto p = voxel_partition(pts, 1.0, 32);
  ASSERT_EQ(p.count, 32);
  expect_total_and_dense(p, 800);

  // Oracle: rank cells by population, keep 32, assign the rest by nearest mean.
  using Cell = std::array<long, 3>;
  std::map<Cell, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < 800; ++i)
    cells[{static_cast<long>(std::floor(pts(i, 0))),
           static_cast<long>(std::floor(pts(i, 1))),
           static_cast<long>(std::floor(pts(i, 2)))}]
        .push_back(i);
  ASSERT_EQ(cells.size(), 40u);
  std::vector<std::pair<long, Cell>> ranked;
  for (const auto& [cell, members] : cells)
    ranked.emplace_back(-static_cast<long>(members.size()), cell);
  std::sort(ranked.begin(), ranked.end());
  std::set<Cell> kept;
  for (std::size_t r = 0; r < 32; ++r) kept.insert(ranked[r].second);
  std::vector<std::array<double, 3>> means;
  std::vector<std::size_t> owner(800, SIZE_MAX);
  for (const auto& [cell, members] : cells) {
    if (!kept.count(cell)) continue;
    std::array<double, 3> mean{0, 0, 0};
    for (std::size_t i : members)
      for (int c = 0; c < 3; ++c) mean[c] += pts(i, c);
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<double>(members.size());
    for (std::size_t i : members) owner[i] = means.size();
    means.push_back(mean);
  }
  for (std::size_t i = 0; i < 800; ++i) {
    if (owner[i] != SIZE_MAX) {
      EXPECT_EQ(p.assignment[i], static_cast<Index>(owner[i]));
      continue;
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < means.size(); ++s) {
      double d = 0.0;
      for (int c = 0; c < 3; ++c) d += (pts(i, c) - means[s][c]) * (pts(i, c) - means[s][c]);
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    EXPECT_EQ(p.assignment[i], static_cast<Index>(best)) << "point " << i;
  }
}

TEST(VoxelPartition, Deterministic) {
  const Matrix pts = random_matrix(300, 3, 44, -3.0, 3.0);
  const auto a = voxel_partition(pts, 0.7, 10);
  const auto b = voxel_partition(pts, 0.7, 10);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.members, b.members);
  EXPECT_LE(a.count, 10);
}

TEST(VoxelPartition, RejectsNonPositiveCell) {
  const Matrix pts = random_matrix(3, 3, 45);
  EXPECT_THROW(voxel_partition(pts, 0.0, 4), std::invalid_argument);
  EXPECT_THROW(voxel_partition(pts, -1.0, 4), std::invalid_argument);
}

// --- sample_superpoint_centroids --------------------------------------------

TEST(SuperpointSampling, ExactlyKspIsPermutation) {
  const std::vector<Index> sp(20, 0);
  const auto table = sample_superpoint_centroids(sp, 20, 3);
  for (std::size_t i = 0; i < 20; ++i) {
    std::vector<Index> row(table.row(i).begin(), table.row(i).end());
    std::sort(row.begin(), row.end());
    for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(row[t], static_cast<Index>(t));
  }
}

TEST(SuperpointSampling, SingletonRepeats) {
  const std::vector<Index> sp{0, 1, 1};
  const auto table = sample_superpoint_centroids(sp, 20, 3);
  for (Index v : table.row(0)) EXPECT_EQ(v, 0);
}

TEST(SuperpointSampling, MembershipAndNoDuplicates) {
  std::vector<Index> sp;
  for (int s = 0; s < 3; ++s)
    for (int c = 0; c < std::array{30, 25, 5}[s]; ++c) sp.push_back(s);
  Rng rng(46);
  for (std::size_t i = sp.size() - 1; i > 0; --i)
    std::swap(sp[i], sp[rng.below(i + 1)]);
  const auto table = sample_superpoint_centroids(sp, 20, 99);
  for (std::size_t i = 0; i < sp.size(); ++i) {
    std::set<Index> distinct;
    for (Index j : table.row(i)) {
      EXPECT_EQ(sp[static_cast<std::size_t>(j)], sp[i]);
      distinct.insert(j);
    }
    if (sp[i] != 2) {
      EXPECT_EQ(distinct.size(), 20u);
    }
  }
  EXPECT_EQ(sample_superpoint_centroids(sp, 20, 99), table);
  EXPECT_NE(sample_superpoint_centroids(sp, 20, 100), table);
}

TEST(SuperpointSampling, ViaPartition) {
  Matrix pts = random_matrix(40, 3, 47, 0.1, 0.4);
  for (std::size_t i = 20; i < 40; ++i) pts(i, 0) += 5.0;
  const auto p = voxel_partition(pts, 1.0, 32);
  const auto centroids = farthest_point_sample(pts, 10);
  const auto table = sample_superpoint_centroids(p, centroids, 4, 1);
  const auto sp = centroid_superpoints(p, centroids);
  for (std::size_t i = 0; i < 10; ++i)
    for (Index j : table.row(i)) EXPECT_EQ(sp[static_cast<std::size_t>(j)], sp[i]);
}

TEST(SuperpointSampling, UnknownCentroidIsDegenerate) {
  SuperpointPartition p;
  p.assignment = {0, 0};
  p.count = 1;
  EXPECT_THROW(centroid_superpoints(p, std::vector<Index>{5}), DegenerateInput);
}

}  // namespace
}  // namespace cnl
