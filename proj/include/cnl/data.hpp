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

#ifndef CNL_DATA_HPP_
#define CNL_DATA_HPP_

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cnl/geom.hpp"
#include "cnl/types.hpp"

namespace cnl {

// ---------------------------------------------------------------------------
// Synthetic scenes.

enum class PrimitiveKind { kPlane, kBox, kSphere };

/// One labeled surface. A plane is horizontal at center.z with half extents
/// (half_size.x, half_size.y); a box is axis-aligned with half extents
/// half_size; a sphere uses `radius`.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kPlane;
  int class_id = 0;
  std::array<double, 3> center{0.0, 0.0, 0.0};
  std::array<double, 3> half_size{0.5, 0.5, 0.5};
  double radius = 0.5;
  std::array<double, 3> color{0.5, 0.5, 0.5};

  double area() const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t n_points = 4096;
  double extent = 4.0;  // meters; the floor spans [0, extent]^2
  int num_classes = 4;
  std::vector<Primitive> primitives;
  double noise_sigma = 0.005;

  void validate() const;
};

/// Floor (class 0) plus one box or sphere for each remaining class, placed
/// on the floor at seeded positions.
SceneSpec standard_scene(std::uint64_t seed, std::size_t n_points,
                         double extent, int num_classes);

/// Points drawn uniformly over the union of primitive surfaces (area
/// weighted), jittered by isotropic Gaussian noise, labeled by primitive.
/// Features are xyz followed by the primitive's color triple.
PointCloud generate_scene(const SceneSpec& spec);

// ---------------------------------------------------------------------------
// Text cloud files.
//
//   N C num_classes
//   x y z f1 ... fC label      (N lines)
//
// Unlabeled clouds store label -1 on every line. Numbers use the shortest
// form that reads back to the same double.

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_cloud(const PointCloud& cloud, const std::string& path);
PointCloud load_cloud(const std::string& path);

// ---------------------------------------------------------------------------
// Blocks.

inline constexpr std::size_t kMinBlockPoints = 10;

struct Block {
  PointCloud cloud;            // relative xyz, other features, original xyz
  std::vector<Index> source;   // row -> index into the split cloud
  std::array<std::int64_t, 2> cell{0, 0};
};

/// Splits the xy-plane into block_size squares anchored at the cloud's
/// minimum corner. Cells with fewer than kMinBlockPoints points are dropped;
/// every other cell yields exactly n_sample rows: a subset without
/// replacement when the cell is large enough, otherwise every point once
/// plus uniform extras. Rows are ordered by source index.
std::vector<Block> block_split(const PointCloud& cloud, double block_size,
                               std::size_t n_sample, std::uint64_t seed);

/// Per-point predictions from per-block predictions. Blocks are visited in
/// order and rows in order, so the last occurrence of a point wins. Points
/// covered by no block take the prediction of the nearest covered point.
std::vector<int> merge_block_predictions(
    const PointCloud& cloud, const std::vector<Block>& blocks,
    const std::vector<std::vector<int>>& block_predictions);

// ---------------------------------------------------------------------------
// Metrics.

struct SegmentationMetrics {
  double oa = 0.0;
  double macc = 0.0;
  double miou = 0.0;
  std::vector<double> per_class_iou;  // NaN for classes absent everywhere
};

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Rows index ground truth, columns index predictions.
  void accumulate(const std::vector<int>& predictions,
                  const std::vector<int>& labels);
  void merge(const ConfusionMatrix& other);

  int num_classes() const noexcept { return classes_; }
  std::uint64_t count(int truth, int predicted) const;
  std::uint64_t total() const noexcept { return total_; }
  SegmentationMetrics finalize() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// {"oa": ..., "macc": ..., "miou": ..., "per_class_iou": [...]} on one line.
std::string metrics_json(const SegmentationMetrics& metrics);

}  // namespace cnl

#endif  // CNL_DATA_HPP_
