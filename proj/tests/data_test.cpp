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
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cnl/data.hpp"
#include "test_util.hpp"

namespace cnl {
namespace {

using testing::random_cloud;

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("cnl_data_test_" + std::to_string(::getpid()) + "_" + name);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// --- scenes ------------------------------------------------------------------

Primitive plane(int cls, double cx, double hx, double hy) {
  Primitive p;
  p.kind = PrimitiveKind::kPlane;
  p.class_id = cls;
  p.center = {cx, 0.0, 0.0};
  p.half_size = {hx, hy, 0.0};
  return p;
}

TEST(Scene, SameSpecSameCloud) {
  const SceneSpec spec = standard_scene(5, 3000, 4.0, 5);
  const PointCloud a = generate_scene(spec);
  const PointCloud b = generate_scene(spec);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(generate_scene(standard_scene(6, 3000, 4.0, 5)).positions,
            a.positions);
}

TEST(Scene, SinglePlaneLabelsEverything) {
  SceneSpec spec;
  spec.num_classes = 3;
  spec.n_points = 500;
  spec.primitives = {plane(2, 0.0, 1.0, 1.0)};
  const PointCloud cloud = generate_scene(spec);
  for (int l : cloud.labels) EXPECT_EQ(l, 2);
}

TEST(Scene, LabelFrequencyFollowsArea) {
  SceneSpec spec;
  spec.num_classes = 2;
  spec.n_points = 40000;
  spec.noise_sigma = 0.0;
  spec.primitives = {plane(0, 0.0, 1.5, 0.5), plane(1, 10.0, 0.5, 0.5)};
  ASSERT_DOUBLE_EQ(spec.primitives[0].area() / spec.primitives[1].area(), 3.0);
  const PointCloud cloud = generate_scene(spec);
  const auto ones = std::ranges::count(cloud.labels, 1);
  const double ratio = static_cast<double>(40000 - ones) /
                       static_cast<double>(ones);
  EXPECT_NEAR(ratio, 3.0, 0.15);
}

TEST(Scene, NoiselessPointsLieOnSurfaces) {
  SceneSpec spec;
  spec.num_classes = 3;
  spec.n_points = 3000;
  spec.noise_sigma = 0.0;
  Primitive box;
  box.kind = PrimitiveKind::kBox;
  box.class_id = 1;
  box.center = {1.0, 2.0, 3.0};
  box.half_size = {0.5, 0.25, 1.0};
  Primitive ball;
  ball.kind = PrimitiveKind::kSphere;
  ball.class_id = 2;
  ball.center = {-2.0, 0.0, 1.0};
  ball.radius = 0.75;
  spec.primitives = {box, ball};
  const PointCloud cloud = generate_scene(spec);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto p = cloud.positions.row(i);
    if (cloud.labels[i] == 1) {
      int on_face = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double off = std::abs(p[a] - box.center[a]);
        EXPECT_LE(off, box.half_size[a] + 1e-12);
        if (std::abs(off - box.half_size[a]) < 1e-12) ++on_face;
      }
      EXPECT_GE(on_face, 1);
    } else {
      double r2 = 0.0;
      for (std::size_t a = 0; a < 3; ++a)
        r2 += (p[a] - ball.center[a]) * (p[a] - ball.center[a]);
      EXPECT_NEAR(std::sqrt(r2), 0.75, 1e-12);
    }
    for (std::size_t a = 0; a < 3; ++a)
      EXPECT_EQ(cloud.features(i, a), p[a]);
  }
}

TEST(Scene, ColorsFollowPrimitive) {
  const SceneSpec spec = standard_scene(9, 2000, 4.0, 4);
  const PointCloud cloud = generate_scene(spec);
  EXPECT_EQ(cloud.features.cols(), 6u);
  std::map<int, std::array<double, 3>> colors;
  for (const Primitive& p : spec.primitives) colors[p.class_id] = p.color;
  std::set<int> seen;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    seen.insert(cloud.labels[i]);
    for (std::size_t a = 0; a < 3; ++a)
      EXPECT_EQ(cloud.features(i, 3 + a), colors[cloud.labels[i]][a]);
  }
  EXPECT_EQ(seen.size(), 4u);
}

TEST(Scene, InvalidSpecsThrow) {
  SceneSpec spec = standard_scene(1, 10, 2.0, 3);
  spec.num_classes = 1;
  EXPECT_THROW(generate_scene(spec), std::invalid_argument);
  spec = standard_scene(1, 10, 2.0, 3);
  spec.n_points = 0;
  EXPECT_THROW(generate_scene(spec), std::invalid_argument);
  spec = standard_scene(1, 10, 2.0, 3);
  spec.extent = 0.0;
  EXPECT_THROW(generate_scene(spec), std::invalid_argument);
}

// --- cloud files ---------------------------------------------------------------

void expect_same_cloud(const PointCloud& a, const PointCloud& b) {
  EXPECT_EQ(a.num_classes, b.num_classes);
  EXPECT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.positions.size(), b.positions.size());
  ASSERT_EQ(a.features.size(), b.features.size());
  for (std::size_t k = 0; k < a.positions.size(); ++k)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.positions.values()[k]),
              std::bit_cast<std::uint64_t>(b.positions.values()[k]));
  for (std::size_t k = 0; k < a.features.size(); ++k)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.features.values()[k]),
              std::bit_cast<std::uint64_t>(b.features.values()[k]));
}

TEST(CloudFile, SinglePointRoundTrip) {
  PointCloud c;
  c.positions = Matrix{1, 3, {0.1, -2.5, 3e-7}};
  c.features = Matrix{1, 4, {0.1, -2.5, 3e-7, 0.3333333333333333}};
  c.labels = {1};
  c.num_classes = 2;
  const auto path = temp_file("single.txt");
  save_cloud(c, path);
  expect_same_cloud(c, load_cloud(path));
  std::filesystem::remove(path);
}

TEST(CloudFile, RandomCloudRoundTripIsBitExact) {
  PointCloud c = random_cloud(100, 4, 7, 3, 1e3);
  c.features(0, 3) = -0.0;
  c.features(1, 3) = 5e-324;
  c.features(2, 3) = 1.7976931348623157e308;
  c.features(3, 3) = 0.1 + 0.2;
  const auto path = temp_file("random.txt");
  save_cloud(c, path);
  const PointCloud back = load_cloud(path);
  expect_same_cloud(c, back);
  EXPECT_TRUE(std::signbit(back.features(0, 3)));
  std::filesystem::remove(path);
}

TEST(CloudFile, UnlabeledRoundTrip) {
  PointCloud c = random_cloud(5, 0, 2, 4);
  c.labels.clear();
  c.num_classes = 0;
  const auto path = temp_file("unlabeled.txt");
  save_cloud(c, path);
  const PointCloud back = load_cloud(path);
  EXPECT_FALSE(back.labeled());
  expect_same_cloud(c, back);
  std::filesystem::remove(path);
}

std::size_t parse_error_line(const std::string& text) {
  const auto path = temp_file("bad.txt");
  write_text(path, text);
  try {
    load_cloud(path);
  } catch (const ParseError& e) {
    std::filesystem::remove(path);
    return e.line();
  }
  std::filesystem::remove(path);
  return 0;
}

TEST(CloudFile, ParseErrorsNameTheLine) {
  EXPECT_EQ(parse_error_line("2 3 4\n0 0 0 0 0 0 1\n"), 3u);
  EXPECT_EQ(parse_error_line("2 3 4\n0 0 0 0 0 0 1\n0 0 0 0 x 0 1\n"), 3u);
  EXPECT_EQ(parse_error_line("1 3 4\n0 0 0 0 0 0 4\n"), 2u);
  EXPECT_EQ(parse_error_line("1 3 4\n0 0 0 0 0 1\n"), 2u);
  EXPECT_EQ(parse_error_line("1 3 4\n0 0 0 0 0 0 1\n1 1 1 1 1 1 1\n"), 3u);
  EXPECT_EQ(parse_error_line("1 3\n"), 1u);
  EXPECT_EQ(parse_error_line("2 3 4\n0 0 0 0 0 0 1\n0 0 0 0 0 0 -1\n"), 3u);
  EXPECT_EQ(parse_error_line("1 3 4\n0 0 0 0 0 nan 1\n"), 2u);
  // Trailing blank lines are fine.
  EXPECT_EQ(parse_error_line("1 3 4\n0 0 0 0 0 0 1\n\n"), 0u);
}

TEST(CloudFile, ParseErrorMessageCarriesPathAndLine) {
  const auto path = temp_file("msg.txt");
  write_text(path, "2 3 4\n0 0 0 0 0 0 1\n");
  try {
    load_cloud(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(path.string() + ":3:"),
              std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(CloudFile, MissingFileIsIoError) {
  EXPECT_THROW(load_cloud(temp_file("does_not_exist.txt")), IoError);
}

// --- blocks --------------------------------------------------------------------

TEST(BlockSplit, SingleBlockTakesEveryPoint) {
  const PointCloud cloud = random_cloud(50, 3, 4, 20, 0.9);
  const auto blocks = block_split(cloud, 1.0, 50, 1);
  ASSERT_EQ(blocks.size(), 1u);
  std::vector<Index> all(50);
  std::iota(all.begin(), all.end(), Index{0});
  EXPECT_EQ(blocks[0].source, all);
}

TEST(BlockSplit, TwoClustersGiveTwoBlocks) {
  PointCloud a = random_cloud(40, 0, 2, 21, 0.5);
  PointCloud b = random_cloud(40, 0, 2, 22, 0.5);
  PointCloud cloud;
  cloud.num_classes = 2;
  cloud.positions = Matrix(80, 3);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      cloud.positions(i, c) = a.positions(i, c);
      cloud.positions(40 + i, c) = b.positions(i, c) + (c == 0 ? 10.0 : 0.0);
    }
  cloud.features = cloud.positions;
  cloud.labels.assign(80, 0);
  EXPECT_EQ(block_split(cloud, 1.0, 32, 0).size(), 2u);
}

TEST(BlockSplit, DenseBlocksHaveExactlyNSample) {
  const PointCloud cloud = random_cloud(30000, 3, 4, 23, 2.0);
  const auto blocks = block_split(cloud, 1.0, 4096, 5);
  EXPECT_EQ(blocks.size(), 4u);
  for (const Block& b : blocks) {
    EXPECT_EQ(b.cloud.size(), 4096u);
    EXPECT_EQ(b.source.size(), 4096u);
    EXPECT_EQ(b.cloud.labels.size(), 4096u);
    EXPECT_TRUE(std::ranges::is_sorted(b.source));
    EXPECT_EQ(std::adjacent_find(b.source.begin(), b.source.end()),
              b.source.end());
  }
}

TEST(BlockSplit, SamplesStayInsideTheirCell) {
  const PointCloud cloud = random_cloud(3000, 3, 4, 24, 3.0);
  const auto blocks = block_split(cloud, 1.0, 200, 6);
  double origin[2] = {1e300, 1e300};
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t a = 0; a < 2; ++a)
      origin[a] = std::min(origin[a], cloud.positions(i, a));
  std::set<std::array<std::int64_t, 2>> cells;
  for (const Block& b : blocks) {
    EXPECT_TRUE(cells.insert(b.cell).second);
    for (Index s : b.source) {
      const auto i = static_cast<std::size_t>(s);
      for (std::size_t a = 0; a < 2; ++a)
        EXPECT_EQ(static_cast<std::int64_t>(
                      std::floor(cloud.positions(i, a) - origin[a])),
                  b.cell[a]);
    }
  }
}

TEST(BlockSplit, SparseCellsSampleWithReplacementCoveringAll) {
  const PointCloud cloud = random_cloud(30, 3, 4, 25, 0.9);
  const auto blocks = block_split(cloud, 1.0, 64, 7);
  ASSERT_EQ(blocks.size(), 1u);
  EXPECT_EQ(blocks[0].cloud.size(), 64u);
  std::set<Index> distinct(blocks[0].source.begin(), blocks[0].source.end());
  EXPECT_EQ(distinct.size(), 30u);
}

TEST(BlockSplit, SmallCellsAreDiscarded) {
  PointCloud cloud = random_cloud(109, 0, 2, 26, 0.9);
  for (std::size_t i = 100; i < 109; ++i) cloud.positions(i, 0) += 5.0;
  cloud.features = cloud.positions;
  const auto blocks = block_split(cloud, 1.0, 16, 8);
  ASSERT_EQ(blocks.size(), 1u);
  for (Index s : blocks[0].source) EXPECT_LT(s, 100);
}

TEST(BlockSplit, FeatureLayout) {
  const PointCloud cloud = random_cloud(200, 3, 4, 27, 2.0);
  const auto blocks = block_split(cloud, 1.0, 32, 9);
  ASSERT_FALSE(blocks.empty());
  for (const Block& b : blocks) {
    ASSERT_EQ(b.cloud.features.cols(), 9u);
    for (std::size_t r = 0; r < b.cloud.size(); ++r) {
      const auto src = static_cast<std::size_t>(b.source[r]);
      for (std::size_t a = 0; a < 3; ++a) {
        EXPECT_EQ(b.cloud.features(r, a), b.cloud.positions(r, a));
        EXPECT_GE(b.cloud.positions(r, a), 0.0);
        EXPECT_EQ(b.cloud.features(r, 6 + a), cloud.positions(src, a));
        EXPECT_EQ(b.cloud.features(r, 3 + a), cloud.features(src, 3 + a));
      }
      EXPECT_EQ(b.cloud.labels[r], cloud.labels[src]);
    }
  }
}

TEST(BlockSplit, DeterministicGivenSeed) {
  const PointCloud cloud = random_cloud(5000, 3, 4, 28, 2.0);
  const auto a = block_split(cloud, 1.0, 500, 10);
  const auto b = block_split(cloud, 1.0, 500, 10);
  const auto c = block_split(cloud, 1.0, 500, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].source, b[k].source);
    EXPECT_EQ(a[k].cloud.features, b[k].cloud.features);
  }
  EXPECT_NE(a[0].source, c[0].source);
}

TEST(MergePredictions, LastBlockWinsAndGapsTakeNearest) {
  PointCloud cloud;
  cloud.positions = Matrix{4, 3, {0, 0, 0, 1, 0, 0, 2, 0, 0, 2.9, 0, 0}};
  cloud.features = cloud.positions;
  std::vector<Block> blocks(2);
  blocks[0].source = {0, 1, 1};
  blocks[1].source = {1, 2};
  const auto merged =
      merge_block_predictions(cloud, blocks, {{5, 6, 7}, {8, 9}});
  EXPECT_EQ(merged, (std::vector<int>{5, 8, 9, 9}));
}

// --- metrics -------------------------------------------------------------------

TEST(Metrics, PerfectPredictions) {
  ConfusionMatrix cm(3);
  cm.accumulate({0, 1, 2, 2}, {0, 1, 2, 2});
  const auto m = cm.finalize();
  EXPECT_EQ(m.oa, 1.0);
  EXPECT_EQ(m.macc, 1.0);
  EXPECT_EQ(m.miou, 1.0);
}

TEST(Metrics, AllPredictedClassZero) {
  ConfusionMatrix cm(2);
  cm.accumulate({0, 0, 0, 0}, {0, 1, 0, 1});
  const auto m = cm.finalize();
  EXPECT_EQ(m.oa, 0.5);
  EXPECT_EQ(m.macc, 0.5);
  EXPECT_EQ(m.miou, 0.25);
  EXPECT_EQ(m.per_class_iou[0], 0.5);
  EXPECT_EQ(m.per_class_iou[1], 0.0);
}

TEST(Metrics, AbsentClassIsExcluded) {
  ConfusionMatrix cm(4);
  cm.accumulate({0, 1, 1}, {0, 1, 0});
  const auto m = cm.finalize();
  EXPECT_TRUE(std::isnan(m.per_class_iou[2]));
  EXPECT_TRUE(std::isnan(m.per_class_iou[3]));
  EXPECT_DOUBLE_EQ(m.miou, (0.5 + 0.5) / 2);
}

TEST(Metrics, MatchesSetArithmeticOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const int k = 6;
    std::vector<int> pred(500), truth(500);
    for (std::size_t i = 0; i < 500; ++i) {
      truth[i] = static_cast<int>(rng.below(k - 1));  // class 5 never true
      pred[i] = rng.uniform() < 0.6 ? truth[i]
                                    : static_cast<int>(rng.below(k - 2));
    }
    ConfusionMatrix cm(k);
    cm.accumulate(pred, truth);
    const auto m = cm.finalize();

    std::size_t correct = 0;
    for (std::size_t i = 0; i < 500; ++i) correct += pred[i] == truth[i];
    EXPECT_EQ(m.oa, static_cast<double>(correct) / 500.0);
    double iou_sum = 0.0, acc_sum = 0.0;
    int iou_n = 0, acc_n = 0;
    for (int c = 0; c < k; ++c) {
      std::set<std::size_t> p, t, both, either;
      for (std::size_t i = 0; i < 500; ++i) {
        if (pred[i] == c) p.insert(i);
        if (truth[i] == c) t.insert(i);
      }
      std::ranges::set_intersection(p, t, std::inserter(both, both.end()));
      std::ranges::set_union(p, t, std::inserter(either, either.end()));
      if (!t.empty()) {
        acc_sum += static_cast<double>(both.size()) /
                   static_cast<double>(t.size());
        ++acc_n;
      }
      if (either.empty()) {
        EXPECT_TRUE(std::isnan(m.per_class_iou[static_cast<std::size_t>(c)]));
        continue;
      }
      const double iou = static_cast<double>(both.size()) /
                         static_cast<double>(either.size());
      EXPECT_EQ(m.per_class_iou[static_cast<std::size_t>(c)], iou);
      iou_sum += iou;
      ++iou_n;
    }
    EXPECT_EQ(m.miou, iou_sum / iou_n);
    EXPECT_EQ(m.macc, acc_sum / acc_n);
    for (double v : {m.oa, m.macc, m.miou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, AccumulationOrderDoesNotMatter) {
  Rng rng(77);
  std::vector<int> pred(300), truth(300);
  for (std::size_t i = 0; i < 300; ++i) {
    pred[i] = static_cast<int>(rng.below(4));
    truth[i] = static_cast<int>(rng.below(4));
  }
  ConfusionMatrix whole(4);
  whole.accumulate(pred, truth);
  ConfusionMatrix a(4), b(4);
  const auto mid = pred.begin() + 117;
  b.accumulate({mid, pred.end()}, {truth.begin() + 117, truth.end()});
  a.accumulate({pred.begin(), mid}, {truth.begin(), truth.begin() + 117});
  b.merge(a);
  EXPECT_EQ(b, whole);
  EXPECT_EQ(b.total(), 300u);
}

TEST(Metrics, RejectsOutOfRangeIds) {
  ConfusionMatrix cm(3);
  EXPECT_THROW(cm.accumulate({0, 3}, {0, 1}), std::invalid_argument);
  EXPECT_THROW(cm.accumulate({0}, {0, 1}), std::invalid_argument);
  EXPECT_EQ(cm.total(), 0u);
}

TEST(Metrics, JsonLine) {
  ConfusionMatrix cm(3);
  cm.accumulate({0, 0, 0, 0}, {0, 1, 0, 1});
  const std::string line = metrics_json(cm.finalize());
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(line.rfind("{\"oa\":", 0), 0u);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["oa"], 0.5);
  EXPECT_EQ(j["miou"], 0.25);
  EXPECT_TRUE(j["per_class_iou"][2].is_null());
}

}  // namespace
}  // namespace cnl
