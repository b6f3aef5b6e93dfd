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
#include <numbers>

#include "cnl/data.hpp"
#include "cnl/rng.hpp"

namespace cnl {

double Primitive::area() const {
  const auto& h = half_size;
  switch (kind) {
    case PrimitiveKind::kPlane:
      return 4.0 * h[0] * h[1];
    case PrimitiveKind::kBox:
      return 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]);
    case PrimitiveKind::kSphere:
      return 4.0 * std::numbers::pi * radius * radius;
  }
  return 0.0;
}

void SceneSpec::validate() const {
  require(n_points >= 1, "scene needs at least one point");
  require(extent > 0.0 && std::isfinite(extent), "scene extent must be positive");
  require(num_classes >= 2, "scene needs at least two classes");
  require(noise_sigma >= 0.0, "noise sigma must be non-negative");
  require(!primitives.empty(), "scene needs at least one primitive");
  for (const Primitive& p : primitives) {
    require(p.class_id >= 0 && p.class_id < num_classes,
            "primitive class id outside [0, num_classes)");
    require(p.area() > 0.0, "primitive surface area must be positive");
  }
}

SceneSpec standard_scene(std::uint64_t seed, std::size_t n_points,
                         double extent, int num_classes) {
  SceneSpec spec;
  spec.seed = seed;
  spec.n_points = n_points;
  spec.extent = extent;
  spec.num_classes = num_classes;

  Primitive floor;
  floor.kind = PrimitiveKind::kPlane;
  floor.class_id = 0;
  floor.center = {extent / 2, extent / 2, 0.0};
  floor.half_size = {extent / 2, extent / 2, 0.0};
  floor.color = {0.6, 0.6, 0.6};
  spec.primitives.push_back(floor);

  // Objects occupy their own slot of a square layout so they never overlap.
  Rng rng(Rng::mix(seed, 0x5ce7e));
  const auto objects = static_cast<std::size_t>(std::max(0, num_classes - 1));
  std::size_t grid = 1;
  while (grid * grid < objects) ++grid;
  const double slot = extent / static_cast<double>(grid);
  for (std::size_t k = 0; k < objects; ++k) {
    Primitive p;
    p.class_id = static_cast<int>(k) + 1;
    p.kind = k % 2 == 0 ? PrimitiveKind::kBox : PrimitiveKind::kSphere;
    const double size = slot * rng.uniform(0.15, 0.3);
    const double cx = (static_cast<double>(k % grid) + 0.5) * slot +
                      rng.uniform(-0.1, 0.1) * slot;
    const double cy = (static_cast<double>(k / grid) + 0.5) * slot +
                      rng.uniform(-0.1, 0.1) * slot;
    if (p.kind == PrimitiveKind::kBox) {
      p.half_size = {size, size * rng.uniform(0.6, 1.0), size * rng.uniform(0.8, 1.6)};
      p.center = {cx, cy, p.half_size[2]};
    } else {
      p.radius = size;
      p.center = {cx, cy, size};
    }
    p.color = {rng.uniform(), rng.uniform(), rng.uniform()};
    spec.primitives.push_back(p);
  }
  return spec;
}

namespace {

std::array<double, 3> sample_surface(const Primitive& p, Rng& rng) {
  const auto& c = p.center;
  const auto& h = p.half_size;
  switch (p.kind) {
    case PrimitiveKind::kPlane:
      return {c[0] + rng.uniform(-h[0], h[0]), c[1] + rng.uniform(-h[1], h[1]),
              c[2]};
    case PrimitiveKind::kBox: {
      // Pick an axis pair by face area, then a side, then a point.
      const double faces[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
      const double u = rng.uniform() * (faces[0] + faces[1] + faces[2]);
      const int axis = u < faces[0] ? 0 : (u < faces[0] + faces[1] ? 1 : 2);
      std::array<double, 3> q;
      for (int a = 0; a < 3; ++a) q[a] = c[a] + rng.uniform(-h[a], h[a]);
      q[axis] = c[axis] + (rng.below(2) == 0 ? -h[axis] : h[axis]);
      return q;
    }
    case PrimitiveKind::kSphere: {
      double v[3], norm = 0.0;
      do {
        norm = 0.0;
        for (double& x : v) {
          x = rng.normal();
          norm += x * x;
        }
      } while (norm < 1e-24);
      norm = std::sqrt(norm);
      return {c[0] + p.radius * v[0] / norm, c[1] + p.radius * v[1] / norm,
              c[2] + p.radius * v[2] / norm};
    }
  }
  return c;
}

}  // namespace

PointCloud generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::vector<double> cumulative;
  double total = 0.0;
  for (const Primitive& p : spec.primitives) {
    total += p.area();
    cumulative.push_back(total);
  }

  Rng rng(spec.seed);
  PointCloud cloud;
  cloud.num_classes = spec.num_classes;
  cloud.positions = Matrix(spec.n_points, 3);
  cloud.features = Matrix(spec.n_points, 6);
  cloud.labels.resize(spec.n_points);
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    const double u = rng.uniform() * total;
    const auto pick = std::min<std::size_t>(
        static_cast<std::size_t>(
            std::ranges::upper_bound(cumulative, u) - cumulative.begin()),
        cumulative.size() - 1);
    const Primitive& p = spec.primitives[pick];
    auto q = sample_surface(p, rng);
    for (int a = 0; a < 3; ++a) {
      if (spec.noise_sigma > 0.0) q[a] += spec.noise_sigma * rng.normal();
      cloud.positions(i, a) = q[a];
      cloud.features(i, a) = q[a];
      cloud.features(i, 3 + a) = p.color[a];
    }
    cloud.labels[i] = p.class_id;
  }
  return cloud;
}

}  // namespace cnl
