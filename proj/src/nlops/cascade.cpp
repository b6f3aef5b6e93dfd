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

#include "cnl/nlops.hpp"
#include "cnl/parallel.hpp"
#include "internal.hpp"

namespace cnl {

LevelFeatures cascaded_forward(const CascadeInputs& in,
                               const CascadeParams& params,
                               const CascadeOptions& options,
                               CascadeTape* tape) {
  const std::size_t m = in.centroid_ids.size();
  require(in.centroid_superpoint.size() == m,
          "cascaded_forward: one superpoint id per centroid required");
  require(params.gamma.rows() == 3 * params.width(),
          "cascaded_forward: gamma rows must equal 3*D");

  LevelFeatures out;
  out.x = neighborhood_level(in.features, in.positions, in.centroid_ids,
                             in.neighbors, params.levels[0], options.use_relpos,
                             options.exec, tape ? &tape->neighborhood : nullptr);
  if (options.levels.superpoint) {
    out.y = superpoint_level(out.x, in.sp_samples, params.levels[1],
                             options.exec, tape ? &tape->superpoint : nullptr);
  } else {
    out.y = out.x;
  }
  if (options.levels.global) {
    out.v = superpoint_maxpool(out.y, in.centroid_superpoint,
                               tape ? &tape->pool : nullptr);
    out.z = global_level(out.y, out.v, params.levels[2], options.exec,
                         tape ? &tape->global : nullptr);
  } else {
    out.z = out.y;
  }
  out.fused = fuse(out.x, out.y, out.z, params.gamma, params.gamma_bias,
                   tape ? &tape->fusion : nullptr);

  if (tape) {
    tape->inputs = in;
    tape->params = params;
    tape->levels = options.levels;
    tape->use_relpos = options.use_relpos;
    tape->features = out;
  }
  return out;
}

LevelFeatures cascaded_forward(const PointCloud& cloud,
                               const CentroidSet& centroids,
                               const IndexTable& neighbors,
                               const IndexTable& sp_samples,
                               const SuperpointPartition& partition,
                               const CascadeParams& params,
                               const CascadeOptions& options,
                               CascadeTape* tape) {
  CascadeInputs in;
  in.features = cloud.features;
  in.positions = cloud.positions;
  in.centroid_ids = centroids.indices;
  in.neighbors = neighbors;
  in.sp_samples = sp_samples;
  in.centroid_superpoint = centroid_superpoints(partition, centroids);
  return cascaded_forward(in, params, options, tape);
}

namespace {

struct LocalGrad {
  bool active = false;
  std::vector<double> center;
  Matrix neighbors;
  LevelWeights weights;
};

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
}

void add_row(std::span<double> dst, std::span<const double> src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

// Runs the backward pass of every gather of one level. Operands are rebuilt
// by `operands(i, center, neighbors)`; rows with no recorded gather stay
// inactive.
template <typename Operands>
std::vector<LocalGrad> level_backward(Exec exec, const LevelTape& tape,
                                      const LevelWeights& weights,
                                      const Matrix& grad_out,
                                      Operands&& operands) {
  const std::size_t m = tape.rows.rows();
  std::vector<LocalGrad> locals(m);
  for_each_index(exec, m, [&](std::size_t i) {
    if (tape.rows.row_size(i) == 0) return;
    std::vector<double> center;
    Matrix nb;
    operands(i, center, nb);
    LocalGrad& g = locals[i];
    g.active = true;
    g.center.assign(center.size(), 0.0);
    gather_backward(center, nb, weights, tape.gathers[i], grad_out.row(i),
                    g.center, g.neighbors, g.weights);
  });
  return locals;
}

// Sums per-centroid weight gradients in ascending centroid order.
void reduce_weights(const std::vector<LocalGrad>& locals, LevelWeights& dst) {
  for (const auto& g : locals) {
    if (!g.active) continue;
    add_into(dst.theta, g.weights.theta);
    add_into(dst.phi, g.weights.phi);
  }
}

}  // namespace

CascadeGrads cascaded_backward(const CascadeTape& tape,
                               const Matrix& grad_fused, Exec exec) {
  const auto& in = tape.inputs;
  const auto& params = tape.params;
  const std::size_t m = in.centroid_ids.size();
  const std::size_t d_dim = params.width();
  const std::size_t out_dim = params.fused_width();
  require(grad_fused.rows() == m && grad_fused.cols() == out_dim,
          "cascaded_backward: gradient shape does not match fused output");
  require(tape.fusion.pre_activation.rows() == m,
          "cascaded_backward: tape was not recorded by cascaded_forward");

  CascadeGrads grads;
  grads.params = zeros_like(params);
  grads.features = Matrix(in.features.rows(), in.features.cols());

  // Fusion.
  Matrix grad_pre(m, out_dim);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t o = 0; o < out_dim; ++o)
      grad_pre(i, o) =
          tape.fusion.pre_activation(i, o) > 0.0 ? grad_fused(i, o) : 0.0;
  Matrix gx(m, d_dim), gy(m, d_dim), gz(m, d_dim);
  for (std::size_t i = 0; i < m; ++i) {
    const auto cat = tape.fusion.concat.row(i);
    const auto gp = grad_pre.row(i);
    for (std::size_t r = 0; r < cat.size(); ++r) {
      auto gg = grads.params.gamma.row(r);
      const auto gamma = params.gamma.row(r);
      double back = 0.0;
      for (std::size_t o = 0; o < out_dim; ++o) {
        gg[o] += cat[r] * gp[o];
        back += gamma[o] * gp[o];
      }
      Matrix& slot = r < d_dim ? gx : (r < 2 * d_dim ? gy : gz);
      slot(i, r % d_dim) = back;
    }
    for (std::size_t o = 0; o < out_dim; ++o) grads.params.gamma_bias(0, o) += gp[o];
  }

  // Global level and pooling.
  if (tape.levels.global) {
    const Matrix& y = tape.features.y;
    const Matrix& v = tape.features.v;
    auto locals = level_backward(
        exec, tape.global, params.levels[2], gz,
        [&](std::size_t i, std::vector<double>& center, Matrix& nb) {
          center.assign(y.row(i).begin(), y.row(i).end());
          nb = v;
        });
    Matrix gv(v.rows(), v.cols());
    for (std::size_t i = 0; i < m; ++i) {
      add_row(gy.row(i), locals[i].center);
      for (std::size_t s = 0; s < v.rows(); ++s)
        add_row(gv.row(s), locals[i].neighbors.row(s));
    }
    reduce_weights(locals, grads.params.levels[2]);
    for (std::size_t s = 0; s < gv.rows(); ++s) {
      const auto winners = tape.pool.argmax.row(s);
      for (std::size_t d = 0; d < d_dim; ++d)
        gy(static_cast<std::size_t>(winners[d]), d) += gv(s, d);
    }
  } else {
    add_into(gy, gz);
  }

  // Superpoint level.
  if (tape.levels.superpoint) {
    const Matrix& x = tape.features.x;
    auto locals = level_backward(
        exec, tape.superpoint, params.levels[1], gy,
        [&](std::size_t i, std::vector<double>& center, Matrix& nb) {
          center.assign(x.row(i).begin(), x.row(i).end());
          nb = detail::gather_rows(x, tape.superpoint.rows.row(i));
        });
    for (std::size_t i = 0; i < m; ++i) {
      if (!locals[i].active) {
        add_row(gx.row(i), gy.row(i));
        continue;
      }
      add_row(gx.row(i), locals[i].center);
      const auto rows = tape.superpoint.rows.row(i);
      for (std::size_t j = 0; j < rows.size(); ++j)
        add_row(gx.row(static_cast<std::size_t>(rows[j])),
                locals[i].neighbors.row(j));
    }
    reduce_weights(locals, grads.params.levels[1]);
  } else {
    add_into(gx, gy);
  }

  // Neighborhood level; relative-position columns carry no gradient back.
  {
    const std::size_t c_dim = in.features.cols();
    auto locals = level_backward(
        exec, tape.neighborhood, params.levels[0], gx,
        [&](std::size_t i, std::vector<double>& center, Matrix& nb) {
          detail::neighborhood_operands(in.features, in.positions,
                                        in.centroid_ids[i],
                                        tape.neighborhood.rows.row(i),
                                        tape.use_relpos, center, nb);
        });
    for (std::size_t i = 0; i < m; ++i) {
      auto gc = grads.features.row(static_cast<std::size_t>(in.centroid_ids[i]));
      add_row(gc, std::span<const double>(locals[i].center).first(c_dim));
      const auto rows = tape.neighborhood.rows.row(i);
      for (std::size_t j = 0; j < rows.size(); ++j)
        add_row(grads.features.row(static_cast<std::size_t>(rows[j])),
                locals[i].neighbors.row(j).first(c_dim));
    }
    reduce_weights(locals, grads.params.levels[0]);
  }
  return grads;
}

}  // namespace cnl
