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
#include <map>
#include <string>

#include "cnl/nlops.hpp"
#include "cnl/parallel.hpp"
#include "internal.hpp"

namespace cnl {

namespace detail {

void neighborhood_operands(const Matrix& features, const Matrix& positions,
                           Index center_id, std::span<const Index> rows,
                           bool use_relpos, std::vector<double>& center,
                           Matrix& neighbors) {
  const std::size_t c_dim = features.cols();
  const std::size_t width = c_dim + (use_relpos ? 3 : 0);
  const auto ci = static_cast<std::size_t>(center_id);
  center.assign(width, 0.0);
  std::ranges::copy(features.row(ci), center.begin());
  neighbors = Matrix(rows.size(), width);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto src = static_cast<std::size_t>(rows[j]);
    auto dst = neighbors.row(j);
    std::ranges::copy(features.row(src), dst.begin());
    if (use_relpos)
      for (std::size_t a = 0; a < 3; ++a)
        dst[c_dim + a] = positions(src, a) - positions(ci, a);
  }
}

Matrix gather_rows(const Matrix& source, std::span<const Index> rows) {
  Matrix out(rows.size(), source.cols());
  for (std::size_t j = 0; j < rows.size(); ++j)
    std::ranges::copy(source.row(static_cast<std::size_t>(rows[j])),
                      out.row(j).begin());
  return out;
}

std::vector<Index> sorted_copy(std::span<const Index> row) {
  std::vector<Index> out(row.begin(), row.end());
  std::ranges::sort(out);
  return out;
}

}  // namespace detail

namespace {

void check_rows(std::span<const Index> row, std::size_t limit,
                const char* what) {
  for (Index idx : row)
    require(idx >= 0 && static_cast<std::size_t>(idx) < limit,
            std::string(what) + ": index out of range");
}

}  // namespace

Matrix neighborhood_level(const Matrix& features, const Matrix& positions,
                          const std::vector<Index>& centroid_ids,
                          const IndexTable& neighbors,
                          const LevelWeights& weights, bool use_relpos,
                          Exec exec, LevelTape* tape) {
  const std::size_t m = centroid_ids.size();
  require(neighbors.rows() == m,
          "neighborhood_level: neighbor table rows must match centroid count");
  require(positions.rows() == features.rows() && positions.cols() == 3,
          "neighborhood_level: positions must be N x 3");
  require(weights.in_dim() == features.cols() + (use_relpos ? 3 : 0),
          "neighborhood_level: weights do not match feature width");

  std::vector<std::vector<Index>> rows(m);
  for (std::size_t i = 0; i < m; ++i) {
    check_rows(neighbors.row(i), features.rows(), "neighborhood_level");
    check_rows({&centroid_ids[i], 1}, features.rows(), "neighborhood_level");
    rows[i] = detail::sorted_copy(neighbors.row(i));
  }
  if (tape) tape->gathers.assign(m, {});

  Matrix x(m, weights.out_dim());
  for_each_index(exec, m, [&](std::size_t i) {
    std::vector<double> center;
    Matrix nb;
    detail::neighborhood_operands(features, positions, centroid_ids[i], rows[i],
                                  use_relpos, center, nb);
    gather_forward(center, nb, weights, x.row(i),
                   tape ? &tape->gathers[i] : nullptr);
  });
  if (tape) tape->rows = IndexTable::from_rows(rows);
  return x;
}

Matrix superpoint_level(const Matrix& x, const IndexTable& sp_samples,
                        const LevelWeights& weights, Exec exec,
                        LevelTape* tape) {
  const std::size_t m = x.rows();
  require(sp_samples.rows() == m,
          "superpoint_level: sample table rows must match centroid count");
  require(weights.in_dim() == x.cols(),
          "superpoint_level: weights do not match feature width");
  std::vector<std::vector<Index>> rows(m);
  for (std::size_t i = 0; i < m; ++i) {
    check_rows(sp_samples.row(i), m, "superpoint_level");
    rows[i] = detail::sorted_copy(sp_samples.row(i));
  }
  if (tape) tape->gathers.assign(m, {});

  Matrix y(m, weights.out_dim());
  require(rows.empty() || std::ranges::all_of(rows, [&](const auto& r) {
            return !r.empty() || x.cols() == weights.out_dim();
          }),
          "superpoint_level: pass-through needs equal input and output width");
  for_each_index(exec, m, [&](std::size_t i) {
    if (rows[i].empty()) {
      std::ranges::copy(x.row(i), y.row(i).begin());
      return;
    }
    const Matrix nb = detail::gather_rows(x, rows[i]);
    gather_forward(x.row(i), nb, weights, y.row(i),
                   tape ? &tape->gathers[i] : nullptr);
  });
  if (tape) tape->rows = IndexTable::from_rows(rows);
  return y;
}

Matrix superpoint_maxpool(const Matrix& y,
                          const std::vector<Index>& centroid_superpoint,
                          PoolTape* tape) {
  const std::size_t m = y.rows();
  require(centroid_superpoint.size() == m,
          "superpoint_maxpool: one superpoint id per centroid required");
  if (m == 0) throw DegenerateInput("no superpoint holds a centroid");

  std::map<Index, Index> dense;
  for (Index s : centroid_superpoint) {
    require(s >= 0, "superpoint_maxpool: centroid without superpoint");
    dense.emplace(s, 0);
  }
  std::vector<Index> superpoint_of_row;
  for (auto& [s, row] : dense) {
    row = static_cast<Index>(superpoint_of_row.size());
    superpoint_of_row.push_back(s);
  }

  const std::size_t n_sp = superpoint_of_row.size();
  const std::size_t d_dim = y.cols();
  Matrix v(n_sp, d_dim);
  IndexTable argmax(n_sp, d_dim, -1);
  std::vector<Index> row_of_centroid(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<std::size_t>(dense.at(centroid_superpoint[i]));
    row_of_centroid[i] = static_cast<Index>(r);
    auto best = argmax.row(r);
    for (std::size_t d = 0; d < d_dim; ++d) {
      if (best[d] < 0 || y(i, d) > v(r, d)) {
        v(r, d) = y(i, d);
        best[d] = static_cast<Index>(i);
      }
    }
  }
  if (tape) {
    tape->superpoint_of_row = std::move(superpoint_of_row);
    tape->row_of_centroid = std::move(row_of_centroid);
    tape->argmax = std::move(argmax);
  }
  return v;
}

Matrix global_level(const Matrix& y, const Matrix& v,
                    const LevelWeights& weights, Exec exec, LevelTape* tape) {
  const std::size_t m = y.rows();
  if (v.rows() == 0) throw DegenerateInput("global level needs N_sp >= 1");
  require(v.cols() == y.cols() && weights.in_dim() == y.cols(),
          "global_level: dimension mismatch");
  if (tape) {
    tape->gathers.assign(m, {});
    std::vector<Index> all(v.rows());
    for (std::size_t s = 0; s < all.size(); ++s) all[s] = static_cast<Index>(s);
    tape->rows = IndexTable::from_rows(std::vector<std::vector<Index>>(m, all));
  }
  Matrix z(m, weights.out_dim());
  for_each_index(exec, m, [&](std::size_t i) {
    gather_forward(y.row(i), v, weights, z.row(i),
                   tape ? &tape->gathers[i] : nullptr);
  });
  return z;
}

Matrix fuse(const Matrix& x, const Matrix& y, const Matrix& z,
            const Matrix& gamma, const Matrix& bias, FuseTape* tape) {
  const std::size_t m = x.rows();
  const std::size_t d_dim = x.cols();
  require(y.same_shape(x) && z.same_shape(x),
          "fuse: X, Y and Z must share one shape");
  require(gamma.rows() == 3 * d_dim, "fuse: gamma must have 3*D rows");
  require(bias.rows() == 1 && bias.cols() == gamma.cols(),
          "fuse: bias must be 1 x D+");
  const std::size_t out_dim = gamma.cols();

  Matrix concat(m, 3 * d_dim);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = concat.row(i);
    std::ranges::copy(x.row(i), row.begin());
    std::ranges::copy(y.row(i), row.begin() + static_cast<long>(d_dim));
    std::ranges::copy(z.row(i), row.begin() + static_cast<long>(2 * d_dim));
  }
  Matrix pre(m, out_dim);
  Matrix out(m, out_dim);
  for (std::size_t i = 0; i < m; ++i) {
    auto p = pre.row(i);
    const auto in = concat.row(i);
    for (std::size_t r = 0; r < in.size(); ++r) {
      const auto g = gamma.row(r);
      for (std::size_t o = 0; o < out_dim; ++o) p[o] += in[r] * g[o];
    }
    for (std::size_t o = 0; o < out_dim; ++o) {
      p[o] += bias(0, o);
      out(i, o) = p[o] > 0.0 ? p[o] : 0.0;
    }
  }
  if (tape) {
    tape->concat = std::move(concat);
    tape->pre_activation = std::move(pre);
  }
  return out;
}

}  // namespace cnl
