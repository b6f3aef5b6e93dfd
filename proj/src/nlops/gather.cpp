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
#include <atomic>
#include <cmath>
#include <string>

#include "cnl/nlops.hpp"

namespace cnl {

namespace interactions {
namespace {
std::atomic<std::uint64_t> g_count{0};
}  // namespace

void reset() noexcept { g_count.store(0); }
std::uint64_t read() noexcept { return g_count.load(); }
void add(std::uint64_t n) noexcept {
  g_count.fetch_add(n, std::memory_order_relaxed);
}
}  // namespace interactions

std::uint64_t pair_interaction_count(std::uint64_t m, std::uint64_t k,
                                     std::uint64_t k_sp, std::uint64_t n_sp) {
  return m * (k + k_sp + n_sp);
}

CascadeParams zeros_like(const CascadeParams& like) {
  CascadeParams out;
  for (std::size_t l = 0; l < 3; ++l) {
    out.levels[l].theta =
        Matrix(like.levels[l].theta.rows(), like.levels[l].theta.cols());
    out.levels[l].phi =
        Matrix(like.levels[l].phi.rows(), like.levels[l].phi.cols());
  }
  out.gamma = Matrix(like.gamma.rows(), like.gamma.cols());
  out.gamma_bias = Matrix(like.gamma_bias.rows(), like.gamma_bias.cols());
  return out;
}

LevelSet LevelSet::parse(const std::string& digits) {
  if (digits == "1") return {false, false};
  if (digits == "12") return {true, false};
  if (digits == "123") return {true, true};
  throw std::invalid_argument("levels must be one of 1, 12, 123 (got '" +
                              digits + "')");
}

std::string LevelSet::str() const {
  if (!superpoint && !global) return "1";
  if (superpoint && !global) return "12";
  if (superpoint && global) return "123";
  return "13";
}

std::vector<double> pairwise_embed(std::span<const double> f_i,
                                   std::span<const double> f_j,
                                   const Matrix& w_theta) {
  require(f_i.size() == f_j.size() && f_i.size() == w_theta.rows(),
          "pairwise_embed: dimension mismatch");
  std::vector<double> out(w_theta.cols(), 0.0);
  for (std::size_t c = 0; c < f_i.size(); ++c) {
    const double diff = f_i[c] - f_j[c];
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w_theta(c, d) * diff;
  }
  return out;
}

std::vector<double> unary_embed(std::span<const double> f_j,
                                const Matrix& w_phi) {
  require(f_j.size() == w_phi.rows(), "unary_embed: dimension mismatch");
  std::vector<double> out(w_phi.cols(), 0.0);
  for (std::size_t c = 0; c < f_j.size(); ++c)
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += w_phi(c, d) * f_j[c];
  return out;
}

namespace {

void softmax_columns(const Matrix& logits, Matrix& out) {
  const std::size_t k = logits.rows();
  const std::size_t dims = logits.cols();
  for (std::size_t d = 0; d < dims; ++d) {
    double peak = logits(0, d);
    for (std::size_t j = 1; j < k; ++j) peak = std::max(peak, logits(j, d));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out(j, d) = std::exp(logits(j, d) - peak);
      total += out(j, d);
    }
    for (std::size_t j = 0; j < k; ++j) out(j, d) /= total;
  }
}

}  // namespace

Matrix channel_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  if (logits.rows() > 0) softmax_columns(logits, out);
  return out;
}

void gather_forward(std::span<const double> center, const Matrix& neighbors,
                    const LevelWeights& weights, std::span<double> out,
                    GatherRecord* record) {
  const std::size_t k = neighbors.rows();
  const std::size_t c_dim = center.size();
  const std::size_t d_dim = weights.out_dim();
  if (k == 0) throw DegenerateInput("non-local gather over zero neighbors");
  require(neighbors.cols() == c_dim && weights.theta.rows() == c_dim &&
              weights.phi.rows() == c_dim && weights.phi.cols() == d_dim &&
              out.size() == d_dim,
          "non-local gather: dimension mismatch");

  GatherRecord local;
  GatherRecord& rec = record ? *record : local;
  rec.logits = Matrix(k, d_dim);
  rec.attention = Matrix(k, d_dim);
  rec.embedded = Matrix(k, d_dim);

  for (std::size_t j = 0; j < k; ++j) {
    auto logit = rec.logits.row(j);
    auto emb = rec.embedded.row(j);
    const auto nb = neighbors.row(j);
    for (std::size_t c = 0; c < c_dim; ++c) {
      const double diff = center[c] - nb[c];
      const double value = nb[c];
      const auto theta = weights.theta.row(c);
      const auto phi = weights.phi.row(c);
      for (std::size_t d = 0; d < d_dim; ++d) {
        logit[d] += theta[d] * diff;
        emb[d] += phi[d] * value;
      }
    }
  }
  softmax_columns(rec.logits, rec.attention);

  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const auto a = rec.attention.row(j);
    const auto e = rec.embedded.row(j);
    for (std::size_t d = 0; d < d_dim; ++d) out[d] += a[d] * e[d];
  }
  interactions::add(k);
}

void gather_backward(std::span<const double> center, const Matrix& neighbors,
                     const LevelWeights& weights, const GatherRecord& record,
                     std::span<const double> grad_out,
                     std::span<double> grad_center, Matrix& grad_neighbors,
                     LevelWeights& grad_weights) {
  const std::size_t k = neighbors.rows();
  const std::size_t c_dim = center.size();
  const std::size_t d_dim = weights.out_dim();
  require(grad_out.size() == d_dim && grad_center.size() == c_dim &&
              record.attention.rows() == k,
          "gather backward: shape mismatch");

  // Split the Hadamard product, then push through the per-channel softmax
  // Jacobian diag(a) - a a^T.
  Matrix grad_logits(k, d_dim);
  Matrix grad_embedded(k, d_dim);
  for (std::size_t d = 0; d < d_dim; ++d) {
    double weighted = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double ga = grad_out[d] * record.embedded(j, d);
      grad_logits(j, d) = ga;
      weighted += record.attention(j, d) * ga;
      grad_embedded(j, d) = grad_out[d] * record.attention(j, d);
    }
    for (std::size_t j = 0; j < k; ++j)
      grad_logits(j, d) = record.attention(j, d) * (grad_logits(j, d) - weighted);
  }

  grad_weights.theta = Matrix(c_dim, d_dim);
  grad_weights.phi = Matrix(c_dim, d_dim);
  grad_neighbors = Matrix(k, c_dim);
  std::vector<double> logit_sum(d_dim, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const auto nb = neighbors.row(j);
    const auto gl = grad_logits.row(j);
    const auto ge = grad_embedded.row(j);
    for (std::size_t d = 0; d < d_dim; ++d) logit_sum[d] += gl[d];
    for (std::size_t c = 0; c < c_dim; ++c) {
      const double diff = center[c] - nb[c];
      auto gt = grad_weights.theta.row(c);
      auto gp = grad_weights.phi.row(c);
      const auto theta = weights.theta.row(c);
      const auto phi = weights.phi.row(c);
      double through_phi = 0.0;
      double through_theta = 0.0;
      for (std::size_t d = 0; d < d_dim; ++d) {
        gt[d] += diff * gl[d];
        gp[d] += nb[c] * ge[d];
        through_phi += phi[d] * ge[d];
        through_theta += theta[d] * gl[d];
      }
      grad_neighbors(j, c) = through_phi - through_theta;
    }
  }
  for (std::size_t c = 0; c < c_dim; ++c) {
    const auto theta = weights.theta.row(c);
    double acc = 0.0;
    for (std::size_t d = 0; d < d_dim; ++d) acc += theta[d] * logit_sum[d];
    grad_center[c] = acc;
  }
}

GatherResult nonlocal_gather(std::span<const double> center,
                             const Matrix& neighbors,
                             const LevelWeights& weights) {
  GatherResult result;
  result.out.assign(weights.out_dim(), 0.0);
  gather_forward(center, neighbors, weights, result.out, &result.record);
  return result;
}

}  // namespace cnl
