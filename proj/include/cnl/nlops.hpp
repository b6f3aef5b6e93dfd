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

#ifndef CNL_NLOPS_HPP_
#define CNL_NLOPS_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cnl/geom.hpp"
#include "cnl/types.hpp"

namespace cnl {

/// Embedding weights of one non-local level: theta embeds feature
/// differences, phi embeds the neighbor feature itself. Both are C x D.
struct LevelWeights {
  Matrix theta;
  Matrix phi;

  std::size_t in_dim() const noexcept { return theta.rows(); }
  std::size_t out_dim() const noexcept { return theta.cols(); }
};

/// Weights of one cascaded module: independent weights for the
/// neighborhood, superpoint and global levels plus the fusion map
/// (3D x D+ matrix and 1 x D+ bias).
struct CascadeParams {
  std::array<LevelWeights, 3> levels;
  Matrix gamma;
  Matrix gamma_bias;

  std::size_t width() const noexcept { return levels[0].out_dim(); }
  std::size_t fused_width() const noexcept { return gamma.cols(); }
};

// Zero-valued parameters with the same shapes as `like`.
CascadeParams zeros_like(const CascadeParams& like);

/// Which cascade levels run. The neighborhood level always runs; a disabled
/// superpoint level passes X through as Y, a disabled global level passes Y
/// through as Z.
struct LevelSet {
  bool superpoint = true;
  bool global = true;

  static LevelSet parse(const std::string& digits);  // "1", "12" or "123"
  std::string str() const;
  friend bool operator==(const LevelSet&, const LevelSet&) = default;
};

// ---------------------------------------------------------------------------
// Pair-interaction accounting. Every executed (center, neighbor) term of a
// non-local sum bumps a process-wide counter.

namespace interactions {
void reset() noexcept;
std::uint64_t read() noexcept;
void add(std::uint64_t n) noexcept;
}  // namespace interactions

// M * (K + K_sp + N_sp): pair terms of one cascaded module with all levels.
std::uint64_t pair_interaction_count(std::uint64_t m, std::uint64_t k,
                                     std::uint64_t k_sp, std::uint64_t n_sp);

// ---------------------------------------------------------------------------
// Elementary pieces.

// W_theta^T (f_i - f_j).
std::vector<double> pairwise_embed(std::span<const double> f_i,
                                   std::span<const double> f_j,
                                   const Matrix& w_theta);
// W_phi^T f_j.
std::vector<double> unary_embed(std::span<const double> f_j,
                                const Matrix& w_phi);

// Column-wise softmax of a K x D matrix, max-shifted per column.
Matrix channel_softmax(const Matrix& logits);

/// Intermediates of one gather, enough to run its backward pass.
struct GatherRecord {
  Matrix logits;     // K x D, pairwise embeddings before normalization
  Matrix attention;  // K x D, per-channel softmax over neighbors
  Matrix embedded;   // K x D, unary embeddings of the neighbors
};

/// Channel-wise non-local gather:
///   out[d] = sum_j softmax_j(theta^T (center - n_j))[d] * (phi^T n_j)[d]
/// The neighbor rows are reduced in the given order; callers pass them
/// sorted by source index. Counts K pair interactions.
void gather_forward(std::span<const double> center, const Matrix& neighbors,
                    const LevelWeights& weights, std::span<double> out,
                    GatherRecord* record);

/// Gradients of one gather. All outputs are overwritten, not accumulated.
void gather_backward(std::span<const double> center, const Matrix& neighbors,
                     const LevelWeights& weights, const GatherRecord& record,
                     std::span<const double> grad_out,
                     std::span<double> grad_center, Matrix& grad_neighbors,
                     LevelWeights& grad_weights);

struct GatherResult {
  std::vector<double> out;
  GatherRecord record;
};

GatherResult nonlocal_gather(std::span<const double> center,
                             const Matrix& neighbors,
                             const LevelWeights& weights);

// ---------------------------------------------------------------------------
// Level operations. Every per-centroid loop runs serially or under OpenMP
// according to `exec`; outputs are identical either way.

struct LevelTape {
  // Sorted neighbor rows actually reduced, one entry per centroid. An empty
  // row marks a pass-through (degenerate superpoint).
  IndexTable rows;
  std::vector<GatherRecord> gathers;
};

/// Neighborhood level. Row i gathers over the neighbor table row of centroid
/// i in `features`. With use_relpos each neighbor row is extended by
/// (p_j - p_i) and the center by a zero 3-vector.
Matrix neighborhood_level(const Matrix& features, const Matrix& positions,
                          const std::vector<Index>& centroid_ids,
                          const IndexTable& neighbors,
                          const LevelWeights& weights, bool use_relpos,
                          Exec exec = Exec::kSerial, LevelTape* tape = nullptr);

/// Superpoint level: row i gathers X_i against the X rows listed in
/// sp_samples row i. An empty row passes X_i through.
Matrix superpoint_level(const Matrix& x, const IndexTable& sp_samples,
                        const LevelWeights& weights, Exec exec = Exec::kSerial,
                        LevelTape* tape = nullptr);

struct PoolTape {
  std::vector<Index> superpoint_of_row;  // dense row -> superpoint id
  std::vector<Index> row_of_centroid;    // centroid -> dense row
  IndexTable argmax;                     // N_sp x D winning centroid
};

/// Per-superpoint channel max over the centroids it contains. Superpoints
/// without centroids are dropped and the remaining ones are numbered densely
/// in ascending id order. Ties go to the smallest centroid index.
Matrix superpoint_maxpool(const Matrix& y,
                          const std::vector<Index>& centroid_superpoint,
                          PoolTape* tape = nullptr);

/// Global level: every row of Y gathers against all pooled rows V.
Matrix global_level(const Matrix& y, const Matrix& v,
                    const LevelWeights& weights, Exec exec = Exec::kSerial,
                    LevelTape* tape = nullptr);

struct FuseTape {
  Matrix concat;          // M x 3D, [X | Y | Z]
  Matrix pre_activation;  // M x D+
};

// relu([X | Y | Z] * gamma + bias).
Matrix fuse(const Matrix& x, const Matrix& y, const Matrix& z,
            const Matrix& gamma, const Matrix& bias, FuseTape* tape = nullptr);

// ---------------------------------------------------------------------------
// Full cascaded module.

/// Inputs of one cascaded module. Centroid and neighbor indices refer to
/// rows of `features`/`positions`; sp_samples entries refer to centroids.
struct CascadeInputs {
  Matrix features;   // N x C
  Matrix positions;  // N x 3
  std::vector<Index> centroid_ids;
  IndexTable neighbors;
  IndexTable sp_samples;
  std::vector<Index> centroid_superpoint;
};

struct LevelFeatures {
  Matrix x;
  Matrix y;
  Matrix z;
  Matrix v;
  Matrix fused;
};

struct CascadeTape {
  CascadeInputs inputs;
  CascadeParams params;
  LevelSet levels;
  bool use_relpos = true;
  LevelFeatures features;
  LevelTape neighborhood;
  LevelTape superpoint;
  PoolTape pool;
  LevelTape global;
  FuseTape fusion;
};

struct CascadeOptions {
  LevelSet levels;
  bool use_relpos = true;
  Exec exec = Exec::kSerial;
};

LevelFeatures cascaded_forward(const CascadeInputs& inputs,
                               const CascadeParams& params,
                               const CascadeOptions& options,
                               CascadeTape* tape = nullptr);

// Convenience overload taking the superpoint partition of the point set that
// `centroids` indexes into.
LevelFeatures cascaded_forward(const PointCloud& cloud,
                               const CentroidSet& centroids,
                               const IndexTable& neighbors,
                               const IndexTable& sp_samples,
                               const SuperpointPartition& partition,
                               const CascadeParams& params,
                               const CascadeOptions& options,
                               CascadeTape* tape = nullptr);

struct CascadeGrads {
  CascadeParams params;
  Matrix features;  // N x C, gradient w.r.t. the module's input features
};

CascadeGrads cascaded_backward(const CascadeTape& tape,
                               const Matrix& grad_fused,
                               Exec exec = Exec::kSerial);

// ---------------------------------------------------------------------------
// Full-pairwise baselines.

// Row i gathers f_i against every row of `features`.
Matrix baseline_full_nonlocal(const Matrix& features,
                              const LevelWeights& weights,
                              Exec exec = Exec::kSerial);

struct BaselineEmbeddings {
  Matrix theta;
  Matrix phi;
  Matrix gamma;
  Matrix attention;  // N x N, row-stochastic
  Matrix output;     // N x C'
};

// Scalar-affinity non-local block: softmax_rows(theta phi^T) gamma.
BaselineEmbeddings baseline_scalar_nonlocal(const Matrix& features,
                                            const Matrix& w_theta,
                                            const Matrix& w_phi,
                                            const Matrix& w_gamma);

}  // namespace cnl

#endif  // CNL_NLOPS_HPP_
