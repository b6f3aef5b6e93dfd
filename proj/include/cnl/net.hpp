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

#ifndef CNL_NET_HPP_
#define CNL_NET_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cnl/geom.hpp"
#include "cnl/nlops.hpp"
#include "cnl/types.hpp"

namespace cnl {

inline constexpr std::size_t kStages = 4;

/// Encoder/decoder shape. Every per-stage list has kStages entries; the
/// decoder list runs from the innermost propagation step (stage 4 -> 3) to
/// the outermost (stage 1 -> input points).
struct NetworkConfig {
  std::vector<std::size_t> stage_m{1024, 256, 64, 16};
  std::vector<std::size_t> stage_k{32, 32, 16, 8};
  std::vector<std::size_t> stage_d{32, 64, 128, 256};
  std::vector<std::size_t> stage_dplus{64, 128, 256, 512};
  std::vector<std::size_t> decoder_widths{256, 128, 64, 64};
  std::size_t k_sp = 20;
  std::size_t n_sp_cap = 32;
  double cell_size = 1.0;
  std::size_t input_features = 9;
  int num_classes = 13;
  bool use_relpos = true;
  LevelSet levels;
  std::uint64_t sample_seed = 0;

  // Throws std::invalid_argument naming the first broken invariant.
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

struct DenseParams {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

struct NetworkParams {
  std::array<CascadeParams, kStages> encoder;
  std::array<DenseParams, kStages> decoder;
  DenseParams classifier;
};

/// Named view over every learnable tensor, in a fixed order shared by the
/// optimizer and the checkpoint format.
struct NamedTensor {
  std::string name;
  Matrix* tensor;
};
std::vector<NamedTensor> named_tensors(NetworkParams& params);
std::vector<std::pair<std::string, const Matrix*>> named_tensors(
    const NetworkParams& params);

// Zero tensors shaped like `config` expects.
NetworkParams zero_params(const NetworkConfig& config);

/// Glorot-uniform weights, zero biases; deterministic given seed.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct StageRecord {
  CentroidSet centroids;             // indices into the previous level
  std::vector<Index> original_ids;   // indices into the (sorted) input cloud
  CascadeTape tape;
  Matrix output;                     // M x D+
};

struct InterpolationRecord {
  IndexTable sources;  // fine x min(3, coarse) coarse rows
  Matrix weights;      // same shape, normalized
};

struct PropagationRecord {
  InterpolationRecord interpolation;
  Matrix concat;
  Matrix pre_activation;
  Matrix output;
};

struct NetworkTape {
  std::vector<Index> order;  // canonical order of the input cloud
  PointCloud sorted;
  std::array<StageRecord, kStages> stages;
  std::array<PropagationRecord, kStages> decoder;
  Matrix classifier_input;
};

struct EncoderResult {
  std::array<StageRecord, kStages> stages;
};

/// Four cascaded stages over an already canonically ordered cloud.
EncoderResult encoder_forward(const PointCloud& sorted,
                              const NetworkConfig& config,
                              const NetworkParams& params,
                              Exec exec = Exec::kSerial);

/// Inverse-square-distance interpolation from the 3 nearest coarse points
/// (an exact copy when a coarse point coincides), concatenated with the skip
/// features, then affine + rectifier.
Matrix feature_propagation(const Matrix& fine_positions,
                           const Matrix& coarse_positions,
                           const Matrix& coarse_features,
                           const Matrix& skip_features,
                           const DenseParams& block,
                           PropagationRecord* record = nullptr);

// The interpolation half of feature_propagation.
Matrix interpolate(const Matrix& fine_positions, const Matrix& coarse_positions,
                   const Matrix& coarse_features,
                   InterpolationRecord* record = nullptr);

/// Logits for every input point, in input order. The cloud is put into
/// canonical order internally, so permuting the input permutes the logits.
Matrix network_forward(const PointCloud& cloud, const NetworkConfig& config,
                       const NetworkParams& params, Exec exec = Exec::kSerial,
                       NetworkTape* tape = nullptr);

/// Parameter gradients given d loss / d logits (input order).
NetworkParams network_backward(const NetworkTape& tape,
                               const NetworkConfig& config,
                               const NetworkParams& params,
                               const Matrix& grad_logits,
                               Exec exec = Exec::kSerial);

// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
};

/// Mean cross-entropy over points with a max-shifted log-softmax. With
/// class_weights (one per class) the mean becomes a weighted mean.
LossResult cross_entropy_loss(const Matrix& logits,
                              const std::vector<int>& labels,
                              const std::vector<double>& class_weights = {});

// Inverse-frequency class weights normalized to mean 1 over present classes.
std::vector<double> inverse_frequency_weights(const std::vector<int>& labels,
                                              int num_classes);

struct TrainConfig {
  double base_lr = 0.05;
  std::size_t batch_size = 16;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  double decay_factor = 0.1;
  std::size_t decay_every = 25;
  std::size_t total_epochs = 100;
  std::uint64_t seed = 0;
  bool class_weighting = false;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Momentum buffers, one per learnable tensor, zero-initialized.
struct OptimizerState {
  NetworkParams momentum;
};

OptimizerState make_optimizer_state(const NetworkConfig& config);

/// g' = grad + weight_decay * param; buf = momentum * buf + g';
/// param -= lr * buf.
void sgd_step(Matrix& param, const Matrix& grad, Matrix& buffer, double lr,
              double momentum, double weight_decay);
void sgd_step(NetworkParams& params, const NetworkParams& grads,
              OptimizerState& state, double lr, double momentum,
              double weight_decay);

// base_lr * decay_factor ^ floor(epoch / decay_every).
double lr_schedule(std::size_t epoch, const TrainConfig& config);

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::uint64_t order_hash = 0;  // fingerprint of the shuffled block order
};

// Block order of one epoch: a seeded shuffle keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t blocks, std::uint64_t seed,
                                     std::size_t epoch);

/// One pass over `blocks`: forward, loss, backward per block; gradients are
/// summed in ascending position within each batch, averaged, and applied
/// with one SGD step per batch.
EpochStats train_epoch(const std::vector<PointCloud>& blocks,
                       const NetworkConfig& config, const TrainConfig& train,
                       NetworkParams& params, OptimizerState& state,
                       std::size_t epoch, Exec exec = Exec::kSerial);

// Argmax class per row, ties to the lower class id.
std::vector<int> predict(const Matrix& logits);

// ---------------------------------------------------------------------------
// Checkpoints: "CNLCKPT1", then per tensor a u64 name length, the name
// bytes, a u64 rank, u64 dims and f64 values (all little-endian), ended by a
// zero name length.

using TensorList = std::vector<std::pair<std::string, Matrix>>;

void write_checkpoint(const std::string& path, const TensorList& tensors);
TensorList read_checkpoint(const std::string& path);

void save_checkpoint(const std::string& path, const NetworkParams& params);
// Fills `params` (already shaped by the config); every name and shape must
// match. Throws std::runtime_error otherwise.
void load_checkpoint(const std::string& path, NetworkParams& params);

}  // namespace cnl

#endif  // CNL_NET_HPP_
