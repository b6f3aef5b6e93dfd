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
#include <numeric>
#include <string>

#include "cnl/net.hpp"
#include "cnl/rng.hpp"

namespace cnl {

void TrainConfig::validate() const {
  require(base_lr > 0.0, "base_lr must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(momentum >= 0.0, "momentum must be non-negative");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(decay_factor > 0.0 && decay_factor <= 1.0,
          "decay_factor must lie in (0, 1]");
  require(decay_every >= 1, "decay_every must be >= 1");
  require(total_epochs >= 1, "total_epochs must be >= 1");
}

LossResult cross_entropy_loss(const Matrix& logits,
                              const std::vector<int>& labels,
                              const std::vector<double>& class_weights) {
  const std::size_t n = logits.rows();
  const std::size_t classes = logits.cols();
  require(labels.size() == n, "cross_entropy_loss: one label per row required");
  require(class_weights.empty() || class_weights.size() == classes,
          "cross_entropy_loss: one weight per class required");

  LossResult result;
  result.grad = Matrix(n, classes);
  double total_weight = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    require(label >= 0 && static_cast<std::size_t>(label) < classes,
            "cross_entropy_loss: label out of range");
    const double w =
        class_weights.empty() ? 1.0 : class_weights[static_cast<std::size_t>(label)];
    const auto row = logits.row(i);
    const double peak = *std::ranges::max_element(row);
    double denom = 0.0;
    for (double v : row) denom += std::exp(v - peak);
    const double log_denom = std::log(denom);
    result.loss += w * (log_denom - (row[static_cast<std::size_t>(label)] - peak));
    auto g = result.grad.row(i);
    for (std::size_t c = 0; c < classes; ++c)
      g[c] = w * std::exp(row[c] - peak - log_denom);
    g[static_cast<std::size_t>(label)] -= w;
    total_weight += w;
  }
  if (total_weight > 0.0) {
    result.loss /= total_weight;
    for (double& v : result.grad.values()) v /= total_weight;
  }
  return result;
}

std::vector<double> inverse_frequency_weights(const std::vector<int>& labels,
                                              int num_classes) {
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int l : labels) counts[static_cast<std::size_t>(l)] += 1.0;
  std::vector<double> weights(counts.size(), 0.0);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0.0) continue;
    weights[c] = 1.0 / counts[c];
    sum += weights[c];
    ++present;
  }
  if (present > 0)
    for (double& w : weights) w *= static_cast<double>(present) / sum;
  return weights;
}

OptimizerState make_optimizer_state(const NetworkConfig& config) {
  return {zero_params(config)};
}

void sgd_step(Matrix& param, const Matrix& grad, Matrix& buffer, double lr,
              double momentum, double weight_decay) {
  require(param.same_shape(grad) && param.same_shape(buffer),
          "sgd_step: parameter, gradient and buffer shapes differ");
  auto p = param.values();
  const auto g = grad.values();
  auto b = buffer.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double step = g[k] + weight_decay * p[k];
    b[k] = momentum * b[k] + step;
    p[k] -= lr * b[k];
  }
}

void sgd_step(NetworkParams& params, const NetworkParams& grads,
              OptimizerState& state, double lr, double momentum,
              double weight_decay) {
  auto p = named_tensors(params);
  auto g = named_tensors(grads);
  auto b = named_tensors(state.momentum);
  require(p.size() == g.size() && p.size() == b.size(),
          "sgd_step: parameter sets differ");
  for (std::size_t t = 0; t < p.size(); ++t)
    sgd_step(*p[t].tensor, *g[t].second, *b[t].tensor, lr, momentum,
             weight_decay);
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
  const auto steps = static_cast<double>(epoch / config.decay_every);
  return config.base_lr * std::pow(config.decay_factor, steps);
}

std::vector<std::size_t> epoch_order(std::size_t blocks, std::uint64_t seed,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(blocks);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(Rng::mix(seed, epoch));
  for (std::size_t i = blocks; i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    out[i] = static_cast<int>(std::ranges::max_element(row) - row.begin());
  }
  return out;
}

namespace {

std::uint64_t fingerprint(const std::vector<std::size_t>& order) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t v : order) {
    h ^= static_cast<std::uint64_t>(v);
    h *= 1099511628211ULL;
  }
  return h;
}

void accumulate(NetworkParams& total, const NetworkParams& part) {
  auto t = named_tensors(total);
  const auto p = named_tensors(part);
  for (std::size_t k = 0; k < t.size(); ++k) {
    auto dst = t[k].tensor->values();
    const auto src = p[k].second->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void scale(NetworkParams& params, double factor) {
  for (auto& t : named_tensors(params))
    for (double& v : t.tensor->values()) v *= factor;
}

}  // namespace

EpochStats train_epoch(const std::vector<PointCloud>& blocks,
                       const NetworkConfig& config, const TrainConfig& train,
                       NetworkParams& params, OptimizerState& state,
                       std::size_t epoch, Exec exec) {
  require(!blocks.empty(), "train_epoch: dataset is empty");
  EpochStats stats;
  stats.epoch = epoch;
  stats.lr = lr_schedule(epoch, train);
  const auto order = epoch_order(blocks.size(), train.seed, epoch);
  stats.order_hash = fingerprint(order);

  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t points = 0;
  for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
    const std::size_t end = std::min(order.size(), start + train.batch_size);
    // Gradients are summed in ascending block index within the batch.
    std::vector<std::size_t> batch(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(end));
    std::ranges::sort(batch);
    NetworkParams batch_grads = zero_params(config);
    for (std::size_t b : batch) {
      const PointCloud& block = blocks[b];
      require(block.labeled(), "train_epoch: training blocks need labels");
      NetworkTape tape;
      const Matrix logits = network_forward(block, config, params, exec, &tape);
      const auto weights =
          train.class_weighting
              ? inverse_frequency_weights(block.labels, config.num_classes)
              : std::vector<double>{};
      const LossResult loss = cross_entropy_loss(logits, block.labels, weights);
      loss_sum += loss.loss;
      const auto pred = predict(logits);
      for (std::size_t i = 0; i < pred.size(); ++i)
        correct += pred[i] == block.labels[i] ? 1 : 0;
      points += pred.size();
      accumulate(batch_grads,
                 network_backward(tape, config, params, loss.grad, exec));
    }
    scale(batch_grads, 1.0 / static_cast<double>(end - start));
    sgd_step(params, batch_grads, state, stats.lr, train.momentum,
             train.weight_decay);
  }
  stats.loss = loss_sum / static_cast<double>(blocks.size());
  stats.accuracy =
      points ? static_cast<double>(correct) / static_cast<double>(points) : 0.0;
  return stats;
}

}  // namespace cnl
