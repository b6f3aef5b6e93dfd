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

#ifndef CNL_TESTS_TEST_UTIL_HPP_
#define CNL_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>
#include <string>

#include "cnl/geom.hpp"
#include "cnl/net.hpp"
#include "cnl/rng.hpp"
#include "cnl/types.hpp"

namespace cnl::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols,
                            std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

inline double max_abs_diff(std::span<const double> a,
                           std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a[k] - b[k]));
  return worst;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return max_abs_diff(a.values(), b.values());
}

// Uniform points in [0, extent)^3; features are xyz followed by `extra`
// random columns, labels uniform in [0, classes).
inline PointCloud random_cloud(std::size_t n, std::size_t extra, int classes,
                               std::uint64_t seed, double extent = 2.0) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.positions = Matrix(n, 3);
  cloud.features = Matrix(n, 3 + extra);
  cloud.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      cloud.positions(i, c) = rng.uniform(0.0, extent);
      cloud.features(i, c) = cloud.positions(i, c);
    }
    for (std::size_t c = 0; c < extra; ++c)
      cloud.features(i, 3 + c) = rng.uniform();
    cloud.labels.push_back(static_cast<int>(rng.below(
        static_cast<std::uint64_t>(classes))));
  }
  return cloud;
}

// N = 64 scale network: stages of 16, 8, 4, 2 centroids, widths <= 8.
inline NetworkConfig miniature_config() {
  NetworkConfig c;
  c.stage_m = {16, 8, 4, 2};
  c.stage_k = {8, 4, 4, 2};
  c.stage_d = {4, 6, 6, 8};
  c.stage_dplus = {6, 8, 8, 8};
  c.decoder_widths = {8, 8, 6, 6};
  c.k_sp = 3;
  c.n_sp_cap = 4;
  c.cell_size = 1.0;
  c.input_features = 6;
  c.num_classes = 4;
  return c;
}

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  // Parameters whose +-step evaluations land on different pieces of the
  // network (a rectifier flips sign or a pooling winner changes). The
  // difference quotient is not a derivative there, so they are not compared.
  std::size_t kinks = 0;
  double worst = 0.0;  // worst diff / max(scale, abs_floor)
  std::string worst_tensor;
};

// Which piece of the piecewise-smooth network a forward pass ran on.
struct PieceSignature {
  std::vector<bool> active;
  std::vector<IndexTable> winners;
};

inline PieceSignature piece_signature(const NetworkTape& tape) {
  PieceSignature sig;
  auto add = [&](const Matrix& pre) {
    for (double v : pre.values()) sig.active.push_back(v > 0.0);
  };
  for (const auto& stage : tape.stages) {
    add(stage.tape.fusion.pre_activation);
    sig.winners.push_back(stage.tape.pool.argmax);
  }
  for (const auto& block : tape.decoder) add(block.pre_activation);
  return sig;
}

// True when `sig` ran on the same piece as `base`. A pooling winner may move
// between candidates that were equal up to rounding in the base pass; the
// max is smooth across such ties.
inline bool same_piece(const PieceSignature& sig, const PieceSignature& base,
                       const NetworkTape& base_tape) {
  if (sig.active != base.active) return false;
  for (std::size_t s = 0; s < base.winners.size(); ++s) {
    const IndexTable& a = base.winners[s];
    const IndexTable& b = sig.winners[s];
    if (a == b) continue;
    if (a.rows() != b.rows()) return false;
    const Matrix& y = base_tape.stages[s].tape.features.y;
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t d = 0; d < a.row_size(r); ++d) {
        const Index i = a.row(r)[d], j = b.row(r)[d];
        if (i == j) continue;
        const double u = y(static_cast<std::size_t>(i), d);
        const double v = y(static_cast<std::size_t>(j), d);
        if (std::abs(u - v) > 1e-12 * std::max(1.0, std::abs(u))) return false;
      }
  }
  return true;
}

/// Gives every bias a small random value so the rectifiers do not all sit
/// exactly at zero for inputs that are identically zero.
inline NetworkParams randomize_biases(NetworkParams params, std::uint64_t seed,
                                      double scale = 0.1) {
  for (auto& [name, tensor] : named_tensors(params))
    if (name.ends_with("bias"))
      *tensor = random_matrix(tensor->rows(), tensor->cols(), seed++, -scale,
                              scale);
  return params;
}

/// Central differences of L = sum(logits .* probe) against
/// network_backward for every scalar parameter.
inline GradientCheck check_network_gradients(const PointCloud& cloud,
                                             const NetworkConfig& config,
                                             NetworkParams params,
                                             std::uint64_t seed,
                                             double rel_tol = 1e-4,
                                             double abs_floor = 1e-8,
                                             double step = 1e-5) {
  NetworkTape tape;
  const Matrix logits = network_forward(cloud, config, params, Exec::kSerial,
                                        &tape);
  const Matrix probe = random_matrix(logits.rows(), logits.cols(), seed);
  const NetworkParams grads =
      network_backward(tape, config, params, probe, Exec::kSerial);
  const PieceSignature base = piece_signature(tape);
  bool smooth = true;
  auto objective = [&]() {
    NetworkTape t;
    const Matrix out = network_forward(cloud, config, params, Exec::kSerial, &t);
    smooth = smooth && same_piece(piece_signature(t), base, tape);
    long double total = 0.0L;
    for (std::size_t k = 0; k < out.size(); ++k)
      total += static_cast<long double>(out.values()[k]) * probe.values()[k];
    return total;
  };
  GradientCheck result;
  auto slots = named_tensors(params);
  const auto analytic = named_tensors(grads);
  for (std::size_t t = 0; t < slots.size(); ++t) {
    auto values = slots[t].tensor->values();
    const auto g = analytic[t].second->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      smooth = true;
      values[k] = saved + step;
      const long double up = objective();
      values[k] = saved - step;
      const long double down = objective();
      values[k] = saved;
      if (!smooth) {
        ++result.kinks;
        continue;
      }
      const double numeric = static_cast<double>((up - down) / (2.0L * step));
      const double diff = std::abs(numeric - g[k]);
      const double scale = std::max(std::abs(numeric), std::abs(g[k]));
      const bool ok = diff <= abs_floor || diff <= rel_tol * scale;
      const double err = diff / std::max(scale, abs_floor);
      ++result.checked;
      if (!ok) ++result.failures;
      if (err > result.worst) {
        result.worst = err;
        result.worst_tensor = slots[t].name;
      }
    }
  }
  return result;
}

}  // namespace cnl::testing

#endif  // CNL_TESTS_TEST_UTIL_HPP_
