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
#include <string>

#include "cnl/net.hpp"
#include "cnl/rng.hpp"

namespace cnl {

void NetworkConfig::validate() const {
  auto four = [](const std::vector<std::size_t>& v, const char* name) {
    require(v.size() == kStages,
            std::string(name) + " must list exactly 4 stages");
    for (std::size_t x : v)
      require(x >= 1, std::string(name) + " entries must be >= 1");
  };
  four(stage_m, "stage_m");
  four(stage_k, "stage_k");
  four(stage_d, "stage_d");
  four(stage_dplus, "stage_dplus");
  four(decoder_widths, "decoder_widths");
  for (std::size_t s = 1; s < kStages; ++s) {
    require(stage_m[s] < stage_m[s - 1], "stage_m must be strictly decreasing");
    require(stage_k[s] <= stage_m[s - 1],
            "stage_k[" + std::to_string(s) +
                "] exceeds the previous stage's point count");
  }
  require(k_sp >= 1, "k_sp must be >= 1");
  require(n_sp_cap >= 1, "n_sp_cap must be >= 1");
  require(cell_size > 0.0 && std::isfinite(cell_size),
          "cell_size must be positive");
  require(input_features >= 3, "input_features must be >= 3");
  require(num_classes >= 1, "num_classes must be >= 1");
}

namespace {

CascadeParams cascade_shapes(std::size_t c_in, std::size_t d, std::size_t dplus,
                             bool relpos) {
  CascadeParams p;
  const std::size_t first = c_in + (relpos ? 3 : 0);
  p.levels[0] = {Matrix(first, d), Matrix(first, d)};
  p.levels[1] = {Matrix(d, d), Matrix(d, d)};
  p.levels[2] = {Matrix(d, d), Matrix(d, d)};
  p.gamma = Matrix(3 * d, dplus);
  p.gamma_bias = Matrix(1, dplus);
  return p;
}

std::size_t decoder_coarse_width(const NetworkConfig& c, std::size_t step) {
  return step == 0 ? c.stage_dplus[kStages - 1] : c.decoder_widths[step - 1];
}

std::size_t decoder_skip_width(const NetworkConfig& c, std::size_t step) {
  return step + 1 < kStages ? c.stage_dplus[kStages - 2 - step]
                            : c.input_features;
}

bool is_bias(const std::string& name) {
  return name.ends_with("bias");
}

}  // namespace

NetworkParams zero_params(const NetworkConfig& config) {
  config.validate();
  NetworkParams p;
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t c_in =
        s == 0 ? config.input_features : config.stage_dplus[s - 1];
    p.encoder[s] = cascade_shapes(c_in, config.stage_d[s],
                                  config.stage_dplus[s], config.use_relpos);
  }
  for (std::size_t t = 0; t < kStages; ++t) {
    const std::size_t in =
        decoder_coarse_width(config, t) + decoder_skip_width(config, t);
    p.decoder[t] = {Matrix(in, config.decoder_widths[t]),
                    Matrix(1, config.decoder_widths[t])};
  }
  const auto classes = static_cast<std::size_t>(config.num_classes);
  p.classifier = {Matrix(config.decoder_widths[kStages - 1], classes),
                  Matrix(1, classes)};
  return p;
}

std::vector<NamedTensor> named_tensors(NetworkParams& params) {
  std::vector<NamedTensor> out;
  const char* level_names[3] = {"neighborhood", "superpoint", "global"};
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::string prefix = "encoder" + std::to_string(s) + ".";
    auto& enc = params.encoder[s];
    for (std::size_t l = 0; l < 3; ++l) {
      out.push_back({prefix + level_names[l] + ".theta", &enc.levels[l].theta});
      out.push_back({prefix + level_names[l] + ".phi", &enc.levels[l].phi});
    }
    out.push_back({prefix + "gamma", &enc.gamma});
    out.push_back({prefix + "gamma_bias", &enc.gamma_bias});
  }
  for (std::size_t t = 0; t < kStages; ++t) {
    const std::string prefix = "decoder" + std::to_string(t) + ".";
    out.push_back({prefix + "weight", &params.decoder[t].weight});
    out.push_back({prefix + "bias", &params.decoder[t].bias});
  }
  out.push_back({"classifier.weight", &params.classifier.weight});
  out.push_back({"classifier.bias", &params.classifier.bias});
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_tensors(
    const NetworkParams& params) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (const auto& t : named_tensors(const_cast<NetworkParams&>(params)))
    out.emplace_back(t.name, t.tensor);
  return out;
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  NetworkParams p = zero_params(config);
  Rng rng(seed);
  for (auto& [name, tensor] : named_tensors(p)) {
    if (is_bias(name)) continue;
    const double bound = std::sqrt(
        6.0 / static_cast<double>(tensor->rows() + tensor->cols()));
    for (double& v : tensor->values()) v = rng.uniform(-bound, bound);
  }
  return p;
}

// ---------------------------------------------------------------------------

namespace {

// x * W + b, optionally rectified; `pre` receives the affine output.
Matrix affine(const Matrix& in, const DenseParams& dense, bool relu,
              Matrix* pre) {
  require(in.cols() == dense.weight.rows(), "affine: input width mismatch");
  const std::size_t out_dim = dense.weight.cols();
  Matrix z(in.rows(), out_dim);
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto zr = z.row(i);
    const auto xr = in.row(i);
    for (std::size_t r = 0; r < xr.size(); ++r) {
      const auto w = dense.weight.row(r);
      for (std::size_t o = 0; o < out_dim; ++o) zr[o] += xr[r] * w[o];
    }
    for (std::size_t o = 0; o < out_dim; ++o) zr[o] += dense.bias(0, o);
  }
  if (!relu) return z;
  Matrix out = z;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  if (pre) *pre = std::move(z);
  return out;
}

// Accumulates weight/bias gradients into `grads`; returns d loss / d input.
Matrix affine_backward(const Matrix& in, const Matrix* pre,
                       const DenseParams& dense, const Matrix& grad_out,
                       DenseParams& grads) {
  const std::size_t out_dim = dense.weight.cols();
  Matrix g = grad_out;
  if (pre)
    for (std::size_t k = 0; k < g.size(); ++k)
      if (!(pre->values()[k] > 0.0)) g.values()[k] = 0.0;
  Matrix grad_in(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    const auto gr = g.row(i);
    const auto xr = in.row(i);
    for (std::size_t r = 0; r < xr.size(); ++r) {
      auto gw = grads.weight.row(r);
      const auto w = dense.weight.row(r);
      double back = 0.0;
      for (std::size_t o = 0; o < out_dim; ++o) {
        gw[o] += xr[r] * gr[o];
        back += w[o] * gr[o];
      }
      grad_in(i, r) = back;
    }
    for (std::size_t o = 0; o < out_dim; ++o) grads.bias(0, o) += gr[o];
  }
  return grad_in;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "concatenation: row count mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = out.row(i);
    std::ranges::copy(a.row(i), row.begin());
    std::ranges::copy(b.row(i), row.begin() + static_cast<long>(a.cols()));
  }
  return out;
}

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t k = 0; k < dst.size(); ++k)
    dst.values()[k] += src.values()[k];
}

}  // namespace

EncoderResult encoder_forward(const PointCloud& sorted,
                              const NetworkConfig& config,
                              const NetworkParams& params, Exec exec) {
  config.validate();
  const std::size_t n = sorted.size();
  if (n < config.stage_m[0])
    throw std::invalid_argument(
        "encoder_forward: cloud has " + std::to_string(n) +
        " points but the first stage samples " +
        std::to_string(config.stage_m[0]) + "; split into blocks first");
  require(config.stage_k[0] <= n, "stage_k[0] exceeds the cloud size");
  require(sorted.features.cols() == config.input_features,
          "encoder_forward: feature width does not match input_features");

  const SuperpointPartition partition =
      voxel_partition(sorted.positions, config.cell_size, config.n_sp_cap);

  EncoderResult result;
  const Matrix* positions = &sorted.positions;
  const Matrix* features = &sorted.features;
  std::vector<Index> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<Index>(i);

  for (std::size_t s = 0; s < kStages; ++s) {
    StageRecord& rec = result.stages[s];
    rec.centroids = farthest_point_sample(*positions, config.stage_m[s], exec);
    rec.original_ids.resize(rec.centroids.size());
    for (std::size_t i = 0; i < rec.centroids.size(); ++i)
      rec.original_ids[i] =
          ids[static_cast<std::size_t>(rec.centroids.indices[i])];

    CascadeInputs in;
    in.features = *features;
    in.positions = *positions;
    in.centroid_ids = rec.centroids.indices;
    in.neighbors = knn(*positions, rec.centroids.positions, config.stage_k[s],
                       exec, KnnMethod::kGrid);
    in.centroid_superpoint = centroid_superpoints(partition, rec.original_ids);
    in.sp_samples = sample_superpoint_centroids(
        in.centroid_superpoint, config.k_sp, Rng::mix(config.sample_seed, s));

    const CascadeOptions options{config.levels, config.use_relpos, exec};
    rec.output =
        cascaded_forward(in, params.encoder[s], options, &rec.tape).fused;

    positions = &rec.centroids.positions;
    features = &rec.output;
    ids = rec.original_ids;
  }
  return result;
}

Matrix interpolate(const Matrix& fine_positions, const Matrix& coarse_positions,
                   const Matrix& coarse_features, InterpolationRecord* record) {
  require(coarse_positions.rows() >= 1,
          "feature_propagation: needs at least one coarse point");
  require(coarse_features.rows() == coarse_positions.rows(),
          "feature_propagation: coarse features/positions mismatch");
  const std::size_t k = std::min<std::size_t>(3, coarse_positions.rows());
  const IndexTable sources =
      knn(coarse_positions, fine_positions, k, Exec::kSerial, KnnMethod::kGrid);
  Matrix weights(fine_positions.rows(), k);
  Matrix out(fine_positions.rows(), coarse_features.cols());
  for (std::size_t f = 0; f < fine_positions.rows(); ++f) {
    const auto src = sources.row(f);
    auto w = weights.row(f);
    std::size_t exact = k;
    double d2[3];
    for (std::size_t t = 0; t < k; ++t) {
      d2[t] = squared_distance(
          fine_positions.row(f),
          coarse_positions.row(static_cast<std::size_t>(src[t])));
      if (exact == k && std::sqrt(d2[t]) < 1e-9) exact = t;
    }
    if (exact < k) {
      w[exact] = 1.0;
    } else {
      double total = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        w[t] = 1.0 / (d2[t] + 1e-8);
        total += w[t];
      }
      for (std::size_t t = 0; t < k; ++t) w[t] /= total;
    }
    auto dst = out.row(f);
    for (std::size_t t = 0; t < k; ++t) {
      if (w[t] == 0.0) continue;
      const auto cf = coarse_features.row(static_cast<std::size_t>(src[t]));
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w[t] * cf[c];
    }
  }
  if (record) {
    record->sources = sources;
    record->weights = std::move(weights);
  }
  return out;
}

Matrix feature_propagation(const Matrix& fine_positions,
                           const Matrix& coarse_positions,
                           const Matrix& coarse_features,
                           const Matrix& skip_features,
                           const DenseParams& block,
                           PropagationRecord* record) {
  require(skip_features.rows() == fine_positions.rows(),
          "feature_propagation: skip rows must match fine points");
  Matrix interpolated =
      interpolate(fine_positions, coarse_positions, coarse_features,
                  record ? &record->interpolation : nullptr);
  Matrix concat = hconcat(interpolated, skip_features);
  Matrix pre;
  Matrix out = affine(concat, block, true, &pre);
  if (record) {
    record->concat = std::move(concat);
    record->pre_activation = std::move(pre);
    record->output = out;
  }
  return out;
}

Matrix network_forward(const PointCloud& cloud, const NetworkConfig& config,
                       const NetworkParams& params, Exec exec,
                       NetworkTape* tape) {
  validate(cloud);
  NetworkTape local;
  NetworkTape& t = tape ? *tape : local;
  t.order = canonical_order(cloud);
  t.sorted = permute(cloud, t.order);

  EncoderResult enc = encoder_forward(t.sorted, config, params, exec);
  t.stages = std::move(enc.stages);

  auto level_positions = [&](int level) -> const Matrix& {
    return level < 0 ? t.sorted.positions
                     : t.stages[static_cast<std::size_t>(level)].centroids.positions;
  };
  const Matrix* coarse = &t.stages[kStages - 1].output;
  for (std::size_t step = 0; step < kStages; ++step) {
    const int coarse_level = static_cast<int>(kStages) - 1 - static_cast<int>(step);
    const int fine_level = coarse_level - 1;
    const Matrix& skip =
        fine_level < 0 ? t.sorted.features
                       : t.stages[static_cast<std::size_t>(fine_level)].output;
    feature_propagation(level_positions(fine_level),
                        level_positions(coarse_level), *coarse, skip,
                        params.decoder[step], &t.decoder[step]);
    coarse = &t.decoder[step].output;
  }
  t.classifier_input = *coarse;
  const Matrix sorted_logits =
      affine(t.classifier_input, params.classifier, false, nullptr);

  Matrix logits(sorted_logits.rows(), sorted_logits.cols());
  for (std::size_t k = 0; k < t.order.size(); ++k)
    std::ranges::copy(sorted_logits.row(k),
                      logits.row(static_cast<std::size_t>(t.order[k])).begin());
  return logits;
}

NetworkParams network_backward(const NetworkTape& tape,
                               const NetworkConfig& config,
                               const NetworkParams& params,
                               const Matrix& grad_logits, Exec exec) {
  const std::size_t n = tape.order.size();
  require(grad_logits.rows() == n &&
              grad_logits.cols() == static_cast<std::size_t>(config.num_classes),
          "network_backward: gradient shape does not match logits");
  NetworkParams grads = zero_params(config);

  Matrix g(n, grad_logits.cols());
  for (std::size_t k = 0; k < n; ++k)
    std::ranges::copy(grad_logits.row(static_cast<std::size_t>(tape.order[k])),
                      g.row(k).begin());

  Matrix grad = affine_backward(tape.classifier_input, nullptr,
                                params.classifier, g, grads.classifier);

  std::array<Matrix, kStages> stage_grads;
  for (std::size_t s = 0; s < kStages; ++s)
    stage_grads[s] = Matrix(tape.stages[s].output.rows(),
                            tape.stages[s].output.cols());

  for (std::size_t step = kStages; step-- > 0;) {
    const PropagationRecord& rec = tape.decoder[step];
    const Matrix grad_concat = affine_backward(
        rec.concat, &rec.pre_activation, params.decoder[step], grad,
        grads.decoder[step]);
    const std::size_t coarse_level = kStages - 1 - step;
    const Matrix& coarse_out = step == 0 ? tape.stages[kStages - 1].output
                                         : tape.decoder[step - 1].output;
    const std::size_t coarse_width = coarse_out.cols();

    Matrix grad_coarse(coarse_out.rows(), coarse_width);
    const auto& interp = rec.interpolation;
    for (std::size_t f = 0; f < grad_concat.rows(); ++f) {
      const auto src = interp.sources.row(f);
      const auto w = interp.weights.row(f);
      const auto gf = grad_concat.row(f);
      for (std::size_t t = 0; t < src.size(); ++t) {
        if (w[t] == 0.0) continue;
        auto dst = grad_coarse.row(static_cast<std::size_t>(src[t]));
        for (std::size_t c = 0; c < coarse_width; ++c) dst[c] += w[t] * gf[c];
      }
    }
    if (step + 1 < kStages) {
      // Skip half flows into the matching encoder stage output.
      Matrix& skip_grad = stage_grads[coarse_level - 1];
      for (std::size_t f = 0; f < grad_concat.rows(); ++f)
        for (std::size_t c = 0; c < skip_grad.cols(); ++c)
          skip_grad(f, c) += grad_concat(f, coarse_width + c);
    }
    if (step == 0) {
      add_into(stage_grads[kStages - 1], grad_coarse);
    } else {
      grad = std::move(grad_coarse);
    }
  }

  for (std::size_t s = kStages; s-- > 0;) {
    const CascadeGrads cg =
        cascaded_backward(tape.stages[s].tape, stage_grads[s], exec);
    CascadeParams& dst = grads.encoder[s];
    for (std::size_t l = 0; l < 3; ++l) {
      add_into(dst.levels[l].theta, cg.params.levels[l].theta);
      add_into(dst.levels[l].phi, cg.params.levels[l].phi);
    }
    add_into(dst.gamma, cg.params.gamma);
    add_into(dst.gamma_bias, cg.params.gamma_bias);
    if (s > 0) add_into(stage_grads[s - 1], cg.features);
  }
  return grads;
}

}  // namespace cnl
