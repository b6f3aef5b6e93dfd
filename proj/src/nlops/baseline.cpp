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

#include "cnl/nlops.hpp"
#include "cnl/parallel.hpp"

namespace cnl {

Matrix baseline_full_nonlocal(const Matrix& features,
                              const LevelWeights& weights, Exec exec) {
  require(features.rows() >= 1, "baseline_full_nonlocal: need N >= 1");
  Matrix out(features.rows(), weights.out_dim());
  for_each_index(exec, features.rows(), [&](std::size_t i) {
    gather_forward(features.row(i), features, weights, out.row(i), nullptr);
  });
  return out;
}

namespace {

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      const auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += s * src[j];
    }
  }
  return out;
}

}  // namespace

BaselineEmbeddings baseline_scalar_nonlocal(const Matrix& features,
                                            const Matrix& w_theta,
                                            const Matrix& w_phi,
                                            const Matrix& w_gamma) {
  const std::size_t n = features.rows();
  require(n >= 1, "baseline_scalar_nonlocal: need N >= 1");
  require(w_theta.rows() == features.cols() && w_phi.rows() == features.cols() &&
              w_gamma.rows() == features.cols() &&
              w_theta.cols() == w_phi.cols() &&
              w_phi.cols() == w_gamma.cols(),
          "baseline_scalar_nonlocal: weights must all be C x C'");

  BaselineEmbeddings out;
  out.theta = matmul(features, w_theta);
  out.phi = matmul(features, w_phi);
  out.gamma = matmul(features, w_gamma);
  out.attention = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.attention.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < out.theta.cols(); ++c)
        s += out.theta(i, c) * out.phi(j, c);
      row[j] = s;
    }
    const double peak = *std::ranges::max_element(row);
    double total = 0.0;
    for (double& a : row) {
      a = std::exp(a - peak);
      total += a;
    }
    for (double& a : row) a /= total;
  }
  out.output = matmul(out.attention, out.gamma);
  interactions::add(n * n);
  return out;
}

}  // namespace cnl
