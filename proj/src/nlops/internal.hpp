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

#ifndef CNL_SRC_NLOPS_INTERNAL_HPP_
#define CNL_SRC_NLOPS_INTERNAL_HPP_

#include <vector>

#include "cnl/nlops.hpp"

namespace cnl::detail {

// Center vector and neighbor rows of one neighborhood-level gather, with the
// relative-position columns appended when requested. `rows` must already be
// in canonical (ascending) order.
void neighborhood_operands(const Matrix& features, const Matrix& positions,
                           Index center_id, std::span<const Index> rows,
                           bool use_relpos, std::vector<double>& center,
                           Matrix& neighbors);

// Copies the listed rows of `source` into a new matrix.
Matrix gather_rows(const Matrix& source, std::span<const Index> rows);

std::vector<Index> sorted_copy(std::span<const Index> row);

}  // namespace cnl::detail

#endif  // CNL_SRC_NLOPS_INTERNAL_HPP_
