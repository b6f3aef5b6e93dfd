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

#include "cnl/types.hpp"

#include <algorithm>

namespace cnl {

Matrix::Matrix(std::size_t rows, std::size_t cols,
               std::initializer_list<double> values)
    : rows_(rows), cols_(cols), data_(values.begin(), values.end()) {
  require(values.size() == rows * cols,
          "Matrix: initializer size does not match shape");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

IndexTable::IndexTable(std::size_t rows, std::size_t cols, Index fill)
    : offsets_(rows + 1), values_(rows * cols, fill) {
  for (std::size_t r = 0; r <= rows; ++r) offsets_[r] = r * cols;
}

IndexTable IndexTable::from_rows(const std::vector<std::vector<Index>>& rows) {
  IndexTable table;
  for (const auto& r : rows) table.push_row(r);
  return table;
}

void IndexTable::push_row(std::span<const Index> values) {
  values_.insert(values_.end(), values.begin(), values.end());
  offsets_.push_back(values_.size());
}

}  // namespace cnl
