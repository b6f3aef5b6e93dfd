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

#ifndef CNL_TYPES_HPP_
#define CNL_TYPES_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cnl/memstats.hpp"

namespace cnl {

using Index = std::int64_t;

// Selects between the serial reference kernels and their OpenMP
// counterparts. Both produce bit-identical results.
enum class Exec { kSerial, kParallel };

/// Raised when an operation receives structurally valid but degenerate input
/// (an empty neighbor set, a superpoint with no centroids, ...).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Storage goes through TrackingAllocator
/// so the bench command can report a transient-memory high-water mark.
class Matrix {
 public:
  using Storage = std::vector<double, TrackingAllocator<double>>;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols,
         std::initializer_list<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Exact element-wise equality.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Storage data_;
};

/// Row-compressed table of indices; every row may have its own length.
/// Neighbor tables use a constant row length, superpoint samples may carry
/// empty rows for degenerate superpoints.
class IndexTable {
 public:
  IndexTable() : offsets_{0} {}
  IndexTable(std::size_t rows, std::size_t cols, Index fill = 0);

  static IndexTable from_rows(const std::vector<std::vector<Index>>& rows);

  std::size_t rows() const noexcept { return offsets_.size() - 1; }
  std::size_t row_size(std::size_t r) const noexcept {
    return offsets_[r + 1] - offsets_[r];
  }
  std::size_t total() const noexcept { return values_.size(); }

  std::span<Index> row(std::size_t r) noexcept {
    return {values_.data() + offsets_[r], row_size(r)};
  }
  std::span<const Index> row(std::size_t r) const noexcept {
    return {values_.data() + offsets_[r], row_size(r)};
  }

  void push_row(std::span<const Index> values);

  friend bool operator==(const IndexTable&, const IndexTable&) = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Index> values_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace cnl

#endif  // CNL_TYPES_HPP_
