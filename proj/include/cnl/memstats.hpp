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

#ifndef CNL_MEMSTATS_HPP_
#define CNL_MEMSTATS_HPP_

#include <cstddef>
#include <cstdint>
#include <new>

namespace cnl {

// High-water-mark accounting for every buffer allocated through
// TrackingAllocator. This is the transient-memory statistic reported by the
// bench command; it does not see allocations made elsewhere.
namespace memstats {

void on_allocate(std::size_t bytes) noexcept;
void on_deallocate(std::size_t bytes) noexcept;

std::int64_t current_bytes() noexcept;
std::int64_t peak_bytes() noexcept;

// Resets the peak to the current live byte count.
void reset_peak() noexcept;

}  // namespace memstats

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    auto* p = static_cast<T*>(::operator new(n * sizeof(T)));
    memstats::on_allocate(n * sizeof(T));
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    memstats::on_deallocate(n * sizeof(T));
    ::operator delete(p);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace cnl

#endif  // CNL_MEMSTATS_HPP_
