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

#include "cnl/memstats.hpp"

#include <atomic>

namespace cnl::memstats {
namespace {

std::atomic<std::int64_t> g_current{0};
std::atomic<std::int64_t> g_peak{0};

}  // namespace

void on_allocate(std::size_t bytes) noexcept {
  const auto now =
      g_current.fetch_add(static_cast<std::int64_t>(bytes)) +
      static_cast<std::int64_t>(bytes);
  auto peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

void on_deallocate(std::size_t bytes) noexcept {
  g_current.fetch_sub(static_cast<std::int64_t>(bytes));
}

std::int64_t current_bytes() noexcept { return g_current.load(); }
std::int64_t peak_bytes() noexcept { return g_peak.load(); }

void reset_peak() noexcept { g_peak.store(g_current.load()); }

}  // namespace cnl::memstats
