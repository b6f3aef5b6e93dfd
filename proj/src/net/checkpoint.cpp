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

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cnl/net.hpp"

namespace cnl {
namespace {

constexpr char kMagic[8] = {'C', 'N', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint64_t kMaxName = 1 << 16;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const TensorList& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kMagic, sizeof kMagic);
  for (const auto& [name, m] : tensors) {
    require(!name.empty(), "write_checkpoint: empty tensor name");
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, 2);
    put_u64(out, m.rows());
    put_u64(out, m.cols());
    const auto v = m.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  put_u64(out, 0);
  if (!out) throw std::runtime_error(path + ": write failed");
}

TensorList read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) ||
      std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  TensorList tensors;
  for (;;) {
    const std::uint64_t len = get_u64(in, path);
    if (len == 0) break;
    if (len > kMaxName) throw std::runtime_error(path + ": corrupt tensor name");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len)))
      throw std::runtime_error(path + ": truncated checkpoint");
    const std::uint64_t rank = get_u64(in, path);
    if (rank != 2)
      throw std::runtime_error(path + ": tensor " + name + " has rank " +
                               std::to_string(rank));
    const std::uint64_t rows = get_u64(in, path);
    const std::uint64_t cols = get_u64(in, path);
    if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols)
      throw std::runtime_error(path + ": tensor " + name + " is too large");
    Matrix m(rows, cols);
    auto v = m.values();
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double))))
      throw std::runtime_error(path + ": truncated checkpoint");
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return tensors;
}

void save_checkpoint(const std::string& path, const NetworkParams& params) {
  TensorList tensors;
  for (const auto& [name, m] : named_tensors(params))
    tensors.emplace_back(name, *m);
  write_checkpoint(path, tensors);
}

void load_checkpoint(const std::string& path, NetworkParams& params) {
  const TensorList tensors = read_checkpoint(path);
  auto slots = named_tensors(params);
  if (tensors.size() != slots.size())
    throw std::runtime_error(path + ": expected " +
                             std::to_string(slots.size()) + " tensors, found " +
                             std::to_string(tensors.size()));
  for (std::size_t t = 0; t < slots.size(); ++t) {
    const auto& [name, m] = tensors[t];
    if (name != slots[t].name)
      throw std::runtime_error(path + ": expected tensor " + slots[t].name +
                               ", found " + name);
    if (!m.same_shape(*slots[t].tensor))
      throw std::runtime_error(path + ": tensor " + name + " has shape " +
                               std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()));
  }
  for (std::size_t t = 0; t < slots.size(); ++t)
    *slots[t].tensor = tensors[t].second;
}

}  // namespace cnl
