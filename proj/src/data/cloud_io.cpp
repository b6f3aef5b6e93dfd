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

#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>

#include "cnl/data.hpp"

namespace cnl {

ParseError::ParseError(const std::string& path, std::size_t line,
                       const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
      line_(line) {}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() &&
           (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r'))
      ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' &&
           line[end] != '\r')
      ++end;
    if (end > pos) tokens.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return tokens;
}

template <typename T>
bool parse_number(std::string_view token, T& value) {
  const char* first = token.data();
  const char* last = first + token.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  return res.ec == std::errc{} && res.ptr == last;
}

}  // namespace

void save_cloud(const PointCloud& cloud, const std::string& path) {
  validate(cloud);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  const std::size_t n = cloud.size();
  const std::size_t c = cloud.features.cols();
  out << n << ' ' << c << ' ' << cloud.num_classes << '\n';
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    line.clear();
    for (double v : cloud.positions.row(i)) {
      append_number(line, v);
      line += ' ';
    }
    for (double v : cloud.features.row(i)) {
      append_number(line, v);
      line += ' ';
    }
    line += std::to_string(cloud.labeled() ? cloud.labels[i] : -1);
    line += '\n';
    out << line;
  }
  if (!out) throw IoError(path + ": write failed");
}

PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");

  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  const auto header = split(line);
  std::size_t n = 0, c = 0;
  int classes = 0;
  if (header.size() != 3 || !parse_number(header[0], n) ||
      !parse_number(header[1], c) || !parse_number(header[2], classes))
    throw ParseError(path, 1, "header must be \"N C num_classes\"");
  if (n < 1) throw ParseError(path, 1, "N must be at least 1");
  if (c < 3) throw ParseError(path, 1, "C must be at least 3");
  if (classes < 0) throw ParseError(path, 1, "num_classes must be >= 0");

  PointCloud cloud;
  cloud.num_classes = classes;
  cloud.positions = Matrix(n, 3);
  cloud.features = Matrix(n, c);
  std::vector<int> labels(n);
  bool any_labeled = false, any_unlabeled = false;
  const std::size_t width = 3 + c + 1;

  for (std::size_t i = 0; i < n; ++i) {
    ++lineno;
    if (!std::getline(in, line))
      throw ParseError(path, lineno,
                       "expected " + std::to_string(n) + " data lines, found " +
                           std::to_string(i));
    const auto tokens = split(line);
    if (tokens.size() != width)
      throw ParseError(path, lineno,
                       "expected " + std::to_string(width) + " fields, found " +
                           std::to_string(tokens.size()));
    for (std::size_t k = 0; k < 3 + c; ++k) {
      double v = 0.0;
      if (!parse_number(tokens[k], v) || !std::isfinite(v))
        throw ParseError(path, lineno,
                         "bad number '" + std::string(tokens[k]) + "'");
      if (k < 3)
        cloud.positions(i, k) = v;
      else
        cloud.features(i, k - 3) = v;
    }
    int label = 0;
    if (!parse_number(tokens.back(), label))
      throw ParseError(path, lineno,
                       "bad label '" + std::string(tokens.back()) + "'");
    if (label == -1) {
      any_unlabeled = true;
    } else if (label < 0 || label >= classes) {
      throw ParseError(path, lineno,
                       "label " + std::to_string(label) + " outside [0, " +
                           std::to_string(classes) + ")");
    } else {
      any_labeled = true;
    }
    if (any_labeled && any_unlabeled)
      throw ParseError(path, lineno, "mix of labeled and unlabeled points");
    labels[i] = label;
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!split(line).empty())
      throw ParseError(path, lineno,
                       "more than " + std::to_string(n) + " data lines");
  }
  if (any_labeled) cloud.labels = std::move(labels);
  return cloud;
}

}  // namespace cnl
