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
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string_view>

#include "cnl/cli.hpp"

namespace cnl::cli {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_scalar(std::string_view text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ConfigError("'" + std::string(text) + "' is not a valid number");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(value))
      throw ConfigError("'" + std::string(text) + "' is not finite");
  return value;
}

std::string show(bool v) { return v ? "true" : "false"; }
std::string show(double v) { return format(v); }
std::string show(const std::string& v) { return v; }
std::string show(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(v[k]);
  }
  return out;
}
template <typename T>
  requires std::is_integral_v<T>
std::string show(T v) {
  return std::to_string(v);
}

void read(std::string_view text, bool& v) {
  if (text == "true" || text == "1")
    v = true;
  else if (text == "false" || text == "0")
    v = false;
  else
    throw ConfigError("'" + std::string(text) + "' is not true/false");
}
void read(std::string_view text, double& v) { v = parse_scalar<double>(text); }
void read(std::string_view text, std::string& v) { v = text; }
void read(std::string_view text, std::vector<std::size_t>& v) {
  v.clear();
  while (true) {
    const auto comma = text.find(',');
    v.push_back(parse_scalar<std::size_t>(trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
}
template <typename T>
  requires std::is_integral_v<T>
void read(std::string_view text, T& v) {
  v = parse_scalar<T>(text);
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
Key field(std::string name, T RunConfig::*member) {
  return {std::move(name),
          [member](const RunConfig& c) { return show(c.*member); },
          [member](RunConfig& c, std::string_view v) { read(v, c.*member); }};
}

template <typename Outer, typename T>
Key field(std::string name, Outer RunConfig::*outer, T Outer::*member) {
  return {std::move(name),
          [outer, member](const RunConfig& c) {
            return show(c.*outer.*member);
          },
          [outer, member](RunConfig& c, std::string_view v) {
            read(v, c.*outer.*member);
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      field("seed", &RunConfig::seed),
      {"levels", [](const RunConfig& c) { return c.net.levels.str(); },
       [](RunConfig& c, std::string_view v) {
         try {
           c.net.levels = LevelSet::parse(std::string(v));
         } catch (const std::invalid_argument&) {
           throw ConfigError("levels must be 1, 12 or 123");
         }
       }},
      field("use_relpos", &RunConfig::net, &NetworkConfig::use_relpos),
      field("stage_m", &RunConfig::net, &NetworkConfig::stage_m),
      field("stage_k", &RunConfig::net, &NetworkConfig::stage_k),
      field("stage_d", &RunConfig::net, &NetworkConfig::stage_d),
      field("stage_dplus", &RunConfig::net, &NetworkConfig::stage_dplus),
      field("decoder_widths", &RunConfig::net, &NetworkConfig::decoder_widths),
      field("k_sp", &RunConfig::net, &NetworkConfig::k_sp),
      field("n_sp_cap", &RunConfig::net, &NetworkConfig::n_sp_cap),
      field("cell_size", &RunConfig::net, &NetworkConfig::cell_size),
      field("input_features", &RunConfig::net, &NetworkConfig::input_features),
      field("num_classes", &RunConfig::net, &NetworkConfig::num_classes),
      field("base_lr", &RunConfig::train, &TrainConfig::base_lr),
      field("batch_size", &RunConfig::train, &TrainConfig::batch_size),
      field("momentum", &RunConfig::train, &TrainConfig::momentum),
      field("weight_decay", &RunConfig::train, &TrainConfig::weight_decay),
      field("decay_factor", &RunConfig::train, &TrainConfig::decay_factor),
      field("decay_every", &RunConfig::train, &TrainConfig::decay_every),
      field("epochs", &RunConfig::train, &TrainConfig::total_epochs),
      field("class_weighting", &RunConfig::train, &TrainConfig::class_weighting),
      field("data", &RunConfig::data),
      field("scene_points", &RunConfig::scene_points),
      field("scene_extent", &RunConfig::scene_extent),
      field("scene_noise", &RunConfig::scene_noise),
      field("scene_seed", &RunConfig::scene_seed),
      field("block_size", &RunConfig::block_size),
      field("block_points", &RunConfig::block_points),
      field("out", &RunConfig::out),
      field("checkpoint", &RunConfig::checkpoint),
      field("bench_sizes", &RunConfig::bench_sizes),
      field("bench_extent", &RunConfig::bench_extent),
      field("bench_width", &RunConfig::bench_width),
      field("bench_repeats", &RunConfig::bench_repeats),
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    net.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  check(net.num_classes >= 2, "num_classes must be >= 2");
  check(scene_points >= 1, "scene_points must be >= 1");
  check(scene_extent > 0.0, "scene_extent must be positive");
  check(scene_noise >= 0.0, "scene_noise must be non-negative");
  check(block_size > 0.0, "block_size must be positive");
  check(block_points >= net.stage_m[0],
        "block_points must be at least stage_m[0] = " +
            std::to_string(net.stage_m[0]));
  check(!out.empty(), "out must name a directory");
  check(!bench_sizes.empty(), "bench_sizes must not be empty");
  for (std::size_t n : bench_sizes)
    check(n >= 16, "bench_sizes entries must be >= 16");
  check(bench_extent > 0.0, "bench_extent must be positive");
  check(bench_width >= 1, "bench_width must be >= 1");
  check(bench_repeats >= 1, "bench_repeats must be >= 1");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> names;
  for (const Key& k : keys()) names.push_back(k.name);
  return names;
}

RunConfig parse_run_config(const std::string& body, const std::string& source) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(body);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = keys();
    const auto it = std::ranges::find(table, key, &Key::name);
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot read config file");
  std::ostringstream body;
  body << in.rdbuf();
  return parse_run_config(body.str(), path);
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.seed) config.seed = *o.seed;
  if (o.epochs) config.train.total_epochs = *o.epochs;
  if (o.levels) {
    try {
      config.net.levels = LevelSet::parse(*o.levels);
    } catch (const std::invalid_argument&) {
      throw ConfigError("--levels must be 1, 12 or 123");
    }
  }
  if (o.out) config.out = *o.out;
  if (o.data) config.data = *o.data;
}

NetworkConfig effective_network(const RunConfig& config) {
  NetworkConfig net = config.net;
  net.sample_seed = config.seed;
  return net;
}

TrainConfig effective_train(const RunConfig& config) {
  TrainConfig train = config.train;
  train.seed = config.seed;
  return train;
}

}  // namespace cnl::cli
