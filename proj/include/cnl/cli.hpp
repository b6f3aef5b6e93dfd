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

#ifndef CNL_CLI_HPP_
#define CNL_CLI_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cnl/data.hpp"
#include "cnl/net.hpp"

namespace cnl::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kIoError = 3,
  kCountMismatch = 4,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs. Parsed from `key = value` lines; see
/// config_keys() for the vocabulary.
struct RunConfig {
  NetworkConfig net;
  TrainConfig train;
  std::uint64_t seed = 0;

  // Data: a cloud file, or a synthetic scene when `data` is empty.
  std::string data;
  std::size_t scene_points = 8192;
  double scene_extent = 4.0;
  double scene_noise = 0.005;
  std::uint64_t scene_seed = 0;
  double block_size = 2.0;
  std::size_t block_points = 4096;

  std::string out = "run";
  std::string checkpoint;  // eval input; defaults to <out>/final.ckpt

  std::vector<std::size_t> bench_sizes{512, 1024, 2048, 4096};
  double bench_extent = 8.0;
  std::size_t bench_width = 32;
  std::size_t bench_repeats = 3;

  // Cross-module checks; throws ConfigError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

std::vector<std::string> config_keys();

// Throws ConfigError naming `source` and the line for any bad line or key.
RunConfig parse_run_config(const std::string& text,
                           const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

// Canonical `key = value` text; parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::string> levels;
  std::optional<std::string> out;
  std::optional<std::string> data;
};
void apply_overrides(RunConfig& config, const Overrides& overrides);

// The network/train configs with the run seed folded in.
NetworkConfig effective_network(const RunConfig& config);
TrainConfig effective_train(const RunConfig& config);

// ---------------------------------------------------------------------------
// Pipeline pieces shared by the commands.

struct Dataset {
  PointCloud cloud;
  std::vector<Block> blocks;
  std::vector<PointCloud> training;  // block clouds, in block order
};

/// Loads `data` (or generates the synthetic scene) and splits it. Throws
/// IoError/ParseError for unreadable data, ConfigError when the data does
/// not fit the network config.
Dataset build_dataset(const RunConfig& config);

struct TrainOutcome {
  NetworkParams params;
  std::vector<EpochStats> epochs;
};

// One JSON line per epoch goes to `metrics` when given. Checkpoints are
// written under `checkpoint_dir` unless it is empty.
TrainOutcome train_model(const RunConfig& config, const Dataset& dataset,
                         std::ostream* metrics,
                         const std::string& checkpoint_dir);

SegmentationMetrics evaluate_model(const RunConfig& config,
                                   const Dataset& dataset,
                                   const NetworkParams& params);

std::string epoch_json(const EpochStats& stats);

struct BenchRow {
  std::size_t n = 0;
  std::string variant;  // "cascaded" or "baseline"
  std::uint64_t interactions = 0;  // measured
  std::uint64_t analytic = 0;
  double seconds = 0.0;  // best of bench_repeats
  std::int64_t peak_bytes = 0;
};

std::vector<BenchRow> run_bench(const RunConfig& config);

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_ablate(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Full command line: `<binary> {train|eval|bench|ablate} --config PATH
/// [--seed N] [--epochs N] [--levels 1|12|123] [--out PATH] [--data PATH]`.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace cnl::cli

#endif  // CNL_CLI_HPP_
