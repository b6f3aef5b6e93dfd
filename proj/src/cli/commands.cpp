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
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cnl/cli.hpp"
#include "cnl/memstats.hpp"
#include "cnl/nlops.hpp"
#include "cnl/rng.hpp"

namespace cnl::cli {
namespace fs = std::filesystem;

Dataset build_dataset(const RunConfig& config) {
  Dataset d;
  if (config.data.empty()) {
    d.cloud = generate_scene(standard_scene(config.scene_seed,
                                            config.scene_points,
                                            config.scene_extent,
                                            config.net.num_classes));
  } else {
    d.cloud = load_cloud(config.data);
  }
  if (!d.cloud.labeled())
    throw ConfigError("data has no labels; train and eval need them");
  if (d.cloud.num_classes != config.net.num_classes)
    throw ConfigError("num_classes = " + std::to_string(config.net.num_classes) +
                      " but the data declares " +
                      std::to_string(d.cloud.num_classes));
  const std::size_t width = d.cloud.features.cols() + 3;
  if (width != config.net.input_features)
    throw ConfigError("input_features = " +
                      std::to_string(config.net.input_features) +
                      " but blocks of this data carry " + std::to_string(width));
  d.blocks = block_split(d.cloud, config.block_size, config.block_points,
                         config.scene_seed);
  if (d.blocks.empty())
    throw ConfigError("block split produced no blocks; lower block_points or "
                      "raise block_size");
  for (const Block& b : d.blocks) d.training.push_back(b.cloud);
  return d;
}

std::string epoch_json(const EpochStats& s) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(s.order_hash));
  nlohmann::ordered_json j;
  j["epoch"] = s.epoch;
  j["lr"] = s.lr;
  j["loss"] = s.loss;
  j["oa"] = s.accuracy;
  j["order_hash"] = hash;
  return j.dump();
}

TrainOutcome train_model(const RunConfig& config, const Dataset& dataset,
                         std::ostream* metrics,
                         const std::string& checkpoint_dir) {
  const NetworkConfig net = effective_network(config);
  const TrainConfig train = effective_train(config);
  TrainOutcome outcome{init_params(net, config.seed), {}};
  OptimizerState state = make_optimizer_state(net);
  for (std::size_t e = 0; e < train.total_epochs; ++e) {
    outcome.epochs.push_back(train_epoch(dataset.training, net, train,
                                         outcome.params, state, e,
                                         Exec::kParallel));
    if (metrics) *metrics << epoch_json(outcome.epochs.back()) << '\n';
    const bool boundary =
        (e + 1) % train.decay_every == 0 && e + 1 < train.total_epochs;
    if (boundary && !checkpoint_dir.empty())
      save_checkpoint((fs::path(checkpoint_dir) /
                       ("epoch_" + std::to_string(e + 1) + ".ckpt"))
                          .string(),
                      outcome.params);
  }
  if (!checkpoint_dir.empty())
    save_checkpoint((fs::path(checkpoint_dir) / "final.ckpt").string(),
                    outcome.params);
  return outcome;
}

SegmentationMetrics evaluate_model(const RunConfig& config,
                                   const Dataset& dataset,
                                   const NetworkParams& params) {
  const NetworkConfig net = effective_network(config);
  std::vector<std::vector<int>> predictions;
  for (const Block& b : dataset.blocks)
    predictions.push_back(
        predict(network_forward(b.cloud, net, params, Exec::kParallel)));
  ConfusionMatrix cm(net.num_classes);
  cm.accumulate(merge_block_predictions(dataset.cloud, dataset.blocks,
                                        predictions),
                dataset.cloud.labels);
  return cm.finalize();
}

namespace {

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError(dir + ": cannot create output directory");
}

class FileSink {
 public:
  explicit FileSink(const fs::path& path) : path_(path.string()), out_(path) {
    if (!out_) throw IoError(path_ + ": cannot open for writing");
  }
  std::ostream& stream() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw IoError(path_ + ": write failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

// Forwards each write to two streams.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return traits_type::not_eof(c);
    const auto ch = traits_type::to_char_type(c);
    if (a_->sputc(ch) == traits_type::eof() || b_->sputc(ch) == traits_type::eof())
      return traits_type::eof();
    return c;
  }
  int sync() override { return a_->pubsync() | b_->pubsync(); }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

std::string checkpoint_path(const RunConfig& config) {
  return config.checkpoint.empty()
             ? (fs::path(config.out) / "final.ckpt").string()
             : config.checkpoint;
}

std::uint64_t combined_order_hash(const std::vector<EpochStats>& epochs) {
  std::uint64_t h = 0;
  for (const EpochStats& e : epochs) h = Rng::mix(h, e.order_hash);
  return h;
}

}  // namespace

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  ensure_directory(config.out);
  {
    FileSink echo(fs::path(config.out) / "config.txt");
    echo.stream() << to_text(config);
    echo.close();
  }
  out << "# effective config\n" << to_text(config) << std::flush;
  const Dataset dataset = build_dataset(config);
  err << "training on " << dataset.blocks.size() << " blocks of "
      << config.block_points << " points\n";

  FileSink metrics(fs::path(config.out) / "metrics.jsonl");
  TeeBuf tee(metrics.stream().rdbuf(), out.rdbuf());
  std::ostream both(&tee);
  train_model(config, dataset, &both, config.out);
  both.flush();
  metrics.close();
  err << "checkpoint written to " << checkpoint_path(config) << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream&) {
  NetworkParams params = zero_params(effective_network(config));
  try {
    load_checkpoint(checkpoint_path(config), params);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  const Dataset dataset = build_dataset(config);
  out << metrics_json(evaluate_model(config, dataset, params)) << "\n";
  return kOk;
}

int cmd_ablate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  ensure_directory(config.out);
  const Dataset dataset = build_dataset(config);
  struct Row {
    std::string levels;
    SegmentationMetrics metrics;
    std::uint64_t order_hash;
  };
  std::vector<Row> rows;
  for (const char* levels : {"1", "12", "123"}) {
    RunConfig run = config;
    run.net.levels = LevelSet::parse(levels);
    const std::string dir =
        (fs::path(config.out) / (std::string("levels_") + levels)).string();
    ensure_directory(dir);
    FileSink metrics(fs::path(dir) / "metrics.jsonl");
    const TrainOutcome trained =
        train_model(run, dataset, &metrics.stream(), dir);
    metrics.close();
    rows.push_back({levels, evaluate_model(run, dataset, trained.params),
                    combined_order_hash(trained.epochs)});
    err << "levels " << levels << " done\n";
  }

  std::ostringstream table;
  table << std::fixed << std::setprecision(4);
  table << "levels   miou    macc    oa      order_hash\n";
  for (const Row& r : rows) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(r.order_hash));
    table << std::left << std::setw(9) << r.levels << r.metrics.miou << "  "
          << r.metrics.macc << "  " << r.metrics.oa << "  " << hash << "\n";
  }
  out << table.str();
  FileSink file(fs::path(config.out) / "ablation.txt");
  file.stream() << table.str();
  file.close();

  if (rows[2].metrics.miou < rows[0].metrics.miou - 0.02)
    err << "note: levels 123 mIoU trails levels 1 by more than 0.02 on this "
           "corpus\n";
  return kOk;
}

std::vector<BenchRow> run_bench(const RunConfig& config) {
  const NetworkConfig& net = config.net;
  std::vector<BenchRow> rows;
  for (std::size_t n : config.bench_sizes) {
    const PointCloud cloud = generate_scene(standard_scene(
        config.scene_seed, n, config.bench_extent, net.num_classes));
    const std::size_t c = cloud.features.cols();
    const std::size_t d = config.bench_width;
    const std::size_t m = std::min(net.stage_m[0], n / 4);
    const std::size_t k = std::min(net.stage_k[0], n);

    Rng rng(Rng::mix(config.seed, n));
    auto glorot = [&rng](std::size_t r, std::size_t cols) {
      Matrix w(r, cols);
      const double b = std::sqrt(6.0 / static_cast<double>(r + cols));
      for (double& v : w.values()) v = rng.uniform(-b, b);
      return w;
    };
    CascadeParams params;
    params.levels[0] = {glorot(c + 3, d), glorot(c + 3, d)};
    params.levels[1] = {glorot(d, d), glorot(d, d)};
    params.levels[2] = {glorot(d, d), glorot(d, d)};
    params.gamma = glorot(3 * d, 2 * d);
    params.gamma_bias = Matrix(1, 2 * d);
    const LevelWeights baseline_weights{glorot(c, d), glorot(c, d)};
    const CascadeOptions options{LevelSet{}, true, Exec::kParallel};

    BenchRow cascaded{n, "cascaded", 0, 0, 1e300, 0};
    BenchRow baseline{n, "baseline", 0, 0, 1e300, 0};
    for (std::size_t rep = 0; rep < config.bench_repeats; ++rep) {
      interactions::reset();
      memstats::reset_peak();
      std::int64_t base = memstats::current_bytes();
      auto t0 = std::chrono::steady_clock::now();
      const SuperpointPartition partition =
          voxel_partition(cloud.positions, net.cell_size, net.n_sp_cap);
      const CentroidSet centroids =
          farthest_point_sample(cloud.positions, m, Exec::kParallel);
      const IndexTable neighbors = knn(cloud.positions, centroids.positions, k,
                                       Exec::kParallel, KnnMethod::kGrid);
      const auto sp_of = centroid_superpoints(partition, centroids);
      const IndexTable samples =
          sample_superpoint_centroids(sp_of, net.k_sp, config.seed);
      cascaded_forward(cloud, centroids, neighbors, samples, partition, params,
                       options);
      double seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
      cascaded.seconds = std::min(cascaded.seconds, seconds);
      cascaded.peak_bytes = memstats::peak_bytes() - base;
      cascaded.interactions = interactions::read();
      std::vector<Index> occupied = sp_of;
      std::ranges::sort(occupied);
      const auto n_sp = static_cast<std::uint64_t>(
          std::unique(occupied.begin(), occupied.end()) - occupied.begin());
      cascaded.analytic = pair_interaction_count(m, k, net.k_sp, n_sp);

      interactions::reset();
      memstats::reset_peak();
      base = memstats::current_bytes();
      t0 = std::chrono::steady_clock::now();
      baseline_full_nonlocal(cloud.features, baseline_weights, Exec::kParallel);
      seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
      baseline.seconds = std::min(baseline.seconds, seconds);
      baseline.peak_bytes = memstats::peak_bytes() - base;
      baseline.interactions = interactions::read();
      baseline.analytic = static_cast<std::uint64_t>(n) * n;
    }
    rows.push_back(cascaded);
    rows.push_back(baseline);
  }
  return rows;
}

int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err) {
  ensure_directory(config.out);
  const std::vector<BenchRow> rows = run_bench(config);
  std::ostringstream csv;
  csv << "n,variant,interactions,seconds,peak_bytes\n";
  csv << std::setprecision(9);
  bool counts_ok = true;
  for (const BenchRow& r : rows) {
    csv << r.n << ',' << r.variant << ',' << r.interactions << ',' << r.seconds
        << ',' << r.peak_bytes << '\n';
    if (r.interactions != r.analytic) {
      counts_ok = false;
      err << "interaction count mismatch at n=" << r.n << " (" << r.variant
          << "): measured " << r.interactions << ", analytic " << r.analytic
          << "\n";
    }
  }
  out << csv.str();
  FileSink file(fs::path(config.out) / "bench.csv");
  file.stream() << csv.str();
  file.close();
  return counts_ok ? kOk : kCountMismatch;
}

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Cascaded non-local point cloud segmentation"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::string levels, out_dir, data;
  std::vector<CLI::App*> commands;
  for (const char* name : {"train", "eval", "bench", "ablate"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "config file")->required();
    sub->add_option("--seed", seed, "run seed");
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--levels", levels, "cascade levels: 1, 12 or 123");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--data", data, "cloud file (empty: synthetic scene)");
    commands.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg_out, msg_err;
    const int code = app.exit(e, msg_out, msg_err);
    out << msg_out.str();
    err << msg_err.str();
    return code == 0 ? kOk : kConfigError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) overrides.seed = seed;
  if (chosen->count("--epochs")) overrides.epochs = epochs;
  if (chosen->count("--levels")) overrides.levels = levels;
  if (chosen->count("--out")) overrides.out = out_dir;
  if (chosen->count("--data")) overrides.data = data;

  try {
    RunConfig config = load_run_config(config_path);
    apply_overrides(config, overrides);
    config.validate();
    const std::string name = chosen->get_name();
    if (name == "train") return cmd_train(config, out, err);
    if (name == "eval") return cmd_eval(config, out, err);
    if (name == "bench") return cmd_bench(config, out, err);
    return cmd_ablate(config, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError& e) {
    err << "data error: " << e.what() << "\n";
    return kIoError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "io error: " << e.what() << "\n";
    return kIoError;
  }
}

}  // namespace cnl::cli
