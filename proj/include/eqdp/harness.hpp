// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eqdp/data.hpp"
#include "eqdp/metrics.hpp"
#include "eqdp/model.hpp"
#include "json.hpp"

namespace eqdp {

struct TrainConfig {
  std::string dataset_dir;
  std::string dataset_name;
  std::string group = "C4";
  std::array<int, 3> widths{8, 16, 32};
  WidthMode width_mode = WidthMode::kParamMatched;
  bool restriction = true;
  int classes = 0;  // 0: take the dataset's class count
  int epochs = 10;
  int lot_size = 256;  // expected lot size L; q = L / N_train
  double clip_norm = 1.0;
  double target_epsilon = 7.42;
  double delta = 1e-5;
  std::optional<double> sigma;  // empty: calibrate to target_epsilon
  std::optional<double> learning_rate;  // empty: 1.0 / clip_norm with DP, 0.1 without
  double momentum = 0.9;
  AugmentationPolicy augmentation{1, false, true, 4};
  std::uint64_t seed = 0;
  std::string output_dir = "run";
  bool dp = true;
  int train_subset = 0;  // first n training samples (0: all)
  int val_subset = 0;
  int threads = 1;

  double resolved_learning_rate() const;
};

nlohmann::json to_json(const TrainConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);

struct EvalResult {
  int count = 0;
  double accuracy = 0.0;
  double brier = 0.0;
  double loss = 0.0;
};

EvalResult evaluate(const Model& model, const Dataset& data, int threads = 1);

struct RunManifest {
  nlohmann::json config;  // resolved
  double sigma = 0.0;
  double sampling_rate = 0.0;
  int steps_planned = 0;
  int steps_completed = 0;
  std::size_t param_count = 0;
  std::vector<MetricsRecord> epochs;  // per-epoch summaries; brier is the validation Brier
  double final_val_accuracy = 0.0;
  double final_val_brier = 0.0;
  double final_epsilon = 0.0;
  double mean_grad_sparsity = 0.0;
  bool truncated = false;
  std::string stop_reason;  // "completed" or "budget-exhausted"
  std::string checkpoint;
  double wall_clock_seconds = 0.0;
};

nlohmann::json to_json(const RunManifest& manifest);

// Writes metrics.jsonl (one record per step), manifest.json and
// checkpoint/ under config.output_dir. A run whose next step would exceed
// the target epsilon stops early with truncated = true.
RunManifest run_training(const TrainConfig& config);

struct GridRow {
  std::string dataset;
  std::string group;
  int augmentation = 1;  // replicas per sample; 0 when disabled
  bool dp = true;
  std::uint64_t seed = 0;
  double val_accuracy = 0.0;
  std::size_t params = 0;
  double brier = 0.0;
  double mean_sparsity = 0.0;
  std::string status;  // "ok" or the error code name
  std::string message;
};

// Runs each config in turn; failures are recorded and the grid continues.
// Writes summary.csv into summary_dir.
std::vector<GridRow> run_grid(const std::vector<TrainConfig>& configs,
                              const std::filesystem::path& summary_dir);

// Reads every *.json config in a directory, sorted by file name.
std::vector<TrainConfig> load_config_dir(const std::filesystem::path& dir);

}  // namespace eqdp
