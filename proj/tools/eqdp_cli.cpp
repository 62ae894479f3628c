// SPDX-License-Identifier: Apache-2.0
// Command-line front end over the C interface.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "eqdp/eqdp.h"
#include "json.hpp"

namespace {

using nlohmann::json;

struct Failure {
  eqdp_status status;
  std::string message;
};

void check(eqdp_status status) {
  if (status != EQDP_OK) throw Failure{status, eqdp_last_error()};
}

json take_json(char* text) {
  json j = json::parse(text);
  eqdp_string_free(text);
  return j;
}

struct ModelHandle {
  eqdp_model* ptr = nullptr;
  ~ModelHandle() { eqdp_model_free(ptr); }
};

struct DatasetHandle {
  eqdp_dataset* ptr = nullptr;
  ~DatasetHandle() { eqdp_dataset_free(ptr); }
};

// The run manifest next to a checkpoint names the dataset it was trained on.
std::string dataset_for(const std::string& checkpoint, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  const auto manifest = std::filesystem::path(checkpoint).parent_path() / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw Failure{EQDP_ERR_NOT_FOUND, "no --data given and no " + manifest.string()};
  return json::parse(in).at("config").at("dataset_dir").get<std::string>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equivariant networks under differential privacy"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train one model from a JSON config");
  std::string config_path, data_dir, group, output_dir, sigma_text;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, threads, train_subset;
  std::optional<bool> dp;
  train->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed);
  train->add_option("--group", group, "e, C1, C2, C4, C8 or C16");
  train->add_option("--output", output_dir);
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--epochs", epochs);
  train->add_option("--threads", threads);
  train->add_option("--train-subset", train_subset);
  train->add_option("--sigma", sigma_text, "number or 'calibrate'");
  train->add_option("--dp", dp, "true/false");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, split = "val";
  int eval_threads = 1;
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--data", data_dir);
  eval->add_option("--threads", eval_threads);

  auto* acct = app.add_subcommand("accountant", "epsilon of the sampled Gaussian mechanism");
  double q = 0, sigma = 0, steps = 0, delta = 1e-5, epsilon = 7.42;
  acct->add_option("--q", q)->required();
  acct->add_option("--sigma", sigma)->required();
  acct->add_option("--steps", steps)->required();
  acct->add_option("--delta", delta);

  auto* calib = app.add_subcommand("calibrate", "noise multiplier for a target epsilon");
  calib->add_option("--epsilon", epsilon)->required();
  calib->add_option("--delta", delta);
  calib->add_option("--q", q)->required();
  calib->add_option("--steps", steps)->required();

  auto* explain = app.add_subcommand("explain", "Grad-CAM or guided backprop heatmap");
  int image_index = 0, target_class = -1;
  std::string method = "gradcam", out_path;
  explain->add_option("--checkpoint", checkpoint)->required();
  explain->add_option("--image-index", image_index)->required();
  explain->add_option("--method", method)->check(CLI::IsMember({"gradcam", "guided"}));
  explain->add_option("--class", target_class);
  explain->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));
  explain->add_option("--data", data_dir);
  explain->add_option("--out", out_path, "PGM path");

  auto* fir = app.add_subcommand("fir", "filter impulse response per conv layer");
  fir->add_option("--checkpoint", checkpoint)->required();

  auto* grid = app.add_subcommand("grid", "run every config in a directory");
  std::string configs_dir, summary_dir;
  grid->add_option("--configs", configs_dir)->required()->check(CLI::ExistingDirectory);
  grid->add_option("--out", summary_dir);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", "invalid-argument"}, {"message", e.what()}}.dump() << "\n";
    return EQDP_ERR_INVALID_ARGUMENT;
  }

  try {
    if (*train) {
      std::ifstream in(config_path);
      json config = json::parse(in);
      if (seed) config["seed"] = *seed;
      if (!group.empty()) config["group"] = group;
      if (!output_dir.empty()) config["output_dir"] = output_dir;
      if (!data_dir.empty()) config["dataset_dir"] = data_dir;
      if (epochs) config["epochs"] = *epochs;
      if (threads) config["threads"] = *threads;
      if (train_subset) config["train_subset"] = *train_subset;
      if (dp) config["dp"] = *dp;
      if (!sigma_text.empty())
        config["sigma"] = sigma_text == "calibrate" ? json("calibrate") : json(std::stod(sigma_text));
      char* manifest = nullptr;
      const eqdp_status status = eqdp_train(config.dump().c_str(), &manifest);
      if (manifest) {
        json m = take_json(manifest);
        m.erase("epochs");
        std::cout << m.dump(2) << "\n";
      }
      check(status);
    } else if (*eval) {
      ModelHandle model;
      DatasetHandle data;
      check(eqdp_model_load(checkpoint.c_str(), &model.ptr));
      check(eqdp_dataset_load(dataset_for(checkpoint, data_dir).c_str(), split.c_str(), 0, &data.ptr));
      char* result = nullptr;
      check(eqdp_evaluate(model.ptr, data.ptr, eval_threads, &result));
      std::cout << take_json(result).dump(2) << "\n";
    } else if (*acct) {
      double eps = 0, order = 0;
      check(eqdp_epsilon(q, sigma, steps, delta, &eps, &order));
      std::cout << json{{"epsilon", eps}, {"order", order}}.dump() << "\n";
    } else if (*calib) {
      double s = 0, eps = 0;
      check(eqdp_calibrate_sigma(epsilon, delta, q, steps, &s));
      check(eqdp_epsilon(q, s, steps, delta, &eps, nullptr));
      std::cout << json{{"sigma", s}, {"epsilon", eps}}.dump() << "\n";
    } else if (*explain) {
      ModelHandle model;
      DatasetHandle data;
      check(eqdp_model_load(checkpoint.c_str(), &model.ptr));
      check(eqdp_dataset_load(dataset_for(checkpoint, data_dir).c_str(), split.c_str(), 0, &data.ptr));
      if (out_path.empty()) out_path = method + "_" + std::to_string(image_index) + ".pgm";
      char* result = nullptr;
      check(eqdp_explain(model.ptr, data.ptr, image_index, method.c_str(), target_class,
                         out_path.c_str(), &result));
      json j = take_json(result);
      j.erase("values");
      j["pgm"] = out_path;
      std::cout << j.dump(2) << "\n";
    } else if (*fir) {
      ModelHandle model;
      check(eqdp_model_load(checkpoint.c_str(), &model.ptr));
      char* result = nullptr;
      check(eqdp_model_fir(model.ptr, &result));
      std::cout << take_json(result).dump(2) << "\n";
    } else if (*grid) {
      if (summary_dir.empty()) summary_dir = configs_dir;
      char* rows = nullptr;
      check(eqdp_grid(configs_dir.c_str(), summary_dir.c_str(), &rows));
      std::cout << take_json(rows).dump(2) << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << json{{"error", eqdp_status_name(f.status)}, {"message", f.message}}.dump() << "\n";
    return static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "invalid-argument"}, {"message", e.what()}}.dump() << "\n";
    return EQDP_ERR_INVALID_ARGUMENT;
  }
  return 0;
}
