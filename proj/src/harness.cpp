// SPDX-License-Identifier: Apache-2.0
#include "eqdp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "eqdp/dp.hpp"
#include "eqdp/error.hpp"

namespace eqdp {
namespace {

using nlohmann::json;

enum class Stream : std::uint32_t { kInit = 1, kSampling, kNoise, kAugmentation };

std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

void validate(const TrainConfig& c) {
  require(!c.dataset_dir.empty(), ErrorCode::kInvalidArgument, "dataset_dir is required");
  require(c.epochs >= 1, ErrorCode::kInvalidArgument, "epochs must be >= 1");
  require(c.lot_size >= 1, ErrorCode::kInvalidArgument, "lot_size must be >= 1");
  require(c.clip_norm > 0.0, ErrorCode::kInvalidArgument, "clip_norm must be positive");
  require(c.delta > 0.0 && c.delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  require(c.target_epsilon > 0.0, ErrorCode::kInvalidArgument, "target_epsilon must be positive");
  require(!c.sigma || *c.sigma >= 0.0, ErrorCode::kInvalidArgument, "sigma must be non-negative");
  require(c.momentum >= 0.0 && c.momentum < 1.0, ErrorCode::kInvalidArgument,
          "momentum must lie in [0, 1)");
  require(c.threads >= 1, ErrorCode::kInvalidArgument, "threads must be >= 1");
  require(c.augmentation.multiplicity >= 1, ErrorCode::kInvalidArgument,
          "augmentation multiplicity must be >= 1");
}

}  // namespace

double TrainConfig::resolved_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return dp ? 1.0 / clip_norm : 0.1;
}

json to_json(const TrainConfig& c) {
  json j{{"dataset_dir", c.dataset_dir},
         {"dataset_name", c.dataset_name},
         {"group", c.group},
         {"widths", c.widths},
         {"width_mode", std::string(width_mode_name(c.width_mode))},
         {"restriction", c.restriction},
         {"classes", c.classes},
         {"epochs", c.epochs},
         {"lot_size", c.lot_size},
         {"clip_norm", c.clip_norm},
         {"target_epsilon", c.target_epsilon},
         {"delta", c.delta},
         {"learning_rate", c.resolved_learning_rate()},
         {"momentum", c.momentum},
         {"augmentation",
          {{"enabled", c.augmentation.enabled},
           {"multiplicity", c.augmentation.multiplicity},
           {"flip", c.augmentation.flip},
           {"pad", c.augmentation.pad}}},
         {"seed", c.seed},
         {"output_dir", c.output_dir},
         {"dp", c.dp},
         {"train_subset", c.train_subset},
         {"val_subset", c.val_subset},
         {"threads", c.threads}};
  j["sigma"] = c.sigma ? json(*c.sigma) : json("calibrate");
  return j;
}

TrainConfig config_from_json(const json& j) {
  static const std::set<std::string> known{
      "dataset_dir", "dataset_name", "group",   "widths",       "width_mode",   "restriction",
      "classes",     "epochs",       "lot_size", "sampling_rate", "clip_norm",  "target_epsilon",
      "delta",       "sigma",        "learning_rate", "momentum", "augmentation", "seed",
      "output_dir",  "dp",           "train_subset", "val_subset", "threads"};
  require(j.is_object(), ErrorCode::kFormatError, "config must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(known.count(key) > 0, ErrorCode::kInvalidArgument, "unknown config field '" + key + "'");
  TrainConfig c;
  try {
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.dataset_name = j.value("dataset_name", c.dataset_name);
    c.group = j.value("group", c.group);
    if (j.contains("widths")) c.widths = j["widths"].get<std::array<int, 3>>();
    if (j.contains("width_mode")) c.width_mode = parse_width_mode(j["width_mode"].get<std::string>());
    c.restriction = j.value("restriction", c.restriction);
    c.classes = j.value("classes", c.classes);
    c.epochs = j.value("epochs", c.epochs);
    c.lot_size = j.value("lot_size", c.lot_size);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.target_epsilon = j.value("target_epsilon", c.target_epsilon);
    c.delta = j.value("delta", c.delta);
    if (j.contains("sigma")) {
      if (j["sigma"].is_string()) {
        require(j["sigma"] == "calibrate", ErrorCode::kInvalidArgument,
                "sigma must be a number or \"calibrate\"");
        c.sigma.reset();
      } else {
        c.sigma = j["sigma"].get<double>();
      }
    }
    if (j.contains("learning_rate") && !j["learning_rate"].is_null())
      c.learning_rate = j["learning_rate"].get<double>();
    c.momentum = j.value("momentum", c.momentum);
    if (j.contains("augmentation")) {
      const auto& a = j["augmentation"];
      c.augmentation.enabled = a.value("enabled", c.augmentation.enabled);
      c.augmentation.multiplicity = a.value("multiplicity", c.augmentation.multiplicity);
      c.augmentation.flip = a.value("flip", c.augmentation.flip);
      c.augmentation.pad = a.value("pad", c.augmentation.pad);
    }
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.dp = j.value("dp", c.dp);
    c.train_subset = j.value("train_subset", c.train_subset);
    c.val_subset = j.value("val_subset", c.val_subset);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad config value: ") + e.what());
  }
  GroupSpec::parse(c.group);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "cannot open " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kFormatError, path.string() + ": " + e.what());
  }
}

EvalResult evaluate(const Model& model, const Dataset& data, int threads) {
  EvalResult out;
  out.count = data.size();
  if (data.size() == 0) return out;
  constexpr int kChunk = 256;
  double correct = 0.0, brier_sum = 0.0, loss_sum = 0.0;
  for (int start = 0; start < data.size(); start += kChunk) {
    const int n = std::min(kChunk, data.size() - start);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix logits = forward(model, normalize(data, idx), threads);
    const Matrix probs = probabilities(logits);
    const std::span<const int> labels(data.labels.data() + start, n);
    correct += accuracy(logits, labels) * n;
    brier_sum += brier(probs, labels) * n;
    for (int b = 0; b < n; ++b) loss_sum -= std::log(std::max<double>(probs.row(b)[labels[b]], 1e-300));
  }
  out.accuracy = correct / data.size();
  out.brier = brier_sum / data.size();
  out.loss = loss_sum / data.size();
  return out;
}

json to_json(const RunManifest& m) {
  json epochs = json::array();
  for (const auto& r : m.epochs) epochs.push_back(to_json(r));
  return json{{"config", m.config},
              {"sigma", m.sigma},
              {"sampling_rate", m.sampling_rate},
              {"steps_planned", m.steps_planned},
              {"steps_completed", m.steps_completed},
              {"param_count", m.param_count},
              {"epochs", epochs},
              {"final_val_accuracy", m.final_val_accuracy},
              {"final_val_brier", m.final_val_brier},
              {"final_epsilon", m.final_epsilon},
              {"mean_grad_sparsity", m.mean_grad_sparsity},
              {"truncated", m.truncated},
              {"stop_reason", m.stop_reason},
              {"checkpoint", m.checkpoint},
              {"wall_clock_seconds", m.wall_clock_seconds}};
}

RunManifest run_training(const TrainConfig& config) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  const Dataset train = load_dataset(config.dataset_dir, Split::kTrain, config.classes).head(config.train_subset);
  const Dataset val = load_dataset(config.dataset_dir, Split::kVal, train.classes).head(config.val_subset);
  require(train.size() > 0, ErrorCode::kValidationError, "training split is empty");
  require(config.lot_size <= train.size(), ErrorCode::kInvalidArgument,
          "lot_size exceeds the training set (q must be <= 1)");

  const double q = static_cast<double>(config.lot_size) / train.size();
  const int steps_per_epoch = static_cast<int>(std::ceil(1.0 / q - 1e-12));
  const int total_steps = config.epochs * steps_per_epoch;

  RunManifest manifest;
  manifest.sampling_rate = q;
  manifest.steps_planned = total_steps;
  if (config.dp)
    manifest.sigma = config.sigma ? *config.sigma
                                  : calibrate_sigma(config.target_epsilon, config.delta, q, total_steps);

  ModelSpec spec;
  spec.group = GroupSpec::parse(config.group);
  spec.widths = config.widths;
  spec.classes = train.classes;
  spec.width_mode = config.width_mode;
  spec.restriction = config.restriction;
  Model model = build_resnet9(spec);
  model.initialize(stream_seed(config.seed, Stream::kInit));
  manifest.param_count = model.param_count();

  json resolved = to_json(config);
  resolved["classes"] = train.classes;
  resolved["sampling_rate"] = q;
  if (config.dp) resolved["sigma"] = manifest.sigma;
  manifest.config = resolved;

  const std::filesystem::path out_dir(config.output_dir);
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics_out(out_dir / "metrics.jsonl");
  require(static_cast<bool>(metrics_out), ErrorCode::kIoError,
          "cannot write " + (out_dir / "metrics.jsonl").string());

  std::mt19937_64 sampling_rng(stream_seed(config.seed, Stream::kSampling));
  std::mt19937_64 noise_rng(stream_seed(config.seed, Stream::kNoise));
  std::mt19937_64 aug_rng(stream_seed(config.seed, Stream::kAugmentation));
  const bool augment = config.augmentation.enabled;
  const int replicas = augment ? config.augmentation.multiplicity : 1;
  const double lr = config.resolved_learning_rate();

  std::vector<double> velocity(model.param_count(), 0.0);
  std::vector<Real> step_vec(model.param_count());
  double sparsity_total = 0.0;
  manifest.stop_reason = "completed";

  MetricsRecord epoch_acc;
  int epoch_steps = 0;
  for (int step = 1; step <= total_steps; ++step) {
    const int epoch = (step - 1) / steps_per_epoch + 1;
    double eps = 0.0;
    if (config.dp) {
      eps = epsilon_spent(q, manifest.sigma, step, config.delta).epsilon;
      if (eps > config.target_epsilon) {
        manifest.truncated = true;
        manifest.stop_reason = "budget-exhausted";
        break;
      }
    }

    const std::vector<int> lot = poisson_sample(train.size(), q, sampling_rng);
    std::vector<int> labels(lot.size());
    for (std::size_t i = 0; i < lot.size(); ++i) labels[i] = train.labels[lot[i]];
    GeometricTensor batch = normalize(train, lot);
    if (augment) batch = augment_batch(batch, config.augmentation, aug_rng);
    const BackwardResult res = backward_per_sample(model, batch, labels, replicas, config.threads);

    std::vector<double> grad(model.param_count(), 0.0);
    double clip_fraction = 0.0;
    double sparsity = 1.0;  // of the clipped lot mean; the noised update is dense
    if (config.dp) {
      const ClipResult clipped = clip_per_sample(res.grads, config.clip_norm);
      clip_fraction = clipped.clip_fraction;
      std::vector<double> clean(clipped.summed);
      for (double& g : clean) g /= q * train.size();
      sparsity = l0_sparsity(clean);
      grad = noisy_update(clipped.summed, manifest.sigma, config.clip_norm, q * train.size(), noise_rng);
    } else if (!lot.empty()) {
      for (int b = 0; b < res.grads.batch; ++b) {
        const auto row = res.grads.row(b);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += row[i];
      }
      for (double& g : grad) g /= static_cast<double>(lot.size());
      sparsity = l0_sparsity(grad);
    }

    MetricsRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.loss = res.mean_loss;
    rec.epsilon_spent = eps;
    rec.clip_fraction = clip_fraction;
    rec.grad_sparsity = sparsity;
    if (!lot.empty()) {
      rec.train_accuracy = accuracy(res.logits, labels);
      rec.brier = brier(probabilities(res.logits), labels);
    }
    sparsity_total += rec.grad_sparsity;

    for (std::size_t i = 0; i < grad.size(); ++i) {
      velocity[i] = config.momentum * velocity[i] + grad[i];
      step_vec[i] = static_cast<Real>(lr * velocity[i]);
    }
    model.apply_step(step_vec);
    manifest.steps_completed = step;
    manifest.final_epsilon = eps;

    epoch_acc.loss += rec.loss;
    epoch_acc.train_accuracy += rec.train_accuracy;
    epoch_acc.grad_sparsity += rec.grad_sparsity;
    epoch_acc.clip_fraction += rec.clip_fraction;
    ++epoch_steps;

    if (step % steps_per_epoch == 0 || step == total_steps) {
      const EvalResult ev = evaluate(model, val, config.threads);
      rec.val_accuracy = ev.accuracy;
      MetricsRecord summary;
      summary.step = step;
      summary.epoch = epoch;
      summary.loss = epoch_acc.loss / epoch_steps;
      summary.train_accuracy = epoch_acc.train_accuracy / epoch_steps;
      summary.val_accuracy = ev.accuracy;
      summary.epsilon_spent = eps;
      summary.grad_sparsity = epoch_acc.grad_sparsity / epoch_steps;
      summary.clip_fraction = epoch_acc.clip_fraction / epoch_steps;
      summary.brier = ev.brier;
      manifest.epochs.push_back(summary);
      manifest.final_val_accuracy = ev.accuracy;
      manifest.final_val_brier = ev.brier;
      epoch_acc = MetricsRecord{};
      epoch_steps = 0;
    }
    metrics_out << to_json(rec).dump() << "\n";
  }
  metrics_out.close();

  if (manifest.truncated && epoch_steps > 0) {
    const EvalResult ev = evaluate(model, val, config.threads);
    manifest.final_val_accuracy = ev.accuracy;
    manifest.final_val_brier = ev.brier;
  }
  manifest.mean_grad_sparsity =
      manifest.steps_completed > 0 ? sparsity_total / manifest.steps_completed : 0.0;
  save_checkpoint(model, out_dir / "checkpoint");
  manifest.checkpoint = (out_dir / "checkpoint").string();
  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_text(out_dir / "manifest.json", to_json(manifest).dump(2) + "\n");
  return manifest;
}

std::vector<GridRow> run_grid(const std::vector<TrainConfig>& configs,
                              const std::filesystem::path& summary_dir) {
  require(!configs.empty(), ErrorCode::kInvalidArgument, "grid has no configs");
  std::vector<GridRow> rows;
  for (const auto& config : configs) {
    GridRow row;
    row.dataset = config.dataset_name.empty()
                      ? std::filesystem::path(config.dataset_dir).filename().string()
                      : config.dataset_name;
    row.group = config.group;
    row.augmentation = config.augmentation.enabled ? config.augmentation.multiplicity : 0;
    row.dp = config.dp;
    row.seed = config.seed;
    try {
      const RunManifest m = run_training(config);
      row.val_accuracy = m.final_val_accuracy;
      row.params = m.param_count;
      row.brier = m.final_val_brier;
      row.mean_sparsity = m.mean_grad_sparsity;
      row.status = m.truncated ? "budget-exhausted" : "ok";
    } catch (const Error& e) {
      row.status = std::string(error_code_name(e.code()));
      row.message = e.what();
    } catch (const std::exception& e) {
      row.status = "internal-error";
      row.message = e.what();
    }
    rows.push_back(row);
  }

  std::filesystem::create_directories(summary_dir);
  std::string csv = "dataset,group,augmentation,dp,seed,val_accuracy,params,brier,mean_sparsity,status\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%s,%llu,%.6f,%zu,%.6f,%.6f,%s\n", r.dataset.c_str(),
                  r.group.c_str(), r.augmentation, r.dp ? "on" : "off",
                  static_cast<unsigned long long>(r.seed), r.val_accuracy, r.params, r.brier,
                  r.mean_sparsity, r.status.c_str());
    csv += buf;
  }
  write_text(summary_dir / "summary.csv", csv);
  return rows;
}

std::vector<TrainConfig> load_config_dir(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorCode::kNotFound, "no config directory " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<TrainConfig> configs;
  for (const auto& f : files) configs.push_back(load_config(f));
  return configs;
}

}  // namespace eqdp
