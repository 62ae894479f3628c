// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqdp/model.hpp"
#include "json.hpp"

namespace eqdp {

struct MetricsRecord {
  int step = 0;
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;  // set on steps that close an epoch
  double epsilon_spent = 0.0;
  double grad_sparsity = 0.0;
  double clip_fraction = 0.0;
  double brier = 0.0;
};

nlohmann::json to_json(const MetricsRecord& record);
MetricsRecord metrics_from_json(const nlohmann::json& j);

// Fraction of argmax matches; ties go to the lowest class index.
double accuracy(const Matrix& logits, std::span<const int> labels);
int argmax(std::span<const Real> row);

Matrix probabilities(const Matrix& logits);
// Mean squared distance to the one-hot label. Rows must sum to 1 within 1e-5.
double brier(const Matrix& probs, std::span<const int> labels);

inline constexpr double kSparsityThreshold = 1e-5;
// Fraction of coordinates with |g_i| <= threshold.
double l0_sparsity(std::span<const double> grad, double threshold = kSparsityThreshold);

enum class HeatmapSource { kGradCam, kGuidedBackprop };
std::string_view heatmap_source_name(HeatmapSource source);

struct Heatmap {
  HeatmapSource source = HeatmapSource::kGradCam;
  int height = 0;
  int width = 0;
  std::vector<double> values;  // max-normalised to [0, 1]
  double raw_min = 0.0;
  double raw_max = 0.0;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Grad-CAM on the final feature map (the input of global pooling). Each
// channel, orientation channels included, gets its own weight.
Heatmap grad_cam(const Model& model, const FeatureMap& x, int target_class);
// Guided backpropagation; channels reduce by max |value| per pixel.
Heatmap guided_backprop(const Model& model, const FeatureMap& x, int target_class);

// Bilinear resize with half-pixel centres and edge clamping.
std::vector<double> resize_bilinear(std::span<const double> src, int src_h, int src_w, int dst_h,
                                    int dst_w);

// Binary 8-bit PGM plus `<path>.json` with the raw range.
void write_heatmap(const std::filesystem::path& pgm_path, const Heatmap& map);

struct FirEntry {
  std::string layer;
  double magnitude = 0.0;
};

// Unit impulse at the centre pixel of every input channel; the L2 norm of
// each convolution's output, before normalisation, in forward order.
std::vector<FirEntry> fir_probe(const Model& model, int size = 28);

}  // namespace eqdp
