// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqdp/tensor.hpp"

namespace eqdp {

inline constexpr int kImageSize = 28;
inline constexpr int kImageChannels = 3;
inline constexpr std::size_t kImageBytes = kImageSize * kImageSize * kImageChannels;

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view text);

struct Dataset {
  std::string name;
  Split split = Split::kTrain;
  int classes = 0;
  std::vector<std::uint8_t> images;  // N x 28 x 28 x 3, height-width-channel
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::span<const std::uint8_t> image(int i) const {
    return std::span<const std::uint8_t>(images).subspan(i * kImageBytes, kImageBytes);
  }
  // First n samples (all when n <= 0 or n >= size()).
  Dataset head(int n) const;
};

// Reads {split}_images.npy, {split}_labels.npy and, when present, meta.json.
// expected_classes > 0 is cross-checked against the resolved class count.
Dataset load_dataset(const std::filesystem::path& dir, Split split, int expected_classes = 0);

// Writes one split (and meta.json) in the layout load_dataset reads.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);

// Divides by 255 and reorders to channel-major; returns B x 3 x 28 x 28.
GeometricTensor normalize(const Dataset& data, std::span<const int> indices);
FeatureMap normalize_image(std::span<const std::uint8_t> hwc);

struct AugmentationPolicy {
  int multiplicity = 4;
  bool enabled = true;
  bool flip = true;
  int pad = 4;
};

FeatureMap flip_horizontal(const FeatureMap& image);
// Shifts content by (dy, dx) with zero fill: the pad-and-crop window at
// offset (pad - dy, pad - dx).
FeatureMap shift_crop(const FeatureMap& image, int dy, int dx);

// Returns B*K samples ordered sample-major (replicas of sample b occupy
// rows b*K .. b*K+K-1). Random draws do not depend on pixel values.
GeometricTensor augment_batch(const GeometricTensor& batch, const AugmentationPolicy& policy,
                              std::mt19937_64& rng);

}  // namespace eqdp
