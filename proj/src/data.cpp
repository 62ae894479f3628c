// SPDX-License-Identifier: Apache-2.0
#include "eqdp/data.hpp"

#include <algorithm>
#include <fstream>

#include "eqdp/error.hpp"
#include "eqdp/npy.hpp"
#include "json.hpp"

namespace eqdp {

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(text) + "'");
}

Dataset Dataset::head(int n) const {
  if (n <= 0 || n >= size()) return *this;
  Dataset out = *this;
  out.labels.resize(n);
  out.images.resize(n * kImageBytes);
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir, Split split, int expected_classes) {
  const std::string prefix(split_name(split));
  const auto image_path = dir / (prefix + "_images.npy");
  const auto label_path = dir / (prefix + "_labels.npy");
  for (const auto& p : {image_path, label_path})
    require(std::filesystem::is_regular_file(p), ErrorCode::kNotFound, "missing " + p.string());

  Dataset data;
  data.split = split;
  data.name = dir.filename().string();
  int meta_classes = 0;
  const auto meta_path = dir / "meta.json";
  if (std::filesystem::is_regular_file(meta_path)) {
    std::ifstream in(meta_path);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(in);
      meta_classes = meta.value("classes", 0);
      data.name = meta.value("name", data.name);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormatError, meta_path.string() + ": " + e.what());
    }
  }

  const NpyArray images = read_npy(image_path);
  require(images.dtype == NpyDtype::kU8, ErrorCode::kValidationError,
          image_path.string() + ": images must be |u1");
  require(images.shape.size() == 4 && images.shape[1] == kImageSize &&
              images.shape[2] == kImageSize && images.shape[3] == kImageChannels,
          ErrorCode::kValidationError, image_path.string() + ": images must be N x 28 x 28 x 3");
  const NpyArray labels = read_npy(label_path);
  const bool column = labels.shape.size() == 2 && labels.shape[1] == 1;
  require(labels.shape.size() == 1 || column, ErrorCode::kValidationError,
          label_path.string() + ": labels must have shape (N,) or (N, 1)");
  require(labels.shape[0] == images.shape[0], ErrorCode::kValidationError,
          "image and label counts differ in " + dir.string());

  std::int64_t max_label = -1;
  for (std::int64_t v : labels.as_int64()) {
    require(v >= 0, ErrorCode::kValidationError, "negative label in " + label_path.string());
    max_label = std::max(max_label, v);
    data.labels.push_back(static_cast<int>(v));
  }
  data.images = images.payload;
  const int inferred = static_cast<int>(max_label + 1);
  data.classes = meta_classes > 0 ? meta_classes : inferred;
  require(inferred <= data.classes, ErrorCode::kValidationError,
          "label " + std::to_string(max_label) + " out of range for " +
              std::to_string(data.classes) + " classes");
  if (expected_classes > 0)
    require(expected_classes == data.classes, ErrorCode::kValidationError,
            "dataset has " + std::to_string(data.classes) + " classes, config expects " +
                std::to_string(expected_classes));
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const std::string prefix(split_name(data.split));
  NpyArray images{NpyDtype::kU8, {data.labels.size(), kImageSize, kImageSize, kImageChannels}, data.images};
  write_npy(dir / (prefix + "_images.npy"), images);
  NpyArray labels{NpyDtype::kU8, {data.labels.size()}, {}};
  for (int l : data.labels) {
    require(l >= 0 && l < 256, ErrorCode::kInvalidArgument, "label does not fit |u1");
    labels.payload.push_back(static_cast<std::uint8_t>(l));
  }
  write_npy(dir / (prefix + "_labels.npy"), labels);
  std::ofstream meta(dir / "meta.json");
  meta << nlohmann::json{{"classes", data.classes}, {"name", data.name}}.dump() << "\n";
}

FeatureMap normalize_image(std::span<const std::uint8_t> hwc) {
  FeatureMap out(kImageChannels, kImageSize, kImageSize);
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x)
      for (int c = 0; c < kImageChannels; ++c)
        out.at(c, y, x) = static_cast<Real>(hwc[(y * kImageSize + x) * kImageChannels + c]) / Real(255);
  return out;
}

GeometricTensor normalize(const Dataset& data, std::span<const int> indices) {
  GeometricTensor out(static_cast<int>(indices.size()), trivial_type(kImageChannels), kImageSize,
                      kImageSize);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    require(indices[b] >= 0 && indices[b] < data.size(), ErrorCode::kInvalidArgument,
            "sample index out of range");
    out.set_sample(static_cast<int>(b), normalize_image(data.image(indices[b])));
  }
  return out;
}

FeatureMap flip_horizontal(const FeatureMap& image) {
  FeatureMap out(image.channels(), image.height(), image.width());
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < image.height(); ++y)
      for (int x = 0; x < image.width(); ++x) out.at(c, y, x) = image.at(c, y, image.width() - 1 - x);
  return out;
}

FeatureMap shift_crop(const FeatureMap& image, int dy, int dx) {
  FeatureMap out(image.channels(), image.height(), image.width());
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < image.height(); ++y) {
      const int sy = y - dy;
      if (sy < 0 || sy >= image.height()) continue;
      for (int x = 0; x < image.width(); ++x) {
        const int sx = x - dx;
        if (sx >= 0 && sx < image.width()) out.at(c, y, x) = image.at(c, sy, sx);
      }
    }
  return out;
}

GeometricTensor augment_batch(const GeometricTensor& batch, const AugmentationPolicy& policy,
                              std::mt19937_64& rng) {
  require(policy.multiplicity >= 1, ErrorCode::kInvalidArgument, "augmentation multiplicity must be >= 1");
  require(policy.pad >= 0, ErrorCode::kInvalidArgument, "crop padding must be non-negative");
  const int k = policy.multiplicity;
  GeometricTensor out(batch.batch() * k, batch.ftype(), batch.height(), batch.width());
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> offset(-policy.pad, policy.pad);
  for (int b = 0; b < batch.batch(); ++b) {
    const FeatureMap image = batch.sample(b);
    for (int r = 0; r < k; ++r) {
      if (!policy.enabled) {
        out.set_sample(b * k + r, image);
        continue;
      }
      const bool flip = policy.flip && coin(rng);
      const int dy = offset(rng);
      const int dx = offset(rng);
      out.set_sample(b * k + r, shift_crop(flip ? flip_horizontal(image) : image, dy, dx));
    }
  }
  return out;
}

}  // namespace eqdp
