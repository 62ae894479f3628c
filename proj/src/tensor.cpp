// SPDX-License-Identifier: Apache-2.0
#include "eqdp/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "eqdp/error.hpp"

namespace eqdp {

FeatureMap::FeatureMap(int channels, int height, int width, Real fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels >= 0 && height >= 0 && width >= 0, ErrorCode::kInvalidArgument,
          "negative feature map dimension");
  values_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

bool FeatureMap::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
}

GeometricTensor::GeometricTensor(int batch, FieldType ftype, int height, int width)
    : batch_(batch), ftype_(ftype), height_(height), width_(width) {
  require(batch >= 0 && height >= 0 && width >= 0, ErrorCode::kInvalidArgument,
          "negative tensor dimension");
  values_.assign(static_cast<std::size_t>(batch) * sample_size(), Real(0));
}

std::size_t GeometricTensor::sample_size() const {
  return static_cast<std::size_t>(channels()) * height_ * width_;
}

FeatureMap GeometricTensor::sample(int b) const {
  require(b >= 0 && b < batch_, ErrorCode::kInvalidArgument, "sample index out of range");
  FeatureMap map(channels(), height_, width_);
  auto src = data().subspan(b * sample_size(), sample_size());
  std::copy(src.begin(), src.end(), map.data().begin());
  return map;
}

void GeometricTensor::set_sample(int b, const FeatureMap& map) {
  require(b >= 0 && b < batch_, ErrorCode::kInvalidArgument, "sample index out of range");
  require(map.channels() == channels() && map.height() == height_ && map.width() == width_,
          ErrorCode::kLayoutMismatch, "sample shape does not match tensor layout");
  std::copy(map.data().begin(), map.data().end(), values_.begin() + b * sample_size());
}

FeatureMap rotate90(const FeatureMap& map, int quarter_turns) {
  require(map.height() == map.width(), ErrorCode::kLayoutMismatch,
          "rotate90 requires square feature maps");
  const int turns = ((quarter_turns % 4) + 4) % 4;
  const int n = map.height();
  FeatureMap out = map;
  for (int t = 0; t < turns; ++t) {
    FeatureMap next(out.channels(), n, n);
    for (int c = 0; c < out.channels(); ++c)
      for (int r = 0; r < n; ++r)
        for (int col = 0; col < n; ++col) next.at(c, r, col) = out.at(c, col, n - 1 - r);
    out = std::move(next);
  }
  return out;
}

FeatureMap shift_orientations(const FeatureMap& map, int field_size, int shift) {
  require(field_size >= 1 && map.channels() % field_size == 0, ErrorCode::kLayoutMismatch,
          "channel count is not a multiple of the field size");
  FeatureMap out(map.channels(), map.height(), map.width());
  const int fields = map.channels() / field_size;
  for (int f = 0; f < fields; ++f) {
    for (int g = 0; g < field_size; ++g) {
      const int dst = ((g + shift) % field_size + field_size) % field_size;
      auto src = map.channel(f * field_size + g);
      std::copy(src.begin(), src.end(), out.channel(f * field_size + dst).begin());
    }
  }
  return out;
}

}  // namespace eqdp
