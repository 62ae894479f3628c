// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "eqdp/field_type.hpp"
#include "eqdp/real.hpp"

namespace eqdp {

// Activations of a single sample, channel-major C x H x W.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, Real fill = Real(0));

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height_) * width_; }

  Real& at(int c, int y, int x) { return values_[index(c, y, x)]; }
  Real at(int c, int y, int x) const { return values_[index(c, y, x)]; }

  std::span<Real> data() { return values_; }
  std::span<const Real> data() const { return values_; }
  std::span<Real> channel(int c) { return data().subspan(c * plane(), plane()); }
  std::span<const Real> channel(int c) const { return data().subspan(c * plane(), plane()); }

  bool same_shape(const FeatureMap& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<Real> values_;
};

// Batched B x C x H x W activations annotated with their field layout.
class GeometricTensor {
 public:
  GeometricTensor() = default;
  GeometricTensor(int batch, FieldType ftype, int height, int width);

  int batch() const { return batch_; }
  int channels() const { return ftype_.channels(); }
  int height() const { return height_; }
  int width() const { return width_; }
  const FieldType& ftype() const { return ftype_; }
  std::size_t sample_size() const;

  Real& at(int b, int c, int y, int x) { return values_[index(b, c, y, x)]; }
  Real at(int b, int c, int y, int x) const { return values_[index(b, c, y, x)]; }
  std::span<Real> data() { return values_; }
  std::span<const Real> data() const { return values_; }

  FeatureMap sample(int b) const;
  void set_sample(int b, const FeatureMap& map);

 private:
  std::size_t index(int b, int c, int y, int x) const {
    return ((static_cast<std::size_t>(b) * channels() + c) * height_ + y) * width_ + x;
  }

  int batch_ = 0;
  FieldType ftype_;
  int height_ = 0;
  int width_ = 0;
  std::vector<Real> values_;
};

// Counter-clockwise rotation of every channel by quarter_turns * 90 degrees.
// Requires square maps.
FeatureMap rotate90(const FeatureMap& map, int quarter_turns);

// Cyclic shift of the orientation channels of each regular field: channel
// g of a field moves to g + shift (mod N).
FeatureMap shift_orientations(const FeatureMap& map, int field_size, int shift);

}  // namespace eqdp
