// SPDX-License-Identifier: Apache-2.0
#include "synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace eqdp::testing {
namespace {

struct Segment {
  double x0, y0, x1, y1;
};

const std::array<std::vector<Segment>, kPatternClasses>& shapes() {
  static const std::array<std::vector<Segment>, kPatternClasses> table{{
      {{-1, 0, 1, 0}},                   // bar
      {{0, 0, 1, 0}, {0, 0, 0, 1}},      // corner
      {{-1, 0, 1, 0}, {0, 0, 0, 1}},     // tee
      {{-1, 0, 1, 0}, {0, -1, 0, 1}},    // cross
  }};
  return table;
}

double segment_distance(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double t = std::clamp(((px - s.x0) * dx + (py - s.y0) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - (s.x0 + t * dx), py - (s.y0 + t * dy));
}

void render(int label, std::mt19937_64& rng, std::uint8_t* hwc) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double angle = 2.0 * std::numbers::pi * unit(rng);
  const double scale = 6.0 + 3.0 * unit(rng);
  const double width = 1.2 + 1.0 * unit(rng);
  const double cx = 13.5 + 3.0 * (unit(rng) - 0.5);
  const double cy = 13.5 + 3.0 * (unit(rng) - 0.5);
  std::array<double, 3> fg{}, bg{};
  for (int c = 0; c < 3; ++c) {
    fg[c] = 0.55 + 0.45 * unit(rng);
    bg[c] = 0.25 * unit(rng);
  }
  std::normal_distribution<double> noise(0.0, 0.04);
  std::vector<Segment> segs;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (const auto& s : shapes()[label])
    segs.push_back({cx + scale * (ca * s.x0 - sa * s.y0), cy + scale * (sa * s.x0 + ca * s.y0),
                    cx + scale * (ca * s.x1 - sa * s.y1), cy + scale * (sa * s.x1 + ca * s.y1)});
  for (int y = 0; y < kImageSize; ++y)
    for (int x = 0; x < kImageSize; ++x) {
      double d = 1e9;
      for (const auto& s : segs) d = std::min(d, segment_distance(x, y, s));
      const double ink = std::clamp(width / 2.0 + 0.5 - d, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        const double v = bg[c] + ink * (fg[c] - bg[c]) + noise(rng);
        hwc[(y * kImageSize + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
}

}  // namespace

Dataset make_oriented_patterns(int per_class, std::uint64_t seed, Split split) {
  Dataset data;
  data.name = "oriented-patterns";
  data.split = split;
  data.classes = kPatternClasses;
  const int n = per_class * kPatternClasses;
  data.images.assign(static_cast<std::size_t>(n) * kImageBytes, 0);
  data.labels.resize(n);
  std::mt19937_64 rng(seed * 3 + static_cast<std::uint64_t>(split));
  for (int i = 0; i < n; ++i) {
    data.labels[i] = i % kPatternClasses;
    render(data.labels[i], rng, data.images.data() + static_cast<std::size_t>(i) * kImageBytes);
  }
  return data;
}

void write_oriented_patterns(const std::filesystem::path& dir, int train_per_class,
                             int val_per_class, std::uint64_t seed) {
  write_dataset(dir, make_oriented_patterns(train_per_class, seed, Split::kTrain));
  write_dataset(dir, make_oriented_patterns(val_per_class, seed, Split::kVal));
  write_dataset(dir, make_oriented_patterns(val_per_class, seed, Split::kTest));
}

}  // namespace eqdp::testing
