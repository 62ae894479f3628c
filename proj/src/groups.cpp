// SPDX-License-Identifier: Apache-2.0
#include "eqdp/groups.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Dense>

#include "eqdp/error.hpp"

namespace eqdp {
namespace {

void require_odd(int k) {
  require(k >= 1 && k % 2 == 1, ErrorCode::kInvalidArgument,
          "filter size must be odd, got " + std::to_string(k));
}

// Grid position (row, col) after a counter-clockwise quarter turn.
int quarter_turn_index(int k, int index) {
  const int row = index / k;
  const int col = index % k;
  // out[r][c] = in[c][k-1-r]  =>  in[r0][c0] lands on out[k-1-c0][r0]
  return (k - 1 - col) * k + row;
}

// Real trigonometric basis function j: 1, cos t, sin t, cos 2t, sin 2t, ...
double trig_basis(int j, double t) {
  if (j == 0) return 1.0;
  const int freq = (j + 1) / 2;
  return (j % 2 == 1) ? std::cos(freq * t) : std::sin(freq * t);
}

// Rotation by `theta` of the values living on one ring of equal radius.
// Chooses the lowest-frequency trigonometric functions that are linearly
// independent on the ring's sample angles, interpolates, and resamples at the
// rotated angles.
Eigen::MatrixXd ring_rotation(const std::vector<double>& angles, double theta) {
  const int m = static_cast<int>(angles.size());
  std::vector<int> chosen;
  std::vector<Eigen::VectorXd> orthonormal;
  for (int j = 0; static_cast<int>(chosen.size()) < m && j <= 2 * m + 1; ++j) {
    Eigen::VectorXd column(m);
    for (int i = 0; i < m; ++i) column(i) = trig_basis(j, angles[i]);
    Eigen::VectorXd residual = column;
    for (const auto& q : orthonormal) residual -= q.dot(residual) * q;
    if (residual.norm() > 1e-8 * std::sqrt(static_cast<double>(m))) {
      chosen.push_back(j);
      orthonormal.push_back(residual.normalized());
    }
  }
  require(static_cast<int>(chosen.size()) == m, ErrorCode::kNumericFault,
          "could not build an interpolation basis for a filter ring");
  Eigen::MatrixXd basis(m, m);
  Eigen::MatrixXd rotated(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      basis(i, j) = trig_basis(chosen[j], angles[i]);
      rotated(i, j) = trig_basis(chosen[j], angles[i] - theta);
    }
  }
  return rotated * basis.inverse();
}

}  // namespace

std::vector<std::uint8_t> disk_mask(int k) {
  require_odd(k);
  const double centre = (k - 1) / 2.0;
  const double radius_sq = centre * centre;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(k) * k, 0);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      const double dy = r - centre;
      const double dx = c - centre;
      mask[r * k + c] = (dx * dx + dy * dy <= radius_sq + 1e-9) ? 1 : 0;
    }
  return mask;
}

std::vector<std::uint8_t> full_mask(int k) {
  require_odd(k);
  return std::vector<std::uint8_t>(static_cast<std::size_t>(k) * k, 1);
}

FilterGrid make_filter_grid(int k, bool disk) {
  FilterGrid grid;
  grid.size = k;
  grid.mask = disk ? disk_mask(k) : full_mask(k);
  grid.weights.assign(static_cast<std::size_t>(k) * k, 0.0);
  return grid;
}

Eigen::MatrixXi regular_rep(const CyclicGroup& group, int g) {
  const int n = group.order();
  require(g >= 0 && g < n, ErrorCode::kInvalidArgument,
          "group element " + std::to_string(g) + " outside [0, " + std::to_string(n) + ")");
  Eigen::MatrixXi p = Eigen::MatrixXi::Zero(n, n);
  for (int i = 0; i < n; ++i) p((i + g) % n, i) = 1;
  return p;
}

std::vector<StencilEntry> rotation_stencil(int k, int m, int n,
                                           const std::vector<std::uint8_t>& mask) {
  require_odd(k);
  require(n >= 1 && m >= 0 && m < n, ErrorCode::kInvalidArgument,
          "rotation index " + std::to_string(m) + " outside [0, " + std::to_string(n) + ")");
  require(mask.size() == static_cast<std::size_t>(k) * k, ErrorCode::kLayoutMismatch,
          "filter mask size does not match filter grid");

  const int cells = k * k;
  const int quarter_turns = (4 * m) / n;
  const int remainder = (4 * m) % n;
  const double residual = 0.5 * std::numbers::pi * remainder / n;

  // Dense operator for the residual rotation, then quarter turns.
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(cells, cells);
  if (remainder == 0) {
    for (int i = 0; i < cells; ++i)
      if (mask[i]) op(i, i) = 1.0;
  } else {
    const int centre = (k - 1) / 2;
    std::map<int, std::vector<int>> rings;
    for (int i = 0; i < cells; ++i) {
      if (!mask[i]) continue;
      const int x = i % k - centre;
      const int y = centre - i / k;
      rings[x * x + y * y].push_back(i);
    }
    for (const auto& [radius_sq, members] : rings) {
      if (radius_sq == 0) {
        op(members[0], members[0]) = 1.0;
        continue;
      }
      std::vector<double> angles;
      for (int i : members) angles.push_back(std::atan2(centre - i / k, i % k - centre));
      const Eigen::MatrixXd ring = ring_rotation(angles, residual);
      for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = 0; b < members.size(); ++b) op(members[a], members[b]) = ring(a, b);
    }
  }

  std::vector<int> destination(cells);
  for (int i = 0; i < cells; ++i) {
    int d = i;
    for (int t = 0; t < quarter_turns; ++t) d = quarter_turn_index(k, d);
    destination[i] = d;
  }

  std::vector<StencilEntry> stencil;
  for (int dst = 0; dst < cells; ++dst)
    for (int src = 0; src < cells; ++src) {
      const double w = op(dst, src);
      if (std::abs(w) > 1e-13) {
        const int out = destination[dst];
        if (mask[out]) stencil.push_back({out, src, w});
      }
    }
  std::sort(stencil.begin(), stencil.end(), [](const StencilEntry& a, const StencilEntry& b) {
    return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
  });
  return stencil;
}

FilterGrid rotate_filter(const FilterGrid& filter, int m, int n) {
  require_odd(filter.size);
  FilterGrid out = filter;
  std::fill(out.weights.begin(), out.weights.end(), 0.0);
  for (const auto& e : rotation_stencil(filter.size, m, n, filter.mask))
    out.weights[e.dst] += e.weight * filter.weights[e.src];
  return out;
}

GeometricTensor group_pool(const GeometricTensor& x) {
  const FieldType& in = x.ftype();
  require(in.kind == FieldKind::kRegular, ErrorCode::kLayoutMismatch,
          "group pooling needs regular fields, got " + in.describe());
  const int n = in.group.order();
  require(x.channels() % n == 0, ErrorCode::kLayoutMismatch,
          "channel count not divisible by group order");
  GeometricTensor out(x.batch(), trivial_type(in.multiplicity, in.group), x.height(), x.width());
  for (int b = 0; b < x.batch(); ++b)
    for (int f = 0; f < in.multiplicity; ++f)
      for (int y = 0; y < x.height(); ++y)
        for (int xx = 0; xx < x.width(); ++xx) {
          Real best = x.at(b, f * n, y, xx);
          for (int g = 1; g < n; ++g) best = std::max(best, x.at(b, f * n + g, y, xx));
          out.at(b, f, y, xx) = best;
        }
  return out;
}

Restriction restrict_regular(const FieldType& field) {
  require(field.kind == FieldKind::kRegular, ErrorCode::kInvalidArgument,
          "restriction needs regular fields, got " + field.describe());
  const int n = field.group.order();
  require(n % 2 == 0, ErrorCode::kInvalidArgument,
          "restriction to C_{N/2} needs even N, got N=" + std::to_string(n));
  const int half = n / 2;
  Restriction r;
  r.type = regular_type(CyclicGroup(half), 2 * field.multiplicity);
  r.channel_map.reserve(field.channels());
  for (int f = 0; f < field.multiplicity; ++f)
    for (int coset = 0; coset < 2; ++coset)
      for (int h = 0; h < half; ++h) r.channel_map.push_back(f * n + 2 * h + coset);
  return r;
}

}  // namespace eqdp
