// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "eqdp/field_type.hpp"
#include "eqdp/tensor.hpp"

namespace eqdp {

// Square k x k filter (k odd) with the support mask it is confined to.
struct FilterGrid {
  int size = 0;
  std::vector<double> weights;    // row-major k*k
  std::vector<std::uint8_t> mask; // row-major k*k, 1 = inside support

  double at(int row, int col) const { return weights[row * size + col]; }
};

// Pixels whose centre lies within radius (k-1)/2 of the grid centre.
std::vector<std::uint8_t> disk_mask(int k);
std::vector<std::uint8_t> full_mask(int k);

FilterGrid make_filter_grid(int k, bool disk);

// Permutation matrix P of element g acting on R^N: P(i + g mod N, i) = 1.
Eigen::MatrixXi regular_rep(const CyclicGroup& group, int g);

// One entry of a linear resampling operator on a k x k grid.
struct StencilEntry {
  int dst;
  int src;
  double weight;
};

// The linear map taking a k x k filter to its rotation by element m of C_N,
// restricted to `mask` on both sides. Quarter turns are exact grid
// permutations; the remaining angle in [0, 90) degrees is applied ring by
// ring (pixels grouped by exact squared radius) with band-limited
// trigonometric interpolation along each ring.
std::vector<StencilEntry> rotation_stencil(int k, int m, int n,
                                           const std::vector<std::uint8_t>& mask);

FilterGrid rotate_filter(const FilterGrid& filter, int m, int n);

// Max over the orientation channels of every regular field.
GeometricTensor group_pool(const GeometricTensor& x);

struct Restriction {
  FieldType type;
  // channel_map[new_channel] = old_channel
  std::vector<int> channel_map;
};

// Reinterprets regular C_N fields as pairs of regular C_{N/2} fields: even
// orientations form the first new field, odd orientations the second.
Restriction restrict_regular(const FieldType& field);

}  // namespace eqdp
