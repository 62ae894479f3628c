// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace eqdp {

// The rotation group C_N. Elements are indices in [0, N); element g is the
// counter-clockwise rotation by 2*pi*g/N.
class CyclicGroup {
 public:
  explicit CyclicGroup(int order = 1);

  int order() const { return order_; }
  double angle(int g) const;
  int compose(int g, int h) const { return (g + h) % order_; }
  int inverse(int g) const { return (order_ - g) % order_; }
  // True when every element is a multiple of a quarter turn (N in {1, 2, 4}).
  bool right_angles_only() const { return 4 % order_ == 0; }

  friend bool operator==(const CyclicGroup&, const CyclicGroup&) = default;

 private:
  int order_;
};

CyclicGroup make_cyclic_group(int n);

enum class FieldKind { kTrivial, kRegular };

// Channel layout of a feature tensor: `multiplicity` fields, each either a
// single invariant channel or N orientation channels. Layout is field-major.
struct FieldType {
  CyclicGroup group;
  FieldKind kind = FieldKind::kTrivial;
  int multiplicity = 1;

  int field_size() const { return kind == FieldKind::kRegular ? group.order() : 1; }
  int channels() const { return multiplicity * field_size(); }
  std::string describe() const;

  friend bool operator==(const FieldType&, const FieldType&) = default;
};

FieldType trivial_type(int multiplicity, CyclicGroup group = CyclicGroup(1));
FieldType regular_type(CyclicGroup group, int multiplicity);

}  // namespace eqdp
