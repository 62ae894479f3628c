// SPDX-License-Identifier: Apache-2.0
#include "eqdp/field_type.hpp"

#include <numbers>

#include "eqdp/error.hpp"

namespace eqdp {

CyclicGroup::CyclicGroup(int order) : order_(order) {
  require(order >= 1, ErrorCode::kInvalidArgument,
          "cyclic group order must be >= 1, got " + std::to_string(order));
}

double CyclicGroup::angle(int g) const {
  return 2.0 * std::numbers::pi * static_cast<double>(g) / order_;
}

CyclicGroup make_cyclic_group(int n) { return CyclicGroup(n); }

std::string FieldType::describe() const {
  return std::to_string(multiplicity) +
         (kind == FieldKind::kRegular ? " regular" : " trivial") + " field(s) over C" +
         std::to_string(group.order());
}

FieldType trivial_type(int multiplicity, CyclicGroup group) {
  require(multiplicity >= 1, ErrorCode::kInvalidArgument, "field multiplicity must be >= 1");
  return FieldType{group, FieldKind::kTrivial, multiplicity};
}

FieldType regular_type(CyclicGroup group, int multiplicity) {
  require(multiplicity >= 1, ErrorCode::kInvalidArgument, "field multiplicity must be >= 1");
  return FieldType{group, FieldKind::kRegular, multiplicity};
}

}  // namespace eqdp
