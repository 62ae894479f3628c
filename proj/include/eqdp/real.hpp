// SPDX-License-Identifier: Apache-2.0
#pragma once

#ifndef EQDP_REAL
#define EQDP_REAL float
#endif

namespace eqdp {

// Scalar type of activations, parameters and gradients. The default build uses
// single precision; the extended-precision test build sets EQDP_REAL=double.
using Real = EQDP_REAL;

}  // namespace eqdp
