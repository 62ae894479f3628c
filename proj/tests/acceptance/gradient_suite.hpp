// SPDX-License-Identifier: Apache-2.0
// Finite-difference gradient suite over the 2-field toy models, compiled
// against whichever precision the core library was built with.
#pragma once

#include "json.hpp"

namespace eqdp::acceptance {

// One entry per (group, seed) plus a summary. `step` is the central
// difference half-width; `refinements` bounds the h/4 retries on probes that
// cross an activation kink (0 disables them).
nlohmann::json run_gradient_suite(double step, int refinements, double threshold);

}  // namespace eqdp::acceptance
