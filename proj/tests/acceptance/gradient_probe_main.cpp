// SPDX-License-Identifier: Apache-2.0
// Prints the gradient suite of this build as one JSON document.
#include <iostream>
#include <string>

#include "gradient_suite.hpp"

int main(int argc, char** argv) {
  const double step = argc > 1 ? std::stod(argv[1]) : 1e-3;
  const int refinements = argc > 2 ? std::stoi(argv[2]) : 0;
  const double threshold = argc > 3 ? std::stod(argv[3]) : 1e-2;
  std::cout << eqdp::acceptance::run_gradient_suite(step, refinements, threshold).dump() << "\n";
  return 0;
}
