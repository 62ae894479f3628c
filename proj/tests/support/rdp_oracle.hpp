// SPDX-License-Identifier: Apache-2.0
// Integer-order RDP of the sampled Gaussian mechanism by direct evaluation
// of the binomial sum with 100 significant digits.
#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace eqdp::testing {

inline double rdp_oracle(double q, double sigma, int alpha) {
  using Big = boost::multiprecision::cpp_bin_float_100;
  const Big bq(q);
  const Big one_minus = Big(1) - bq;
  const Big two_s2 = Big(2) * Big(sigma) * Big(sigma);
  Big total = 0;
  Big binom = 1;
  for (int j = 0; j <= alpha; ++j) {
    if (j > 0) binom = binom * (alpha - j + 1) / j;
    total += binom * pow(one_minus, alpha - j) * pow(bq, j) * exp(Big(j) * (j - 1) / two_s2);
  }
  return static_cast<double>(log(total) / (alpha - 1));
}

}  // namespace eqdp::testing
