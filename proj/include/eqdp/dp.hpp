// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "eqdp/model.hpp"

namespace eqdp {

struct PrivacyParams {
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;
  double sampling_rate = 1.0;
  std::int64_t steps = 1;
  double delta = 1e-5;
  double target_epsilon = 7.42;
};

struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> values;

  // Pointwise scaling, i.e. composition of `times` identical mechanisms.
  RdpCurve composed(double times) const;
};

// 1.25, 1.5, 1.75, 2, 2.5, ..., 12, 13, ..., 64.
std::vector<double> default_orders();

// Each index in [0, n) kept independently with probability q, in ascending order.
std::vector<int> poisson_sample(int n, double q, std::mt19937_64& rng);

struct ClipResult {
  std::vector<double> summed;
  double clip_fraction = 0.0;
  std::vector<double> norms;  // pre-clip
};

// Rows are scaled by min(1, C/||row||) and summed by a pairwise reduction
// whose tree depends only on the row count.
ClipResult clip_per_sample(const PerSampleGrads& grads, double clip_norm);

// (summed + N(0, (sigma*C)^2 I)) / lot_size.
std::vector<double> noisy_update(std::span<const double> summed, double sigma, double clip_norm,
                                 double lot_size, std::mt19937_64& rng);

// Sampled Gaussian mechanism RDP. Integer orders use the binomial expansion;
// fractional orders take the value at the next integer order.
RdpCurve rdp_sgm(double q, double sigma, std::span<const double> orders);
RdpCurve rdp_sgm(double q, double sigma);

// RDP of the integer order alpha (>= 2), evaluated in log space.
double rdp_sgm_integer(double q, double sigma, int alpha);

struct EpsilonResult {
  double epsilon = 0.0;
  double order = 0.0;
};

EpsilonResult rdp_to_epsilon(const RdpCurve& curve, double steps, double delta);

// Epsilon after `steps` of the sampled Gaussian mechanism.
EpsilonResult epsilon_spent(double q, double sigma, double steps, double delta);

struct CalibrationBracket {
  double low = 0.3;
  double high = 20.0;
  int iterations = 60;
};

// Smallest sigma in the bracket whose epsilon does not exceed the target.
double calibrate_sigma(double target_epsilon, double delta, double q, double steps,
                       CalibrationBracket bracket = {});

}  // namespace eqdp
