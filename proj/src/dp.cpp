// SPDX-License-Identifier: Apache-2.0
#include "eqdp/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "eqdp/error.hpp"

namespace eqdp {
namespace {

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

RdpCurve RdpCurve::composed(double times) const {
  RdpCurve out = *this;
  for (double& v : out.values) v *= times;
  return out;
}

std::vector<double> default_orders() {
  std::vector<double> orders{1.25, 1.5, 1.75};
  for (double a = 2.0; a < 12.0; a += 0.5) orders.push_back(a);
  for (int a = 12; a <= 64; ++a) orders.push_back(a);
  return orders;
}

std::vector<int> poisson_sample(int n, double q, std::mt19937_64& rng) {
  require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "sampling rate must lie in [0, 1]");
  require(n >= 0, ErrorCode::kInvalidArgument, "dataset size must be non-negative");
  std::vector<int> picked;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int i = 0; i < n; ++i)
    if (uniform(rng) < q) picked.push_back(i);
  return picked;
}

namespace {

// Sum of scale[b] * row b over [lo, hi), split at the midpoint so the
// reduction tree depends only on the row count. scratch[d] serves depth d
// and must be presized.
void pairwise_sum(const PerSampleGrads& grads, const std::vector<double>& scale, int lo, int hi,
                  std::vector<double>& out, std::vector<std::vector<double>>& scratch, std::size_t depth) {
  if (hi - lo == 1) {
    const auto row = grads.row(lo);
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = scale[lo] * row[i];
    return;
  }
  const int mid = lo + (hi - lo) / 2;
  pairwise_sum(grads, scale, lo, mid, out, scratch, depth + 1);
  std::vector<double>& right = scratch[depth];
  pairwise_sum(grads, scale, mid, hi, right, scratch, depth + 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += right[i];
}

}  // namespace

ClipResult clip_per_sample(const PerSampleGrads& grads, double clip_norm) {
  require(clip_norm > 0.0, ErrorCode::kInvalidArgument, "clip norm must be positive");
  ClipResult out;
  out.summed.assign(grads.params, 0.0);
  out.norms.resize(grads.batch);
  std::vector<double> scale(grads.batch, 1.0);
  int clipped = 0;
  for (int b = 0; b < grads.batch; ++b) {
    double sq = 0.0;
    for (Real v : grads.row(b)) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    require(std::isfinite(norm), ErrorCode::kNumericFault,
            "non-finite gradient row for sample " + std::to_string(b));
    out.norms[b] = norm;
    if (norm > clip_norm) {
      scale[b] = clip_norm / norm;
      ++clipped;
    }
  }
  if (grads.batch > 0) {
    std::size_t depth = 0;
    while ((std::size_t{1} << depth) < static_cast<std::size_t>(grads.batch)) ++depth;
    std::vector<std::vector<double>> scratch(depth, std::vector<double>(grads.params));
    pairwise_sum(grads, scale, 0, grads.batch, out.summed, scratch, 0);
  }
  out.clip_fraction = grads.batch > 0 ? static_cast<double>(clipped) / grads.batch : 0.0;
  return out;
}

std::vector<double> noisy_update(std::span<const double> summed, double sigma, double clip_norm,
                                 double lot_size, std::mt19937_64& rng) {
  require(lot_size >= 1.0, ErrorCode::kInvalidArgument, "lot size must be >= 1");
  require(sigma >= 0.0 && clip_norm > 0.0, ErrorCode::kInvalidArgument, "bad noise parameters");
  std::vector<double> out(summed.begin(), summed.end());
  if (sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, sigma * clip_norm);
    for (double& v : out) v += gauss(rng);
  }
  for (double& v : out) v /= lot_size;
  return out;
}

double rdp_sgm_integer(double q, double sigma, int alpha) {
  require(alpha >= 2, ErrorCode::kInvalidArgument, "integer order must be >= 2");
  if (q == 0.0) return 0.0;
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double log_binom = 0.0;
  double total = -std::numeric_limits<double>::infinity();
  for (int j = 0; j <= alpha; ++j) {
    if (j > 0) log_binom += std::log(static_cast<double>(alpha - j + 1)) - std::log(static_cast<double>(j));
    const double term = log_binom + (alpha - j) * log_1mq + j * log_q +
                        (static_cast<double>(j) * (j - 1)) / (2.0 * sigma * sigma);
    total = log_add(total, term);
  }
  return std::max(0.0, total / (alpha - 1));
}

RdpCurve rdp_sgm(double q, double sigma, std::span<const double> orders) {
  require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "sampling rate must lie in [0, 1]");
  require(sigma >= 0.0, ErrorCode::kInvalidArgument, "noise multiplier must be non-negative");
  if (sigma == 0.0 && q > 0.0)
    fail(ErrorCode::kInfinitePrivacyLoss, "noise multiplier 0 gives unbounded privacy loss");
  RdpCurve curve;
  for (double alpha : orders) {
    require(alpha > 1.0, ErrorCode::kInvalidArgument, "Renyi orders must exceed 1");
    double value;
    if (q == 0.0)
      value = 0.0;
    else if (q == 1.0)
      value = alpha / (2.0 * sigma * sigma);
    else
      value = rdp_sgm_integer(q, sigma, static_cast<int>(std::ceil(alpha)));
    curve.orders.push_back(alpha);
    curve.values.push_back(value);
  }
  return curve;
}

RdpCurve rdp_sgm(double q, double sigma) {
  const auto orders = default_orders();
  return rdp_sgm(q, sigma, orders);
}

EpsilonResult rdp_to_epsilon(const RdpCurve& curve, double steps, double delta) {
  require(!curve.orders.empty() && curve.orders.size() == curve.values.size(),
          ErrorCode::kInvalidArgument, "empty Renyi order grid");
  require(delta > 0.0 && delta < 1.0, ErrorCode::kInvalidArgument, "delta must lie in (0, 1)");
  require(steps >= 0.0, ErrorCode::kInvalidArgument, "steps must be non-negative");
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0.0};
  const double log_inv_delta = -std::log(delta);
  for (std::size_t i = 0; i < curve.orders.size(); ++i) {
    const double eps = steps * curve.values[i] + log_inv_delta / (curve.orders[i] - 1.0);
    if (eps < best.epsilon) best = {eps, curve.orders[i]};
  }
  return best;
}

EpsilonResult epsilon_spent(double q, double sigma, double steps, double delta) {
  return rdp_to_epsilon(rdp_sgm(q, sigma), steps, delta);
}

double calibrate_sigma(double target_epsilon, double delta, double q, double steps,
                       CalibrationBracket bracket) {
  require(target_epsilon > 0.0, ErrorCode::kInvalidArgument, "target epsilon must be positive");
  require(q > 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "sampling rate must lie in (0, 1]");
  require(steps >= 1.0, ErrorCode::kInvalidArgument, "steps must be >= 1");
  const auto eps_at = [&](double sigma) { return epsilon_spent(q, sigma, steps, delta).epsilon; };
  double lo = bracket.low;
  double hi = bracket.high;
  if (eps_at(hi) > target_epsilon) {
    std::ostringstream msg;
    msg << "target epsilon " << target_epsilon << " unreachable with sigma in [" << lo << ", "
        << hi << "]";
    fail(ErrorCode::kCalibrationFailure, msg.str());
  }
  if (eps_at(lo) <= target_epsilon) return lo;
  for (int i = 0; i < bracket.iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) <= target_epsilon)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace eqdp
