// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, indented detail lines
// below it. Exit status 0 only when every criterion passes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eqdp/dp.hpp"
#include "eqdp/harness.hpp"
#include "eqdp/metrics.hpp"
#include "eqdp/model.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "rdp_oracle.hpp"
#include "synthetic.hpp"

using namespace eqdp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void expect(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok    " : "FAILED") + " " + what);
  }
  void note(const std::string& what) { details.push_back("       " + what); }
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void visit(const Layer& layer, const std::function<void(const Layer&)>& fn) {
  fn(layer);
  if (const auto* res = dynamic_cast<const ResidualLayer*>(&layer))
    for (const auto& child : res->body()) visit(*child, fn);
}

GeometricTensor batch_of(const FeatureMap& m, const FieldType& type) {
  GeometricTensor t(1, type, m.height(), m.width());
  t.set_sample(0, m);
  return t;
}

// Criterion: rotation invariance of whole models and equivariance of the
// convolution layers.
Outcome equivariance() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();

  struct Case {
    int order;
    std::vector<int> turns;
  };
  for (const Case& c : {Case{4, {1, 2, 3}}, Case{2, {2}}}) {
    Model m = build_resnet9(GroupSpec::cyclic(c.order), {8, 16, 32}, 9, WidthMode::kParamMatched, false);
    m.initialize(11);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const FeatureMap x = testing::random_map(3, 28, 28, 1000 + i, 0.0, 1.0);
      const FeatureMap y = m.forward_sample(x);
      for (int t : c.turns)
        worst = std::max(worst, testing::max_abs_diff(y.data(), m.forward_sample(rotate90(x, t)).data()));
    }
    out.expect(worst < 1e-4, fmt("C%d (no restriction), 100 inputs, rotations by %s: max |dlogit| = %.3g < 1e-4",
                                 c.order, c.order == 4 ? "90/180/270" : "180", worst));
  }

  for (int n : {1, 2, 4, 8, 16}) {
    const CyclicGroup grp(n);
    double worst = 0.0, scale = 0.0;
    for (bool lifting : {true, false}) {
      const FieldType in = lifting ? trivial_type(3, grp) : regular_type(grp, 2);
      const FilterBank bank(in, 3, 3);
      for (int seed = 0; seed < 3; ++seed) {
        const auto w = testing::random_vector(bank.param_count(), 31 * n + 7 * seed + lifting);
        const auto apply = [&](const FeatureMap& x) {
          const GeometricTensor t = batch_of(x, in);
          return (lifting ? lift_conv(t, bank, w, 1) : group_conv(t, bank, w, 1)).sample(0);
        };
        const FeatureMap x = testing::random_map(in.channels(), 15, 15, 500 + 10 * n + seed);
        const FeatureMap y = apply(x);
        scale = std::max(scale, testing::max_abs(y.data()));
        for (int g = 1; g < n; ++g) {
          if ((4 * g) % n != 0) continue;
          const int turns = 4 * g / n;
          FeatureMap xr = rotate90(x, turns);
          if (!lifting) xr = shift_orientations(xr, n, g);
          const FeatureMap expected = shift_orientations(rotate90(y, turns), n, g);
          worst = std::max(worst, testing::max_abs_diff(apply(xr).data(), expected.data()));
        }
      }
    }
    if (n <= 4)
      out.expect(worst < 1e-5, fmt("C%d lift/group conv at 90-degree multiples: max abs error %.3g < 1e-5", n, worst));
    else
      out.note(fmt("C%d lift/group conv at 90-degree multiples (reference only): max abs error %.3g, "
                   "%.2g of the largest output",
                   n, worst, worst / scale));
  }

  const int size = 33;
  for (int n : {8, 16}) {
    const CyclicGroup grp(n);
    double worst = 0.0;
    for (bool lifting : {true, false}) {
      const FieldType in = lifting ? trivial_type(3, grp) : regular_type(grp, 1);
      const FilterBank bank(in, 2, 5);
      const auto w = testing::random_vector(bank.param_count(), 90 + n + lifting);
      const auto apply = [&](const FeatureMap& x) {
        const GeometricTensor t = batch_of(x, in);
        return (lifting ? lift_conv(t, bank, w, 2) : group_conv(t, bank, w, 2)).sample(0);
      };
      const FeatureMap y = apply(testing::smooth_map(in.channels(), size, 0.0, 3));
      for (int g = 1; g < n; ++g) {
        const double angle = 2.0 * std::numbers::pi * g / n;
        FeatureMap rotated = testing::smooth_map(in.channels(), size, angle, 3);
        if (!lifting) rotated = shift_orientations(rotated, n, g);
        worst = std::max(worst, testing::rotation_mismatch(y, apply(rotated), angle, n, g, 12.0));
      }
    }
    out.expect(worst < 0.1, fmt("C%d lift/group conv, all %d rotations of low-pass inputs: max relative L2 %.3g < 0.1",
                                n, n, worst));
  }
  const double elapsed = seconds_since(start);
  out.expect(elapsed < 60.0, fmt("runtime %.1f s < 60 s", elapsed));
  return out;
}

json run_f64_probe(const std::string& args) {
  const std::string command = std::string(EQDP_GRADIENT_PROBE_F64) + " " + args;
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) return json();
  std::string text;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) text += buf;
  if (pclose(pipe) != 0) return json();
  return json::parse(text, nullptr, false);
}

void describe_suite(Outcome& out, const json& suite, const std::string& label) {
  std::size_t smooth_models = 0, rounding_limited = 0;
  for (const auto& m : suite["models"]) {
    if (m["over_threshold_smooth"].get<std::size_t>() == 0) continue;
    ++smooth_models;
    rounding_limited += m["max_abs_error_over_threshold"].get<double>() <= m["rounding_bound"].get<double>();
  }
  out.note(fmt("%s: %zu parameters over %zu models; %zu probes cross an activation kink", label.c_str(),
               suite["params"].get<std::size_t>(), suite["models"].size(), suite["kinked"].get<std::size_t>()));
  out.note(fmt("%s: over threshold: %zu kink-crossing probes, %zu smooth probes", label.c_str(),
               suite["over_threshold_kinked"].get<std::size_t>(), suite["over_threshold_smooth"].get<std::size_t>()));
  out.note(fmt("%s: worst absolute error on smooth probes %.3g; loss-rounding bound 4 ulp(L)/h up to %.3g",
               label.c_str(), suite["max_abs_error_smooth"].get<double>(),
               suite["max_rounding_bound"].get<double>()));
  if (smooth_models > 0)
    out.note(fmt("%s: in %zu of %zu models with smooth probes over threshold, every such error is within the "
                 "rounding bound",
                 label.c_str(), rounding_limited, smooth_models));
}

// Criterion: finite-difference agreement of per-sample gradients.
Outcome gradients() {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();

  const json single = acceptance::run_gradient_suite(1e-3, 0, 1e-2);
  out.expect(single["over_threshold"] == 0,
             fmt("single precision, step 1e-3, every parameter: max relative error %.3g < 1e-2",
                 single["max_rel_error"].get<double>()));
  describe_suite(out, single, "single");

  const json extended = run_f64_probe("2e-5 6 1e-6");
  if (extended.is_discarded() || extended.is_null()) {
    out.expect(false, "extended-precision probe did not run");
  } else {
    out.expect(extended["over_threshold"] == 0 && extended["kinked"] == 0,
               fmt("extended precision, step 2e-5 (h/4 retries across kinks), every parameter: max relative "
                   "error %.3g < 1e-6",
                   extended["max_rel_error"].get<double>()));
    describe_suite(out, extended, "extended");
  }
  const json coarse = run_f64_probe("1e-3 0 1e-6");
  if (!coarse.is_discarded() && !coarse.is_null())
    out.note(fmt("extended precision at step 1e-3 without retries (reference only): max relative error %.3g; "
                 "at or over 1e-6: %zu kink-crossing, %zu smooth",
                 coarse["max_rel_error"].get<double>(), coarse["over_threshold_kinked"].get<std::size_t>(),
                 coarse["over_threshold_smooth"].get<std::size_t>()));

  const double elapsed = seconds_since(start);
  out.expect(elapsed < 120.0, fmt("runtime %.1f s < 120 s", elapsed));
  return out;
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Criterion: clipping bounds and Gaussian noise scale.
Outcome dp_mechanics() {
  Outcome out;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> log_scale(-4.0, 4.0);
  const int batch = 16;
  const std::size_t params = 256;
  double worst_row = 0.0, worst_replace = 0.0, worst_sum = 0.0;
  for (const double c : {0.1, 1.0, 5.0}) {
    for (int trial = 0; trial < 1000; ++trial) {
      PerSampleGrads g(batch, params);
      for (int b = 0; b < batch; ++b) {
        const double scale = trial % 50 == 0 && b == 0 ? 0.0 : std::pow(10.0, log_scale(rng));
        for (Real& v : g.row(b)) v = static_cast<Real>(scale * normal(rng));
      }
      const ClipResult all = clip_per_sample(g, c);
      std::vector<double> rows_sum(params, 0.0);
      for (int b = 0; b < batch; ++b) {
        PerSampleGrads one(1, params);
        std::copy(g.row(b).begin(), g.row(b).end(), one.row(0).begin());
        const ClipResult r = clip_per_sample(one, c);
        worst_row = std::max(worst_row, l2(r.summed) - c);
        for (std::size_t i = 0; i < params; ++i) rows_sum[i] += r.summed[i];
      }
      std::vector<double> d(params);
      for (std::size_t i = 0; i < params; ++i) d[i] = all.summed[i] - rows_sum[i];
      worst_sum = std::max(worst_sum, l2(d));

      PerSampleGrads replaced = g;
      const double scale = std::pow(10.0, log_scale(rng));
      for (Real& v : replaced.row(trial % batch)) v = static_cast<Real>(scale * normal(rng));
      const ClipResult other = clip_per_sample(replaced, c);
      for (std::size_t i = 0; i < params; ++i) d[i] = all.summed[i] - other.summed[i];
      worst_replace = std::max(worst_replace, l2(d) / c - 2.0);
    }
  }
  out.expect(worst_row <= 1e-6,
             fmt("3 x 1000 batches of 16: max post-clip norm - C = %.3g <= 1e-6", worst_row));
  out.expect(worst_replace <= 1e-6,
             fmt("replacing one row: max |delta sum| / C - 2 = %.3g <= 0 (rounding slack 1e-6)", worst_replace));
  out.note(fmt("batch clipped sum vs sum of individually clipped rows: max L2 gap %.3g", worst_sum));

  for (const auto& [sigma, c] : {std::pair{0.5, 1.0}, std::pair{1.1, 0.7}, std::pair{3.0, 2.0}}) {
    const std::vector<double> summed(1000, 0.25);
    const double lot = 32.0;
    double sum = 0.0, sum_sq = 0.0;
    const int draws = 200;
    for (int i = 0; i < draws; ++i) {
      const auto u = noisy_update(summed, sigma, c, lot, rng);
      for (std::size_t k = 0; k < u.size(); ++k) {
        const double z = u[k] * lot - summed[k];
        sum += z;
        sum_sq += z * z;
      }
    }
    const double n = static_cast<double>(draws) * summed.size();
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double expected = sigma * c * sigma * c;
    out.expect(std::abs(var - expected) <= 0.05 * expected,
               fmt("sigma=%.1f C=%.1f: Monte Carlo variance %.5g vs (sigma C)^2 = %.5g (rel %.2g%% <= 5%%)", sigma,
                   c, var, expected, 100.0 * std::abs(var - expected) / expected));
  }
  return out;
}

// Criterion: RDP accountant values, oracle agreement, calibration and monotonicity.
Outcome accountant() {
  Outcome out;
  const EpsilonResult one = epsilon_spent(1.0, 1.0, 1, 1e-5);
  out.expect(std::abs(one.epsilon - 5.30) <= 0.01,
             fmt("q=1 sigma=1 T=1 delta=1e-5: epsilon = %.6f (order %.2f), |eps - 5.30| <= 0.01", one.epsilon,
                 one.order));

  double worst = 0.0;
  int points = 0;
  for (double q : {0.001, 0.01, 0.05, 0.128, 0.2, 0.7})
    for (double sigma : {0.6, 1.0, 1.8, 2.5, 5.0})
      for (int alpha : {2, 3, 4, 5, 6, 8, 12, 16, 24, 32, 48, 64}) {
        const double want = testing::rdp_oracle(q, sigma, alpha);
        worst = std::max(worst, std::abs(rdp_sgm_integer(q, sigma, alpha) - want) / want);
        ++points;
      }
  out.expect(worst <= 1e-10,
             fmt("%d integer-order points vs 100-digit binomial sum: max relative error %.3g <= 1e-10", points, worst));

  const double sigma = calibrate_sigma(7.42, 1e-5, 0.05, 2000);
  const double back = epsilon_spent(0.05, sigma, 2000, 1e-5).epsilon;
  out.expect(back <= 7.42 && std::abs(back - 7.42) <= 1e-3 * 7.42,
             fmt("calibrate eps=7.42 delta=1e-5 q=0.05 T=2000: sigma = %.6f, round trip eps = %.6f", sigma, back));
  const double desk_q = 256.0 / 2000.0;
  const double desk_sigma = calibrate_sigma(7.42, 1e-5, desk_q, 80);
  const double desk_back = epsilon_spent(desk_q, desk_sigma, 80, 1e-5).epsilon;
  out.expect(desk_back <= 7.42 && std::abs(desk_back - 7.42) <= 1e-3 * 7.42,
             fmt("desk protocol q=0.128 T=80: sigma = %.6f, round trip eps = %.6f", desk_sigma, desk_back));

  int grid = 0, violations = 0;
  for (double q : {0.001, 0.01, 0.05, 0.2, 1.0})
    for (double s : {0.5, 0.8, 1.2, 2.0, 5.0})
      for (double t : {1.0, 100.0}) {
        ++grid;
        const double e = epsilon_spent(q, s, t, 1e-5).epsilon;
        bool ok = epsilon_spent(q, s, 2 * t, 1e-5).epsilon > e;
        ok = ok && epsilon_spent(q, 1.1 * s, t, 1e-5).epsilon <= e;
        ok = ok && epsilon_spent(q, s, t, 1e-3).epsilon < e;
        if (q < 1.0) ok = ok && epsilon_spent(std::min(1.0, 2 * q), s, t, 1e-5).epsilon >= e;
        violations += !ok;
      }
  out.expect(violations == 0,
             fmt("monotone in T (up), sigma (down), q (up), delta (down) on %d grid points: %d violations", grid,
                 violations));
  return out;
}

// Criterion: closed-form parameter counts.
Outcome parameter_accounting() {
  Outcome out;
  const Model e = build_resnet9(GroupSpec::baseline(), {8, 16, 32}, 9);
  out.expect(e.param_count() == 38897, fmt("{e} [8,16,32], 9 classes: %zu parameters == 38897", e.param_count()));
  int convs = 0, mismatches = 0;
  for (int n : {1, 2, 4, 8, 16})
    for (WidthMode mode : {WidthMode::kEqualFields, WidthMode::kParamMatched})
      for (bool restriction : {true, false}) {
        const Model m = build_resnet9(GroupSpec::cyclic(n), {8, 16, 32}, 9, mode, restriction);
        for (const auto& layer : m.layers())
          visit(*layer, [&](const Layer& l) {
            const auto* conv = dynamic_cast<const EquivariantConvLayer*>(&l);
            if (!conv) return;
            ++convs;
            const FieldType in = l.in_type();
            const std::size_t f_in = conv->bank().lifting() ? in.channels() : in.multiplicity;
            const std::size_t n_in = conv->bank().lifting() ? 1 : in.group.order();
            const std::size_t expected = l.out_type().multiplicity * f_in * n_in * 9;
            mismatches += l.param_count() != expected;
          });
      }
  out.expect(mismatches == 0,
             fmt("%d equivariant convolutions (C1..C16, both width modes, restriction on/off): "
                 "f_out*f_in*N*k^2 mismatches = %d",
                 convs, mismatches));
  return out;
}

// Criterion: Brier, sparsity and Grad-CAM rotation.
Outcome metrics() {
  Outcome out;
  Matrix logits(1, 4);
  const double b = brier(probabilities(logits), std::vector<int>{2});
  out.expect(b == 0.75, fmt("Brier of the uniform 4-class prediction = %.17g == 0.75", b));

  const double third = l0_sparsity(std::vector<double>{0.0, 1.0, 2.0});
  const double zeros = l0_sparsity(std::vector<double>(100, 0.0));
  const double ones = l0_sparsity(std::vector<double>(100, 1.0));
  const double edge = l0_sparsity(std::vector<double>{1e-5, -1e-5, 2e-5, 0.5});
  out.expect(third == 1.0 / 3.0 && zeros == 1.0 && ones == 0.0 && edge == 0.5,
             fmt("l0 sparsity fixtures: [0,1,2] -> %.17g, zeros -> %g, ones -> %g, [1e-5,-1e-5,2e-5,0.5] -> %g",
                 third, zeros, ones, edge));

  Model m = build_resnet9(GroupSpec::cyclic(4), {8, 16, 32}, 9, WidthMode::kParamMatched, false);
  m.initialize(5);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const FeatureMap x = testing::random_map(3, 28, 28, 300 + i, 0.0, 1.0);
    for (int cls : {0, 4}) {
      const Heatmap h = grad_cam(m, x, cls);
      FeatureMap hm(1, 28, 28);
      for (std::size_t p = 0; p < h.values.size(); ++p) hm.data()[p] = static_cast<Real>(h.values[p]);
      for (int t = 1; t <= 3; ++t) {
        const Heatmap r = grad_cam(m, rotate90(x, t), cls);
        const FeatureMap rotated = rotate90(hm, t);
        for (std::size_t p = 0; p < r.values.size(); ++p)
          worst = std::max(worst, std::abs(r.values[p] - static_cast<double>(rotated.data()[p])));
      }
    }
  }
  out.expect(worst < 1e-3,
             fmt("Grad-CAM of a C4-invariant model, 10 inputs x 2 classes x 3 rotations: max error %.3g < 1e-3", worst));
  return out;
}

TrainConfig desk_config(const fs::path& data, const fs::path& work, const std::string& group, int seed) {
  TrainConfig c;
  c.dataset_dir = data.string();
  c.dataset_name = "oriented-patterns";
  c.group = group;
  c.widths = {8, 16, 32};
  c.epochs = 10;
  c.lot_size = 256;
  c.target_epsilon = 7.42;
  c.delta = 1e-5;
  c.dp = true;
  c.seed = static_cast<std::uint64_t>(seed);
  c.threads = 1;
  c.output_dir = (work / ("desk_" + group + "_" + std::to_string(seed))).string();
  return c;
}

// Criterion: desk-scale C4 vs {e} comparison under DP.
Outcome desk_experiment(const fs::path& work) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  const fs::path data = work / "oriented_patterns";
  fs::remove_all(data);
  testing::write_oriented_patterns(data, 500, 125, 7);

  int wins = 0;
  double sparsity_e = 0.0, sparsity_c4 = 0.0;
  for (int seed = 0; seed < 3; ++seed) {
    const RunManifest e = run_training(desk_config(data, work, "e", seed));
    const RunManifest c4 = run_training(desk_config(data, work, "C4", seed));
    wins += c4.final_val_accuracy > e.final_val_accuracy;
    sparsity_e += e.mean_grad_sparsity / 3.0;
    sparsity_c4 += c4.mean_grad_sparsity / 3.0;
    out.note(fmt("seed %d: val accuracy {e} %.4f vs C4 %.4f; sparsity {e} %.4f vs C4 %.4f; eps {e} %.4f C4 %.4f; "
                 "sigma %.4f; params {e} %zu C4 %zu",
                 seed, e.final_val_accuracy, c4.final_val_accuracy, e.mean_grad_sparsity, c4.mean_grad_sparsity,
                 e.final_epsilon, c4.final_epsilon, e.sigma, e.param_count, c4.param_count));
  }
  out.expect(wins >= 2, fmt("C4 beats {e} in validation accuracy in %d of 3 seeds (need >= 2)", wins));
  out.expect(sparsity_c4 > sparsity_e,
             fmt("mean l0(1e-5) gradient sparsity: C4 %.4f > {e} %.4f", sparsity_c4, sparsity_e));
  const double elapsed = seconds_since(start);
  out.expect(elapsed < 1800.0, fmt("runtime %.0f s < 1800 s", elapsed));
  return out;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Criterion: identical seed and config give identical metrics streams.
Outcome determinism(const fs::path& work) {
  Outcome out;
  const fs::path data = work / "determinism_data";
  fs::remove_all(data);
  testing::write_oriented_patterns(data, 50, 10, 3);
  for (const std::string group : {"e", "C4", "C8"}) {
    std::vector<std::string> streams;
    for (int run = 0; run < 2; ++run) {
      TrainConfig c;
      c.dataset_dir = data.string();
      c.group = group;
      c.epochs = 2;
      c.lot_size = 40;
      c.dp = true;
      c.seed = 17;
      c.threads = 1;
      c.augmentation = {2, true, true, 4};
      c.output_dir = (work / ("determinism_" + group + "_" + std::to_string(run))).string();
      fs::remove_all(c.output_dir);
      run_training(c);
      streams.push_back(slurp(fs::path(c.output_dir) / "metrics.jsonl"));
    }
    const std::size_t lines = std::count(streams[0].begin(), streams[0].end(), '\n');
    out.expect(!streams[0].empty() && streams[0] == streams[1],
               fmt("%s, DP on, augmentation x2, single thread: two runs, %zu metrics lines, byte-identical",
                   group.c_str(), lines));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "eqdp_acceptance";
  std::vector<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      only.push_back(argv[++i]);
    } else {
      std::cerr << "usage: eqdp_acceptance [--work DIR] [--only NAME]...\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"equivariance", equivariance},
      {"gradients", gradients},
      {"dp-mechanics", dp_mechanics},
      {"accountant", accountant},
      {"parameter-accounting", parameter_accounting},
      {"metrics", metrics},
      {"desk-experiment", [&] { return desk_experiment(work); }},
      {"determinism", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << fmt(" (%.1f s)", seconds_since(start)) << "\n";
    for (const auto& d : o.details) std::cout << "    " << d << "\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
