#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "check.hpp"
#include "doctest.h"
#include "eqdp/metrics.hpp"
#include "oracles.hpp"

using namespace eqdp;
namespace fs = std::filesystem;

namespace {

Matrix matrix(int rows, int cols, std::vector<Real> values) {
  Matrix m(rows, cols);
  m.values = std::move(values);
  return m;
}

// Linear weights of the head occupy the first inputs*outputs entries of the
// last layer's parameters.
void scale_head(Model& m, Real weight_scale, Real bias_scale) {
  std::vector<Real> p(m.params().begin(), m.params().end());
  const std::size_t head = m.layers().size() - 1;
  const std::size_t begin = m.layer_offset(head);
  const std::size_t bias = begin + m.layers()[head]->param_count() - m.classes();
  for (std::size_t i = begin; i < p.size(); ++i) p[i] *= i < bias ? weight_scale : bias_scale;
  m.set_params(p);
}

// ReLU, global pooling and a linear head over three input channels.
Model linear_model(const std::vector<Real>& weights, const std::vector<Real>& bias) {
  ModelSpec spec;
  spec.group = GroupSpec::baseline();
  spec.classes = static_cast<int>(bias.size());
  Model m(spec, [classes = spec.classes] {
    std::vector<LayerPtr> layers;
    layers.push_back(std::make_unique<ReluLayer>("relu", trivial_type(3)));
    layers.push_back(std::make_unique<GlobalAvgPoolLayer>("pool", trivial_type(3)));
    layers.push_back(std::make_unique<LinearLayer>("head", trivial_type(3), classes));
    return layers;
  });
  std::vector<Real> p = weights;
  p.insert(p.end(), bias.begin(), bias.end());
  m.set_params(p);
  return m;
}

Model c4_unrestricted(std::uint64_t seed) {
  Model m = build_resnet9(GroupSpec::cyclic(4), {8, 16, 32}, 9, WidthMode::kParamMatched, false);
  m.initialize(seed);
  return m;
}

}  // namespace

TEST_CASE("accuracy fixtures") {
  const std::vector<int> labels{0, 1, 2, 1};
  const Matrix perfect = matrix(4, 3, {5, 0, 0, 0, 5, 0, 0, 0, 5, 0, 5, 0});
  CHECK(accuracy(perfect, labels) == 1.0);
  const Matrix wrong = matrix(4, 3, {0, 5, 0, 5, 0, 0, 5, 0, 0, 5, 0, 0});
  CHECK(accuracy(wrong, labels) == 0.0);
  const Matrix three = matrix(4, 3, {5, 0, 0, 0, 5, 0, 0, 0, 5, 5, 0, 0});
  CHECK(accuracy(three, labels) == 0.75);
  const Matrix ties = matrix(2, 3, {1, 1, 1, 0, 2, 2});
  CHECK(argmax(ties.row(0)) == 0);
  CHECK(argmax(ties.row(1)) == 1);
  CHECK(accuracy(ties, std::vector<int>{0, 2}) == 0.5);
  CHECK(accuracy(Matrix(0, 3), std::vector<int>{}) == 0.0);
  CHECK_ERROR_CODE(accuracy(perfect, std::vector<int>{0}), ErrorCode::kLayoutMismatch);
}

TEST_CASE("brier fixtures") {
  const std::vector<int> labels{0, 2};
  CHECK(brier(matrix(2, 3, {1, 0, 0, 0, 0, 1}), labels) == 0.0);
  CHECK(brier(matrix(1, 2, {Real(0.5), Real(0.5)}), std::vector<int>{1}) == 0.5);
  const Real third = Real(1) / Real(3);
  CHECK(brier(matrix(1, 3, {0.25, 0.25, 0.5}), std::vector<int>{0}) == doctest::Approx(0.875));
  CHECK(brier(matrix(1, 2, {0, 1}), std::vector<int>{0}) == 2.0);
  CHECK(brier(matrix(1, 3, {third, third, third}), std::vector<int>{1}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-6));
  const Matrix p = probabilities(matrix(1, 4, {0, 0, 0, 0}));
  CHECK(brier(p, std::vector<int>{3}) == doctest::Approx(0.75).epsilon(1e-6));
  try {
    brier(matrix(2, 2, {1, 0, Real(0.6), Real(0.6)}), std::vector<int>{0, 1});
    FAIL("expected validation-error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kValidationError);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
  CHECK_ERROR_CODE(brier(matrix(1, 2, {1, 0}), std::vector<int>{2}), ErrorCode::kInvalidArgument);
}

TEST_CASE("probabilities are a softmax per row") {
  const Matrix p = probabilities(matrix(2, 3, {1000, 0, -1000, 1, 2, 3}));
  CHECK(p.row(0)[0] == Real(1));
  CHECK(p.row(0)[2] == Real(0));
  double sum = 0.0;
  for (Real v : p.row(1)) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(p.row(1)[2] / p.row(1)[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-5));
}

TEST_CASE("l0 sparsity fixtures") {
  CHECK(l0_sparsity(std::vector<double>{0.0, 1.0, 2.0}) == doctest::Approx(1.0 / 3.0));
  CHECK(l0_sparsity(std::vector<double>(10, 0.0)) == 1.0);
  CHECK(l0_sparsity(std::vector<double>(10, 1.0)) == 0.0);
  CHECK(l0_sparsity(std::vector<double>{1e-5, -1e-5, 1.1e-5}) == doctest::Approx(2.0 / 3.0));
  CHECK(l0_sparsity(std::vector<double>{}) == 1.0);
  const auto g = testing::random_vector(1000, 4, 1e-3);
  const std::vector<double> grad(g.begin(), g.end());
  double last = 0.0;
  for (double t : {1e-7, 1e-6, 1e-5, 1e-4, 1e-3}) {
    const double s = l0_sparsity(grad, t);
    CHECK(s >= last);
    last = s;
  }
  CHECK_ERROR_CODE(l0_sparsity(grad, 0.0), ErrorCode::kInvalidArgument);
}

TEST_CASE("metrics records serialise with null validation accuracy") {
  MetricsRecord r;
  r.step = 12;
  r.epoch = 1;
  r.loss = 1.5;
  r.epsilon_spent = 0.25;
  const nlohmann::json j = to_json(r);
  CHECK(j["val_accuracy"].is_null());
  CHECK(j.size() == 9);
  const MetricsRecord back = metrics_from_json(j);
  CHECK(!back.val_accuracy);
  CHECK(back.step == 12);
  CHECK(back.epsilon_spent == 0.25);
  r.val_accuracy = 0.5;
  CHECK(to_json(r)["val_accuracy"] == 0.5);
  CHECK(*metrics_from_json(to_json(r)).val_accuracy == 0.5);
  CHECK_THROWS(metrics_from_json(nlohmann::json{{"step", 1}}));
}

TEST_CASE("bilinear resize") {
  const std::vector<double> src{1, 2, 3, 4};
  const auto same = resize_bilinear(src, 2, 2, 2, 2);
  CHECK(same == src);
  const auto up = resize_bilinear(src, 2, 2, 4, 4);
  CHECK(up[0] == 1.0);
  CHECK(up[15] == 4.0);
  CHECK(up[5] == doctest::Approx(1.75));
  const auto flat = resize_bilinear(std::vector<double>{7}, 1, 1, 3, 5);
  for (double v : flat) CHECK(v == 7.0);
}

TEST_CASE("grad-cam") {
  Model m = c4_unrestricted(5);
  const FeatureMap x = testing::random_map(3, 28, 28, 11, 0.0, 1.0);
  const Heatmap h = grad_cam(m, x, 2);
  CHECK(h.source == HeatmapSource::kGradCam);
  CHECK(h.height == 28);
  CHECK(h.width == 28);
  CHECK(h.values.size() == 784);
  double hi = 0.0;
  for (double v : h.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    hi = std::max(hi, v);
  }
  CHECK((hi == 1.0 || hi == 0.0));

  for (int turns = 1; turns <= 3; ++turns) {
    const Heatmap r = grad_cam(m, rotate90(x, turns), 2);
    FeatureMap hmap(1, 28, 28), rmap(1, 28, 28);
    for (std::size_t i = 0; i < 784; ++i) {
      hmap.data()[i] = static_cast<Real>(h.values[i]);
      rmap.data()[i] = static_cast<Real>(r.values[i]);
    }
    CAPTURE(turns);
    CHECK(testing::max_abs_diff(rotate90(hmap, turns).data(), rmap.data()) < 1e-3);
  }

  Model scaled = m;
  scale_head(scaled, Real(3.5), Real(1));
  const Heatmap s = grad_cam(scaled, x, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < 784; ++i) worst = std::max(worst, std::abs(s.values[i] - h.values[i]));
  CHECK(worst < 1e-5);

  Model zero = m;
  scale_head(zero, Real(0), Real(1));
  const Heatmap z = grad_cam(zero, x, 2);
  for (double v : z.values) CHECK(v == 0.0);
  CHECK(z.raw_max == 0.0);

  CHECK_ERROR_CODE(grad_cam(m, x, 9), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(grad_cam(m, x, -1), ErrorCode::kInvalidArgument);
}

TEST_CASE("guided backprop on a linear model") {
  // Class 1 weights per channel: 0.5, -0.2, 0.8.
  const std::vector<Real> w{1, 1, 1, Real(0.5), Real(-0.2), Real(0.8)};
  const Model m = linear_model(w, {0, 0});
  const FeatureMap x = testing::random_map(3, 6, 6, 21);
  const Heatmap h = guided_backprop(m, x, 1);
  CHECK(h.source == HeatmapSource::kGuidedBackprop);
  CHECK(h.height == 6);
  std::vector<double> expected(36, 0.0);
  for (int c = 0; c < 3; ++c)
    for (std::size_t p = 0; p < 36; ++p)
      if (x.channel(c)[p] > 0 && w[3 + c] > 0) expected[p] = std::max(expected[p], double(w[3 + c]) / 36.0);
  const double peak = *std::max_element(expected.begin(), expected.end());
  REQUIRE(peak > 0.0);
  CHECK(h.raw_max == doctest::Approx(peak).epsilon(1e-6));
  for (std::size_t p = 0; p < 36; ++p) CHECK(h.values[p] == doctest::Approx(expected[p] / peak).epsilon(1e-6));

  const Model negative = linear_model({1, 1, 1, -1, -2, -3}, {0, 0});
  const Heatmap z = guided_backprop(negative, x, 1);
  for (double v : z.values) CHECK(v == 0.0);
  CHECK_ERROR_CODE(guided_backprop(m, x, 2), ErrorCode::kInvalidArgument);

  const Heatmap full = guided_backprop(c4_unrestricted(2), testing::random_map(3, 28, 28, 3, 0.0, 1.0), 0);
  CHECK(full.values.size() == 784);
  for (double v : full.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("heatmap files") {
  Heatmap h;
  h.height = 2;
  h.width = 3;
  h.values = {0.0, 0.5, 1.0, 0.25, 0.75, 1.0};
  h.raw_min = -0.5;
  h.raw_max = 2.0;
  const fs::path dir = fs::temp_directory_path() / "eqdp_test_metrics_heatmap";
  fs::remove_all(dir);
  const fs::path pgm = dir / "cam.pgm";
  write_heatmap(pgm, h);
  std::ifstream in(pgm, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 128);
  CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 255);
  std::ifstream side(pgm.string() + ".json");
  const auto j = nlohmann::json::parse(side);
  CHECK(j["source"] == "gradcam");
  CHECK(j["max"] == 2.0);
  CHECK(j["min"] == -0.5);
  fs::remove_all(dir);
}

TEST_CASE("filter impulse response") {
  Model m = c4_unrestricted(8);
  const auto fir = fir_probe(m);
  CHECK(fir.size() == 8);
  CHECK(fir.front().layer == m.layers().front()->name());
  for (const auto& e : fir) CHECK(e.magnitude > 0.0);

  Model doubled = m;
  std::vector<Real> p(m.params().begin(), m.params().end());
  for (std::size_t i = 0; i < m.layer_offset(1); ++i) p[i] *= 2;
  doubled.set_params(p);
  CHECK(fir_probe(doubled).front().magnitude == doctest::Approx(2 * fir.front().magnitude).epsilon(1e-6));

  Model zero = m;
  zero.set_params(std::vector<Real>(m.param_count(), Real(0)));
  for (const auto& e : fir_probe(zero)) CHECK(e.magnitude == 0.0);

  Model baseline = build_resnet9(GroupSpec::baseline(), {8, 16, 32}, 9);
  baseline.initialize(1);
  CHECK(fir_probe(baseline).size() == 8);
}
