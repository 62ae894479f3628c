// SPDX-License-Identifier: Apache-2.0
#include "eqdp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "eqdp/error.hpp"

namespace eqdp {

nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json j{{"step", r.step},
                   {"epoch", r.epoch},
                   {"loss", r.loss},
                   {"train_accuracy", r.train_accuracy},
                   {"val_accuracy", nullptr},
                   {"epsilon_spent", r.epsilon_spent},
                   {"grad_sparsity", r.grad_sparsity},
                   {"clip_fraction", r.clip_fraction},
                   {"brier", r.brier}};
  if (r.val_accuracy) j["val_accuracy"] = *r.val_accuracy;
  return j;
}

MetricsRecord metrics_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<int>();
  r.epoch = j.at("epoch").get<int>();
  r.loss = j.at("loss").get<double>();
  r.train_accuracy = j.at("train_accuracy").get<double>();
  if (j.contains("val_accuracy") && !j["val_accuracy"].is_null())
    r.val_accuracy = j["val_accuracy"].get<double>();
  r.epsilon_spent = j.at("epsilon_spent").get<double>();
  r.grad_sparsity = j.at("grad_sparsity").get<double>();
  r.clip_fraction = j.at("clip_fraction").get<double>();
  r.brier = j.at("brier").get<double>();
  return r;
}

int argmax(std::span<const Real> row) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(row.size()); ++c)
    if (row[c] > row[best]) best = c;
  return best;
}

double accuracy(const Matrix& logits, std::span<const int> labels) {
  require(static_cast<int>(labels.size()) == logits.rows, ErrorCode::kLayoutMismatch,
          "label count does not match logits");
  if (labels.empty()) return 0.0;
  int correct = 0;
  for (int b = 0; b < logits.rows; ++b) correct += argmax(logits.row(b)) == labels[b];
  return static_cast<double>(correct) / logits.rows;
}

Matrix probabilities(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (int b = 0; b < logits.rows; ++b) {
    const auto p = softmax(logits.row(b));
    std::copy(p.begin(), p.end(), out.row(b).begin());
  }
  return out;
}

double brier(const Matrix& probs, std::span<const int> labels) {
  require(static_cast<int>(labels.size()) == probs.rows, ErrorCode::kLayoutMismatch,
          "label count does not match probabilities");
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (int b = 0; b < probs.rows; ++b) {
    const auto row = probs.row(b);
    require(labels[b] >= 0 && labels[b] < probs.cols, ErrorCode::kInvalidArgument,
            "label out of range");
    double sum = 0.0;
    double sq = 0.0;
    for (int c = 0; c < probs.cols; ++c) {
      sum += row[c];
      const double d = row[c] - (c == labels[b] ? 1.0 : 0.0);
      sq += d * d;
    }
    require(std::abs(sum - 1.0) <= 1e-5, ErrorCode::kValidationError,
            "probability row " + std::to_string(b) + " sums to " + std::to_string(sum));
    total += sq;
  }
  return total / probs.rows;
}

double l0_sparsity(std::span<const double> grad, double threshold) {
  require(threshold > 0.0, ErrorCode::kInvalidArgument, "sparsity threshold must be positive");
  if (grad.empty()) return 1.0;
  std::size_t small = 0;
  for (double g : grad) small += std::abs(g) <= threshold;
  return static_cast<double>(small) / grad.size();
}

std::string_view heatmap_source_name(HeatmapSource source) {
  return source == HeatmapSource::kGradCam ? "gradcam" : "guided_backprop";
}

std::vector<double> resize_bilinear(std::span<const double> src, int src_h, int src_w, int dst_h,
                                    int dst_w) {
  std::vector<double> out(static_cast<std::size_t>(dst_h) * dst_w);
  const auto coord = [](int dst, int src_n, int dst_n, int& i0, int& i1, double& t) {
    double s = (dst + 0.5) * src_n / dst_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, src_n - 1);
    t = s - i0;
  };
  for (int y = 0; y < dst_h; ++y) {
    int y0, y1;
    double ty;
    coord(y, src_h, dst_h, y0, y1, ty);
    for (int x = 0; x < dst_w; ++x) {
      int x0, x1;
      double tx;
      coord(x, src_w, dst_w, x0, x1, tx);
      const auto v = [&](int yy, int xx) { return src[static_cast<std::size_t>(yy) * src_w + xx]; };
      out[static_cast<std::size_t>(y) * dst_w + x] =
          (1 - ty) * ((1 - tx) * v(y0, x0) + tx * v(y0, x1)) + ty * ((1 - tx) * v(y1, x0) + tx * v(y1, x1));
    }
  }
  return out;
}

namespace {

void check_class(const Model& model, int target_class) {
  require(target_class >= 0 && target_class < model.classes(), ErrorCode::kInvalidArgument,
          "class " + std::to_string(target_class) + " outside [0, " +
              std::to_string(model.classes()) + ")");
}

FeatureMap one_hot(int classes, int c) {
  FeatureMap g(classes, 1, 1);
  g.data()[c] = Real(1);
  return g;
}

Heatmap finish(HeatmapSource source, int h, int w, std::vector<double> raw) {
  Heatmap map;
  map.source = source;
  map.height = h;
  map.width = w;
  map.raw_min = raw.empty() ? 0.0 : *std::min_element(raw.begin(), raw.end());
  map.raw_max = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  if (map.raw_max > 0.0)
    for (double& v : raw) v = std::max(0.0, v) / map.raw_max;
  else
    std::fill(raw.begin(), raw.end(), 0.0);
  map.values = std::move(raw);
  return map;
}

}  // namespace

Heatmap grad_cam(const Model& model, const FeatureMap& x, int target_class) {
  check_class(model, target_class);
  std::size_t target = model.layers().size();
  for (std::size_t i = 0; i < model.layers().size(); ++i)
    if (model.layers()[i]->kind() == "global-pool") target = i;
  require(target < model.layers().size(), ErrorCode::kInvalidArgument,
          "model has no global pooling layer for Grad-CAM");

  SampleTrace trace;
  model.forward_sample(x, &trace);
  std::vector<FeatureMap> grads;
  model.backward_sample(trace, one_hot(model.classes(), target_class), {}, ReluMode::kStandard, &grads);
  const FeatureMap& act = trace.inputs[target];
  const FeatureMap& grad = grads[target];

  std::vector<double> cam(act.plane(), 0.0);
  for (int c = 0; c < act.channels(); ++c) {
    double weight = 0.0;
    for (Real g : grad.channel(c)) weight += g;
    weight /= static_cast<double>(act.plane());
    const auto a = act.channel(c);
    for (std::size_t p = 0; p < cam.size(); ++p) cam[p] += weight * a[p];
  }
  for (double& v : cam) v = std::max(0.0, v);
  auto up = resize_bilinear(cam, act.height(), act.width(), x.height(), x.width());
  return finish(HeatmapSource::kGradCam, x.height(), x.width(), std::move(up));
}

Heatmap guided_backprop(const Model& model, const FeatureMap& x, int target_class) {
  check_class(model, target_class);
  SampleTrace trace;
  model.forward_sample(x, &trace);
  const FeatureMap dx =
      model.backward_sample(trace, one_hot(model.classes(), target_class), {}, ReluMode::kGuided);
  std::vector<double> raw(dx.plane(), 0.0);
  for (int c = 0; c < dx.channels(); ++c) {
    const auto g = dx.channel(c);
    for (std::size_t p = 0; p < raw.size(); ++p) raw[p] = std::max(raw[p], std::abs(static_cast<double>(g[p])));
  }
  return finish(HeatmapSource::kGuidedBackprop, dx.height(), dx.width(), std::move(raw));
}

void write_heatmap(const std::filesystem::path& pgm_path, const Heatmap& map) {
  if (pgm_path.has_parent_path()) std::filesystem::create_directories(pgm_path.parent_path());
  std::ofstream out(pgm_path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + pgm_path.string());
  out << "P5\n" << map.width << " " << map.height << "\n255\n";
  for (double v : map.values)
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  std::ofstream side(pgm_path.string() + ".json");
  side << nlohmann::json{{"source", std::string(heatmap_source_name(map.source))},
                         {"height", map.height},
                         {"width", map.width},
                         {"min", map.raw_min},
                         {"max", map.raw_max}}
              .dump(2)
       << "\n";
}

std::vector<FirEntry> fir_probe(const Model& model, int size) {
  FeatureMap probe(model.input_type().channels(), size, size);
  for (int c = 0; c < probe.channels(); ++c) probe.at(c, size / 2, size / 2) = Real(1);
  SampleTrace trace;
  model.forward_sample(probe, &trace);

  const auto norm = [](const FeatureMap& m) {
    double sq = 0.0;
    for (Real v : m.data()) sq += static_cast<double>(v) * v;
    return std::sqrt(sq);
  };
  std::vector<FirEntry> out;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const FeatureMap& next = i + 1 < layers.size() ? trace.inputs[i + 1] : trace.logits;
    if (layers[i]->is_conv()) out.push_back({layers[i]->name(), norm(next)});
    if (const auto* res = dynamic_cast<const ResidualLayer*>(layers[i].get())) {
      for (std::size_t j = 0; j < res->body().size(); ++j)
        if (res->body()[j]->is_conv())
          out.push_back({res->body()[j]->name(), norm(trace.traces[i].children[j].output)});
    }
  }
  return out;
}

}  // namespace eqdp
