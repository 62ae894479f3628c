// SPDX-License-Identifier: Apache-2.0
#include "eqdp/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "eqdp/error.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace eqdp {
namespace {

using nlohmann::json;

std::vector<LayerPtr> residual_body(const std::string& prefix, const FieldType& type, int fields,
                                    int kernel, bool equivariant) {
  std::vector<LayerPtr> body;
  for (int i = 1; i <= 2; ++i) {
    const std::string n = std::to_string(i);
    if (equivariant)
      body.push_back(std::make_unique<EquivariantConvLayer>(prefix + ".conv" + n, type, fields,
                                                            kernel, kernel / 2));
    else
      body.push_back(std::make_unique<Conv2dLayer>(prefix + ".conv" + n, type.channels(),
                                                   type.channels(), kernel, kernel / 2));
    body.push_back(std::make_unique<FieldNormLayer>(prefix + ".norm" + n, type));
    body.push_back(std::make_unique<ReluLayer>(prefix + ".relu" + n, type));
  }
  return body;
}

// Appends conv + norm + relu (+ maxpool) mapping `in` to `fields` fields.
FieldType conv_block(std::vector<LayerPtr>& layers, const std::string& prefix, const FieldType& in,
                     int fields, int kernel, bool equivariant, bool pool) {
  FieldType out;
  if (equivariant) {
    auto conv = std::make_unique<EquivariantConvLayer>(prefix + ".conv", in, fields, kernel,
                                                       kernel / 2);
    out = conv->out_type();
    layers.push_back(std::move(conv));
  } else {
    out = trivial_type(fields);
    layers.push_back(
        std::make_unique<Conv2dLayer>(prefix + ".conv", in.channels(), fields, kernel, kernel / 2));
  }
  layers.push_back(std::make_unique<FieldNormLayer>(prefix + ".norm", out));
  layers.push_back(std::make_unique<ReluLayer>(prefix + ".relu", out));
  if (pool) layers.push_back(std::make_unique<MaxPoolLayer>(prefix + ".pool", out));
  return out;
}

std::vector<LayerPtr> resnet9_layers(const ModelSpec& spec) {
  std::vector<LayerPtr> layers;
  const bool eq = spec.group.equivariant();
  int order = eq ? spec.group.order : 1;
  const auto mult = [&](int width) {
    return eq ? field_multiplicity(width, order, spec.width_mode) : width;
  };
  const int k = spec.kernel;

  FieldType t = trivial_type(spec.in_channels, CyclicGroup(order));
  if (!eq) t = trivial_type(spec.in_channels);
  t = conv_block(layers, "stem", t, mult(spec.widths[0]), k, eq, false);
  t = conv_block(layers, "stage1", t, mult(spec.widths[1]), k, eq, true);
  layers.push_back(std::make_unique<ResidualLayer>(
      "res1", residual_body("res1", t, t.multiplicity, k, eq)));
  if (eq && spec.restriction && order > 1 && order % 2 == 0) {
    auto restrict = std::make_unique<RestrictLayer>("restrict", t);
    t = restrict->out_type();
    order /= 2;
    layers.push_back(std::move(restrict));
  }
  t = conv_block(layers, "stage2", t, mult(spec.widths[2]), k, eq, true);
  t = conv_block(layers, "stage3", t, t.multiplicity, k, eq, true);
  layers.push_back(std::make_unique<ResidualLayer>(
      "res2", residual_body("res2", t, t.multiplicity, k, eq)));
  layers.push_back(std::make_unique<GlobalAvgPoolLayer>("global_pool", t));
  if (eq) {
    auto pool = std::make_unique<GroupPoolLayer>("group_pool", t);
    t = pool->out_type();
    layers.push_back(std::move(pool));
  }
  layers.push_back(std::make_unique<LinearLayer>("head", t, spec.classes));
  return layers;
}

std::vector<LayerPtr> toy_layers(const ModelSpec& spec, int fields) {
  std::vector<LayerPtr> layers;
  const bool eq = spec.group.equivariant();
  const int order = eq ? spec.group.order : 1;
  FieldType t = eq ? trivial_type(spec.in_channels, CyclicGroup(order)) : trivial_type(spec.in_channels);
  t = conv_block(layers, "stem", t, fields, spec.kernel, eq, false);
  t = conv_block(layers, "stage1", t, fields, spec.kernel, eq, true);
  layers.push_back(std::make_unique<ResidualLayer>(
      "res1", residual_body("res1", t, t.multiplicity, spec.kernel, eq)));
  if (eq && spec.restriction && order % 2 == 0) {
    auto restrict = std::make_unique<RestrictLayer>("restrict", t);
    t = restrict->out_type();
    layers.push_back(std::move(restrict));
  }
  layers.push_back(std::make_unique<GlobalAvgPoolLayer>("global_pool", t));
  if (eq) {
    auto pool = std::make_unique<GroupPoolLayer>("group_pool", t);
    t = pool->out_type();
    layers.push_back(std::move(pool));
  }
  layers.push_back(std::make_unique<LinearLayer>("head", t, spec.classes));
  return layers;
}

void check_chain(const std::vector<LayerPtr>& layers) {
  require(!layers.empty(), ErrorCode::kInvalidArgument, "model has no layers");
  for (std::size_t i = 1; i < layers.size(); ++i)
    require(layers[i - 1]->out_type().channels() == layers[i]->in_type().channels(),
            ErrorCode::kLayoutMismatch,
            "layer " + layers[i]->name() + " does not accept the output of " +
                layers[i - 1]->name());
}

json spec_to_json(const ModelSpec& spec) {
  return json{{"group", spec.group.name()},
              {"widths", spec.widths},
              {"classes", spec.classes},
              {"width_mode", std::string(width_mode_name(spec.width_mode))},
              {"restriction", spec.restriction},
              {"in_channels", spec.in_channels},
              {"kernel", spec.kernel}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.group = GroupSpec::parse(j.at("group").get<std::string>());
  spec.widths = j.at("widths").get<std::array<int, 3>>();
  spec.classes = j.at("classes").get<int>();
  spec.width_mode = parse_width_mode(j.at("width_mode").get<std::string>());
  spec.restriction = j.at("restriction").get<bool>();
  spec.in_channels = j.value("in_channels", 3);
  spec.kernel = j.value("kernel", 3);
  return spec;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string GroupSpec::name() const { return order == 0 ? "e" : "C" + std::to_string(order); }

GroupSpec GroupSpec::cyclic(int n) {
  require(n >= 1, ErrorCode::kInvalidArgument, "cyclic group order must be >= 1");
  return GroupSpec{n};
}

GroupSpec GroupSpec::parse(std::string_view text) {
  if (text == "e" || text == "{e}") return baseline();
  if (text.size() >= 2 && (text[0] == 'C' || text[0] == 'c')) {
    int n = 0;
    for (char ch : text.substr(1)) {
      require(ch >= '0' && ch <= '9', ErrorCode::kInvalidArgument,
              "bad group spec '" + std::string(text) + "'");
      n = n * 10 + (ch - '0');
      require(n <= 1024, ErrorCode::kInvalidArgument, "group order too large");
    }
    return cyclic(n);
  }
  fail(ErrorCode::kInvalidArgument, "bad group spec '" + std::string(text) + "' (want e or C<N>)");
}

std::string_view width_mode_name(WidthMode mode) {
  return mode == WidthMode::kEqualFields ? "equal-fields" : "param-matched";
}

WidthMode parse_width_mode(std::string_view text) {
  if (text == "equal-fields") return WidthMode::kEqualFields;
  if (text == "param-matched") return WidthMode::kParamMatched;
  fail(ErrorCode::kInvalidArgument, "unknown width mode '" + std::string(text) + "'");
}

int field_multiplicity(int width, int order, WidthMode mode) {
  require(width >= 1 && order >= 1, ErrorCode::kInvalidArgument, "width and order must be >= 1");
  if (mode == WidthMode::kEqualFields) return width;
  return static_cast<int>(std::ceil(width / std::sqrt(static_cast<double>(order)) - 1e-9));
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec, Factory factory)
    : spec_(spec), factory_(std::move(factory)), layers_(factory_()) {
  check_chain(layers_);
  rebuild_offsets();
  params_.assign(offsets_.back(), Real(0));
  prepare();
}

Model::Model(const Model& other)
    : spec_(other.spec_), factory_(other.factory_), layers_(factory_()) {
  rebuild_offsets();
  params_ = other.params_;
  prepare();
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Model::rebuild_offsets() {
  offsets_.clear();
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    offsets_.push_back(offset);
    offset += layer->param_count();
  }
  offsets_.push_back(offset);
}

void Model::prepare() {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->prepare(std::span<const Real>(params_).subspan(offsets_[i], layers_[i]->param_count()));
}

void Model::set_params(std::span<const Real> values) {
  require(values.size() == params_.size(), ErrorCode::kLayoutMismatch,
          "parameter vector has " + std::to_string(values.size()) + " entries, model expects " +
              std::to_string(params_.size()));
  std::copy(values.begin(), values.end(), params_.begin());
  prepare();
}

void Model::apply_step(std::span<const Real> step) {
  require(step.size() == params_.size(), ErrorCode::kLayoutMismatch, "update size mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= step[i];
  prepare();
}

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i]->initialize(std::span<Real>(params_).subspan(offsets_[i], layers_[i]->param_count()), rng);
  prepare();
}

std::vector<ParamInfo> Model::param_info() const {
  std::vector<ParamInfo> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (auto info : layers_[i]->param_info()) {
      info.offset += offsets_[i];
      out.push_back(std::move(info));
    }
  return out;
}

FeatureMap Model::forward_sample(const FeatureMap& x, SampleTrace* trace) const {
  if (trace) {
    trace->inputs.assign(layers_.size(), FeatureMap{});
    trace->traces.assign(layers_.size(), Trace{});
  }
  FeatureMap h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto slice = std::span<const Real>(params_).subspan(offsets_[i], layers_[i]->param_count());
    if (trace) {
      trace->inputs[i] = h;
      h = layers_[i]->forward(slice, trace->inputs[i], &trace->traces[i]);
    } else {
      h = layers_[i]->forward(slice, h, nullptr);
    }
    if (!h.all_finite())
      fail(ErrorCode::kNumericFault, "non-finite activation at layer " + std::to_string(i) + " (" +
                                         layers_[i]->name() + ")");
  }
  if (trace) trace->logits = h;
  return h;
}

FeatureMap Model::backward_sample(const SampleTrace& trace, const FeatureMap& grad_logits,
                                  std::span<Real> grad_row, ReluMode mode,
                                  std::vector<FeatureMap>* input_grads) const {
  std::vector<Real> scratch;
  if (grad_row.empty()) {
    scratch.assign(params_.size(), Real(0));
    grad_row = scratch;
  }
  require(grad_row.size() == params_.size(), ErrorCode::kLayoutMismatch, "gradient row size mismatch");
  if (input_grads) input_grads->assign(layers_.size(), FeatureMap{});
  FeatureMap g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const std::size_t count = layers_[i]->param_count();
    g = layers_[i]->backward(std::span<const Real>(params_).subspan(offsets_[i], count),
                             trace.inputs[i], g, trace.traces[i], grad_row.subspan(offsets_[i], count),
                             mode);
    if (input_grads) (*input_grads)[i] = g;
  }
  return g;
}

// ---------------------------------------------------------------------------

Model build_resnet9(const ModelSpec& spec) {
  require(spec.classes >= 2, ErrorCode::kInvalidArgument, "need at least 2 classes");
  for (int w : spec.widths)
    require(w >= 1, ErrorCode::kInvalidArgument, "widths must be positive");
  require(spec.kernel % 2 == 1, ErrorCode::kInvalidArgument, "kernel size must be odd");
  return Model(spec, [spec] { return resnet9_layers(spec); });
}

Model build_resnet9(GroupSpec group, std::array<int, 3> widths, int classes, WidthMode mode,
                    bool restriction) {
  ModelSpec spec;
  spec.group = group;
  spec.widths = widths;
  spec.classes = classes;
  spec.width_mode = mode;
  spec.restriction = restriction;
  return build_resnet9(spec);
}

Model build_toy_model(GroupSpec group, int fields, int classes, int in_channels) {
  require(classes >= 2 && fields >= 1, ErrorCode::kInvalidArgument, "bad toy model shape");
  ModelSpec spec;
  spec.group = group;
  spec.widths = {fields, fields, fields};
  spec.classes = classes;
  spec.width_mode = WidthMode::kEqualFields;
  spec.in_channels = in_channels;
  return Model(spec, [spec, fields] { return toy_layers(spec, fields); });
}

std::vector<double> softmax(std::span<const Real> logits) {
  double peak = logits[0];
  for (Real v : logits) peak = std::max(peak, static_cast<double>(v));
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += p[i] = std::exp(logits[i] - peak);
  for (double& v : p) v /= total;
  return p;
}

Matrix forward(const Model& model, const GeometricTensor& x, int threads) {
  require(x.channels() == model.input_type().channels(), ErrorCode::kLayoutMismatch,
          "input has " + std::to_string(x.channels()) + " channels, model expects " +
              std::to_string(model.input_type().channels()));
  Matrix logits(x.batch(), model.classes());
  detail::parallel_for(x.batch(), threads, [&](int b) {
    const FeatureMap out = model.forward_sample(x.sample(b));
    std::copy(out.data().begin(), out.data().end(), logits.row(b).begin());
  });
  return logits;
}

double sample_gradient(const Model& model, const FeatureMap& x, int label,
                       std::span<Real> grad_row, Real loss_scale, FeatureMap* logits) {
  require(label >= 0 && label < model.classes(), ErrorCode::kInvalidArgument,
          "label " + std::to_string(label) + " outside [0, " + std::to_string(model.classes()) + ")");
  SampleTrace trace;
  model.forward_sample(x, &trace);
  const auto p = softmax(trace.logits.data());
  const double loss = -std::log(std::max(p[label], 1e-300));
  FeatureMap grad(model.classes(), 1, 1);
  for (int c = 0; c < model.classes(); ++c)
    grad.data()[c] = static_cast<Real>(loss_scale * (p[c] - (c == label ? 1.0 : 0.0)));
  model.backward_sample(trace, grad, grad_row);
  if (logits) *logits = trace.logits;
  return loss;
}

BackwardResult backward_per_sample(const Model& model, const GeometricTensor& x,
                                   std::span<const int> labels, int replicas, int threads) {
  require(replicas >= 1, ErrorCode::kInvalidArgument, "replicas must be >= 1");
  const int batch = static_cast<int>(labels.size());
  require(x.batch() == batch * replicas, ErrorCode::kLayoutMismatch,
          "batch holds " + std::to_string(x.batch()) + " samples, expected " +
              std::to_string(batch * replicas));
  for (int label : labels)
    require(label >= 0 && label < model.classes(), ErrorCode::kInvalidArgument,
            "label " + std::to_string(label) + " out of range");
  BackwardResult result;
  result.grads = PerSampleGrads(batch, model.param_count());
  result.logits = Matrix(batch, model.classes());
  std::vector<double> losses(batch, 0.0);
  const Real scale = Real(1) / static_cast<Real>(replicas);
  detail::parallel_for(batch, threads, [&](int b) {
    auto row = result.grads.row(b);
    auto logit_row = result.logits.row(b);
    FeatureMap logits;
    for (int k = 0; k < replicas; ++k) {
      losses[b] += sample_gradient(model, x.sample(b * replicas + k), labels[b], row, scale, &logits);
      for (int c = 0; c < model.classes(); ++c) logit_row[c] += logits.data()[c] * scale;
    }
    losses[b] /= replicas;
  });
  double total = 0.0;
  for (double l : losses) total += l;
  result.mean_loss = batch > 0 ? total / batch : 0.0;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Model& model, const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  std::filesystem::create_directories(dir);
  json layout = json::array();
  for (const auto& info : model.param_info())
    layout.push_back({{"layer", info.layer},
                      {"name", info.name},
                      {"shape", info.shape},
                      {"offset", info.offset * sizeof(float)},
                      {"length", info.size * sizeof(float)}});
  json manifest{{"format", "eqdp-checkpoint-v1"},
                {"dtype", "<f4"},
                {"param_count", model.param_count()},
                {"model", spec_to_json(model.spec())},
                {"parameters", layout}};

  std::vector<float> values(model.params().begin(), model.params().end());
  const auto write_file = [&](const std::filesystem::path& path, const char* data, std::size_t n) {
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + tmp);
      out.write(data, static_cast<std::streamsize>(n));
      require(static_cast<bool>(out), ErrorCode::kIoError, "short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
  };
  write_file(dir / "params.bin", reinterpret_cast<const char*>(values.data()),
             values.size() * sizeof(float));
  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / "params.json", text.data(), text.size());
}

Model load_checkpoint(const std::filesystem::path& dir) {
  const auto json_path = dir / "params.json";
  const auto bin_path = dir / "params.bin";
  require(std::filesystem::exists(json_path) && std::filesystem::exists(bin_path),
          ErrorCode::kNotFound, "checkpoint files missing in " + dir.string());
  std::ifstream in(json_path);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormatError, "bad checkpoint manifest: " + std::string(e.what()));
  }
  Model model = build_resnet9(spec_from_json(manifest.at("model")));
  const std::size_t count = manifest.at("param_count").get<std::size_t>();
  require(count == model.param_count(), ErrorCode::kValidationError,
          "checkpoint has " + std::to_string(count) + " parameters, architecture has " +
              std::to_string(model.param_count()));
  require(std::filesystem::file_size(bin_path) == count * sizeof(float), ErrorCode::kFormatError,
          "params.bin holds " + std::to_string(std::filesystem::file_size(bin_path)) +
              " bytes, expected " + std::to_string(count * sizeof(float)));
  std::vector<float> values(count);
  std::ifstream bin(bin_path, std::ios::binary);
  bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  require(static_cast<bool>(bin), ErrorCode::kFormatError, "could not read params.bin");
  std::vector<Real> params(values.begin(), values.end());
  model.set_params(params);
  return model;
}

}  // namespace eqdp
