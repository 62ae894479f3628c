// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqdp/layers.hpp"
#include "eqdp/tensor.hpp"

namespace eqdp {

// Either the plain-convolution baseline {e} (order 0) or a cyclic group C_N.
struct GroupSpec {
  int order = 0;

  bool equivariant() const { return order > 0; }
  std::string name() const;
  static GroupSpec parse(std::string_view text);
  static GroupSpec baseline() { return GroupSpec{0}; }
  static GroupSpec cyclic(int n);

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

enum class WidthMode {
  kEqualFields,   // field multiplicity = width
  kParamMatched,  // field multiplicity = ceil(width / sqrt(N))
};

std::string_view width_mode_name(WidthMode mode);
WidthMode parse_width_mode(std::string_view text);

struct ModelSpec {
  GroupSpec group;
  std::array<int, 3> widths{8, 16, 32};
  int classes = 9;
  WidthMode width_mode = WidthMode::kParamMatched;
  bool restriction = true;
  int in_channels = 3;
  int kernel = 3;
};

// Field multiplicity used for a nominal `width` over a group of `order`.
int field_multiplicity(int width, int order, WidthMode mode);

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<Real> values;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, Real(0)) {}
  std::span<Real> row(int r) { return std::span<Real>(values).subspan(r * static_cast<std::size_t>(cols), cols); }
  std::span<const Real> row(int r) const {
    return std::span<const Real>(values).subspan(r * static_cast<std::size_t>(cols), cols);
  }
};

// Row b holds the gradient of sample b's loss alone, flattened in the model's
// parameter order (see Model::param_info).
struct PerSampleGrads {
  int batch = 0;
  std::size_t params = 0;
  std::vector<Real> values;

  PerSampleGrads() = default;
  PerSampleGrads(int b, std::size_t p) : batch(b), params(p), values(b * p, Real(0)) {}
  std::span<Real> row(int b) { return std::span<Real>(values).subspan(b * params, params); }
  std::span<const Real> row(int b) const {
    return std::span<const Real>(values).subspan(b * params, params);
  }
};

// Forward record for one sample: the input of every top-level layer plus
// each layer's backward state.
struct SampleTrace {
  std::vector<FeatureMap> inputs;
  std::vector<Trace> traces;
  FeatureMap logits;
};

class Model {
 public:
  using Factory = std::function<std::vector<LayerPtr>()>;

  Model(ModelSpec spec, Factory factory);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }
  int classes() const { return spec_.classes; }
  const FieldType& input_type() const { return layers_.front()->in_type(); }
  const std::vector<LayerPtr>& layers() const { return layers_; }
  std::size_t layer_offset(std::size_t i) const { return offsets_[i]; }

  std::size_t param_count() const { return params_.size(); }
  std::span<const Real> params() const { return params_; }
  void set_params(std::span<const Real> values);
  // Applies params -= step, then refreshes derived filter caches.
  void apply_step(std::span<const Real> step);
  void initialize(std::uint64_t seed);
  std::vector<ParamInfo> param_info() const;

  // Throws numeric-fault naming the layer if any activation is non-finite.
  FeatureMap forward_sample(const FeatureMap& x, SampleTrace* trace = nullptr) const;
  // Backpropagates grad_logits, accumulating into grad_row (may be empty to
  // skip parameter gradients). input_grads, when given, receives the
  // gradient with respect to each top-level layer's input.
  FeatureMap backward_sample(const SampleTrace& trace, const FeatureMap& grad_logits,
                             std::span<Real> grad_row, ReluMode mode = ReluMode::kStandard,
                             std::vector<FeatureMap>* input_grads = nullptr) const;

 private:
  void rebuild_offsets();
  void prepare();

  ModelSpec spec_;
  Factory factory_;
  std::vector<LayerPtr> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<Real> params_;
};

// Stem conv + conv/pool + residual block + [restriction] + two conv/pool
// stages + residual block + global pooling + [group pooling] + linear head.
Model build_resnet9(GroupSpec group, std::array<int, 3> widths, int classes,
                    WidthMode mode = WidthMode::kParamMatched, bool restriction = true);
Model build_resnet9(const ModelSpec& spec);

// Small network exercising every layer kind (for gradient checks and
// experiments on tiny inputs).
Model build_toy_model(GroupSpec group, int fields, int classes, int in_channels = 3);

// Logits, one row per sample.
Matrix forward(const Model& model, const GeometricTensor& x, int threads = 1);

struct BackwardResult {
  double mean_loss = 0.0;
  PerSampleGrads grads;
  Matrix logits;  // mean over replicas
};

// Cross-entropy per-sample gradients. With replicas > 1, x holds
// batch*replicas samples ordered sample-major, and each gradient row is the
// mean over that sample's replicas.
BackwardResult backward_per_sample(const Model& model, const GeometricTensor& x,
                                   std::span<const int> labels, int replicas = 1,
                                   int threads = 1);

// Gradient of loss_scale * cross_entropy(sample) accumulated into grad_row;
// returns the unscaled loss.
double sample_gradient(const Model& model, const FeatureMap& x, int label,
                       std::span<Real> grad_row, Real loss_scale = Real(1),
                       FeatureMap* logits = nullptr);

std::vector<double> softmax(std::span<const Real> logits);

// Checkpoint directory: params.bin (little-endian float32 parameter vector)
// and params.json (model spec + per-parameter layout).
void save_checkpoint(const Model& model, const std::filesystem::path& dir);
Model load_checkpoint(const std::filesystem::path& dir);

}  // namespace eqdp
