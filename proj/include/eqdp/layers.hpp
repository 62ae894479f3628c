// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqdp/field_type.hpp"
#include "eqdp/groups.hpp"
#include "eqdp/tensor.hpp"

namespace eqdp {

// Per-sample state recorded by a forward pass and consumed by backward.
struct Trace {
  FeatureMap output;
  std::vector<Real> aux;
  std::vector<int> index;
  std::vector<Trace> children;
};

// How ReLU gates the backward signal. Guided mode additionally drops
// negative incoming gradients (guided backpropagation).
enum class ReluMode { kStandard, kGuided };

struct ParamInfo {
  std::string layer;
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // into the model parameter vector
  std::size_t size = 0;
};

// Learnable steerable filters for one equivariant convolution. The canonical
// weights have shape out_fields x in_channels x k x k; every orientation g of
// the output is produced by rotating the canonical filter by g and, for
// regular inputs, cyclically shifting its input orientations by g.
class FilterBank {
 public:
  FilterBank(FieldType in, int out_fields, int kernel);

  const FieldType& in_type() const { return in_; }
  FieldType out_type() const { return regular_type(in_.group, out_fields_); }
  int kernel() const { return kernel_; }
  bool lifting() const { return in_.kind == FieldKind::kTrivial; }
  // Only groups with non-right-angle rotations confine filters to the disk.
  bool masked() const { return !in_.group.right_angles_only(); }
  std::size_t param_count() const;
  std::vector<int> canonical_shape() const;

  // (out_fields*N) x in_channels x k x k dense weights.
  std::vector<Real> expand(std::span<const Real> canonical) const;
  // Adjoint of expand: accumulates into canonical_grad.
  void fold(std::span<const Real> expanded_grad, std::span<Real> canonical_grad) const;

 private:
  int source_channel(int g, int c) const;

  FieldType in_;
  int out_fields_;
  int kernel_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::vector<StencilEntry>> stencils_;  // one per group element
};

// Stride-1 zero-padded cross-correlation. `cols` (optional) receives the
// im2col matrix needed by conv2d_backward.
FeatureMap conv2d(const FeatureMap& x, std::span<const Real> weights, int out_channels, int kernel,
                  int padding, std::vector<Real>* cols = nullptr);
// Accumulates the weight gradient and returns the input gradient.
FeatureMap conv2d_backward(const FeatureMap& grad_out, std::span<const Real> weights,
                           std::span<const Real> cols, int in_channels, int in_height,
                           int in_width, int kernel, int padding, std::span<Real> weight_grad);

class Layer {
 public:
  Layer(std::string name, FieldType in, FieldType out)
      : name_(std::move(name)), in_(in), out_(out) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual std::string_view kind() const = 0;
  const std::string& name() const { return name_; }
  const FieldType& in_type() const { return in_; }
  const FieldType& out_type() const { return out_; }

  virtual std::size_t param_count() const { return 0; }
  // Parameter descriptors with offsets relative to this layer's slice.
  virtual std::vector<ParamInfo> param_info() const { return {}; }
  virtual void initialize(std::span<Real> /*params*/, std::mt19937_64& /*rng*/) const {}
  // Refreshes caches derived from the parameters (expanded filters).
  virtual void prepare(std::span<const Real> /*params*/) {}
  virtual bool is_conv() const { return false; }

  virtual FeatureMap forward(std::span<const Real> params, const FeatureMap& x,
                             Trace* trace) const = 0;
  virtual FeatureMap backward(std::span<const Real> params, const FeatureMap& x,
                              const FeatureMap& grad_out, const Trace& trace,
                              std::span<Real> param_grad, ReluMode mode) const = 0;

 private:
  std::string name_;
  FieldType in_;
  FieldType out_;
};

using LayerPtr = std::unique_ptr<Layer>;

// Plain convolution (the non-equivariant baseline). No bias.
class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(std::string name, int in_channels, int out_channels, int kernel, int padding);
  std::string_view kind() const override { return "conv"; }
  std::size_t param_count() const override;
  std::vector<ParamInfo> param_info() const override;
  void initialize(std::span<Real> params, std::mt19937_64& rng) const override;
  bool is_conv() const override { return true; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;

 private:
  int in_channels_;
  int out_channels_;
  int kernel_;
  int padding_;
};

// Lifting (trivial input) or group (regular input) convolution.
class EquivariantConvLayer final : public Layer {
 public:
  EquivariantConvLayer(std::string name, FieldType in, int out_fields, int kernel, int padding);
  std::string_view kind() const override { return bank_.lifting() ? "lift-conv" : "group-conv"; }
  std::size_t param_count() const override { return bank_.param_count(); }
  std::vector<ParamInfo> param_info() const override;
  void initialize(std::span<Real> params, std::mt19937_64& rng) const override;
  void prepare(std::span<const Real> params) override;
  bool is_conv() const override { return true; }
  const FilterBank& bank() const { return bank_; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;

 private:
  FilterBank bank_;
  int padding_;
  std::vector<Real> expanded_;
};

// Per-sample, per-field normalisation with one gain and bias per field.
class FieldNormLayer final : public Layer {
 public:
  FieldNormLayer(std::string name, FieldType type);
  std::string_view kind() const override { return "field-norm"; }
  std::size_t param_count() const override { return 2 * out_type().multiplicity; }
  std::vector<ParamInfo> param_info() const override;
  void initialize(std::span<Real> params, std::mt19937_64& rng) const override;
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;

  static constexpr double kVarianceEpsilon = 1e-5;
};

class ReluLayer final : public Layer {
 public:
  ReluLayer(std::string name, FieldType type) : Layer(std::move(name), type, type) {}
  std::string_view kind() const override { return "relu"; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;
};

// 2x2 stride-2 max pooling. Odd extents use a centred 3-wide window at
// stride 2, which keeps the floor(n/2) output size and commutes with
// quarter-turn rotations.
class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(std::string name, FieldType type) : Layer(std::move(name), type, type) {}
  std::string_view kind() const override { return "maxpool"; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;
};

class RestrictLayer final : public Layer {
 public:
  RestrictLayer(std::string name, FieldType in);
  std::string_view kind() const override { return "restrict"; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;

 private:
  std::vector<int> channel_map_;
};

class GlobalAvgPoolLayer final : public Layer {
 public:
  GlobalAvgPoolLayer(std::string name, FieldType type) : Layer(std::move(name), type, type) {}
  std::string_view kind() const override { return "global-pool"; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;
};

// Max over the orientation channels of each regular field.
class GroupPoolLayer final : public Layer {
 public:
  GroupPoolLayer(std::string name, FieldType in);
  std::string_view kind() const override { return "group-pool"; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;
};

class LinearLayer final : public Layer {
 public:
  LinearLayer(std::string name, FieldType in, int outputs);
  std::string_view kind() const override { return "linear"; }
  std::size_t param_count() const override;
  std::vector<ParamInfo> param_info() const override;
  void initialize(std::span<Real> params, std::mt19937_64& rng) const override;
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;

 private:
  int inputs_;
  int outputs_;
};

// x + body(x), where body is a chain of layers preserving the field type.
class ResidualLayer final : public Layer {
 public:
  ResidualLayer(std::string name, std::vector<LayerPtr> body);
  std::string_view kind() const override { return "residual"; }
  std::size_t param_count() const override;
  std::vector<ParamInfo> param_info() const override;
  void initialize(std::span<Real> params, std::mt19937_64& rng) const override;
  void prepare(std::span<const Real> params) override;
  const std::vector<LayerPtr>& body() const { return body_; }
  FeatureMap forward(std::span<const Real> params, const FeatureMap& x, Trace* trace) const override;
  FeatureMap backward(std::span<const Real> params, const FeatureMap& x, const FeatureMap& grad_out,
                      const Trace& trace, std::span<Real> param_grad, ReluMode mode) const override;

 private:
  std::vector<LayerPtr> body_;
  std::vector<std::size_t> offsets_;
};

// Batched convenience wrappers over the layer kernels.
GeometricTensor lift_conv(const GeometricTensor& x, const FilterBank& bank,
                          std::span<const Real> canonical, int padding);
GeometricTensor group_conv(const GeometricTensor& x, const FilterBank& bank,
                           std::span<const Real> canonical, int padding);
// gain and bias hold one value per field.
GeometricTensor field_norm(const GeometricTensor& x, std::span<const Real> gain,
                           std::span<const Real> bias);

}  // namespace eqdp
