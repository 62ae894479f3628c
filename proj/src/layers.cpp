// SPDX-License-Identifier: Apache-2.0
#include "eqdp/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "eqdp/error.hpp"

namespace eqdp {
namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void check_input(const Layer& layer, const FeatureMap& x) {
  require(x.channels() == layer.in_type().channels(), ErrorCode::kLayoutMismatch,
          layer.name() + ": expected " + std::to_string(layer.in_type().channels()) +
              " input channels, got " + std::to_string(x.channels()));
}

void uniform_fill(std::span<Real> out, double variance, std::mt19937_64& rng) {
  const double bound = std::sqrt(3.0 * variance);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Real& v : out) v = static_cast<Real>(dist(rng));
}

void im2col(const FeatureMap& x, int kernel, int padding, int out_h, int out_w, Real* cols) {
  const int c_in = x.channels();
  const int h = x.height();
  const int w = x.width();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < c_in; ++c) {
    const Real* src = x.channel(c).data();
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        Real* row = cols + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy + ky - padding;
          Real* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, Real(0));
            continue;
          }
          const Real* line = src + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox + kx - padding;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : Real(0);
          }
        }
      }
  }
}

void col2im(const Real* cols, int kernel, int padding, int out_h, int out_w, FeatureMap& dx) {
  const int h = dx.height();
  const int w = dx.width();
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < dx.channels(); ++c) {
    Real* dst = dx.channel(c).data();
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const Real* row =
            cols + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy + ky - padding;
          if (iy < 0 || iy >= h) continue;
          const Real* src = row + static_cast<std::size_t>(oy) * out_w;
          Real* line = dst + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox + kx - padding;
            if (ix >= 0 && ix < w) line[ix] += src[ox];
          }
        }
      }
  }
}

// Window [start, start+len) of output index o along an axis of extent n.
std::pair<int, int> pool_window(int n, int o) {
  return (n % 2 == 0) ? std::pair{2 * o, 2} : std::pair{2 * o, 3};
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution kernels

FeatureMap conv2d(const FeatureMap& x, std::span<const Real> weights, int out_channels, int kernel,
                  int padding, std::vector<Real>* cols) {
  const int out_h = x.height() + 2 * padding - kernel + 1;
  const int out_w = x.width() + 2 * padding - kernel + 1;
  require(out_h > 0 && out_w > 0, ErrorCode::kLayoutMismatch, "convolution output is empty");
  const int depth = x.channels() * kernel * kernel;
  require(weights.size() == static_cast<std::size_t>(out_channels) * depth,
          ErrorCode::kLayoutMismatch, "convolution weight size mismatch");
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;

  std::vector<Real> local;
  std::vector<Real>& buffer = cols ? *cols : local;
  buffer.resize(static_cast<std::size_t>(depth) * plane);
  im2col(x, kernel, padding, out_h, out_w, buffer.data());

  FeatureMap y(out_channels, out_h, out_w);
  MutMap(y.data().data(), out_channels, plane).noalias() =
      ConstMap(weights.data(), out_channels, depth) * ConstMap(buffer.data(), depth, plane);
  return y;
}

FeatureMap conv2d_backward(const FeatureMap& grad_out, std::span<const Real> weights,
                           std::span<const Real> cols, int in_channels, int in_height,
                           int in_width, int kernel, int padding, std::span<Real> weight_grad) {
  const int out_channels = grad_out.channels();
  const int depth = in_channels * kernel * kernel;
  const std::size_t plane = grad_out.plane();
  ConstMap dy(grad_out.data().data(), out_channels, plane);
  ConstMap col(cols.data(), depth, plane);
  MutMap(weight_grad.data(), out_channels, depth).noalias() += dy * col.transpose();

  RowMatrix dcols(depth, plane);
  dcols.noalias() = ConstMap(weights.data(), out_channels, depth).transpose() * dy;
  FeatureMap dx(in_channels, in_height, in_width);
  col2im(dcols.data(), kernel, padding, grad_out.height(), grad_out.width(), dx);
  return dx;
}

// ---------------------------------------------------------------------------
// FilterBank

FilterBank::FilterBank(FieldType in, int out_fields, int kernel)
    : in_(in), out_fields_(out_fields), kernel_(kernel) {
  require(out_fields >= 1, ErrorCode::kInvalidArgument, "filter bank needs >= 1 output field");
  require(kernel >= 1 && kernel % 2 == 1, ErrorCode::kInvalidArgument,
          "filter size must be odd, got " + std::to_string(kernel));
  mask_ = masked() ? disk_mask(kernel) : full_mask(kernel);
  const int n = in_.group.order();
  stencils_.reserve(n);
  for (int g = 0; g < n; ++g) stencils_.push_back(rotation_stencil(kernel, g, n, mask_));
}

std::size_t FilterBank::param_count() const {
  return static_cast<std::size_t>(out_fields_) * in_.channels() * kernel_ * kernel_;
}

std::vector<int> FilterBank::canonical_shape() const {
  return {out_fields_, in_.channels(), kernel_, kernel_};
}

int FilterBank::source_channel(int g, int c) const {
  if (lifting()) return c;
  const int n = in_.group.order();
  const int field = c / n;
  const int h = c % n;
  return field * n + ((h - g) % n + n) % n;
}

std::vector<Real> FilterBank::expand(std::span<const Real> canonical) const {
  require(canonical.size() == param_count(), ErrorCode::kLayoutMismatch,
          "canonical filter size mismatch");
  const int n = in_.group.order();
  const int c_in = in_.channels();
  const std::size_t taps = static_cast<std::size_t>(kernel_) * kernel_;
  std::vector<Real> out(static_cast<std::size_t>(out_fields_) * n * c_in * taps, Real(0));
  for (int o = 0; o < out_fields_; ++o)
    for (int g = 0; g < n; ++g)
      for (int c = 0; c < c_in; ++c) {
        const Real* src = canonical.data() + (static_cast<std::size_t>(o) * c_in +
                                              source_channel(g, c)) * taps;
        Real* dst = out.data() + ((static_cast<std::size_t>(o) * n + g) * c_in + c) * taps;
        for (const auto& e : stencils_[g]) dst[e.dst] += static_cast<Real>(e.weight) * src[e.src];
      }
  return out;
}

void FilterBank::fold(std::span<const Real> expanded_grad, std::span<Real> canonical_grad) const {
  const int n = in_.group.order();
  const int c_in = in_.channels();
  const std::size_t taps = static_cast<std::size_t>(kernel_) * kernel_;
  require(expanded_grad.size() == static_cast<std::size_t>(out_fields_) * n * c_in * taps &&
              canonical_grad.size() == param_count(),
          ErrorCode::kLayoutMismatch, "filter gradient size mismatch");
  for (int o = 0; o < out_fields_; ++o)
    for (int g = 0; g < n; ++g)
      for (int c = 0; c < c_in; ++c) {
        const Real* src =
            expanded_grad.data() + ((static_cast<std::size_t>(o) * n + g) * c_in + c) * taps;
        Real* dst = canonical_grad.data() +
                    (static_cast<std::size_t>(o) * c_in + source_channel(g, c)) * taps;
        for (const auto& e : stencils_[g]) dst[e.src] += static_cast<Real>(e.weight) * src[e.dst];
      }
}

// ---------------------------------------------------------------------------
// Conv2dLayer

Conv2dLayer::Conv2dLayer(std::string name, int in_channels, int out_channels, int kernel,
                         int padding)
    : Layer(std::move(name), trivial_type(in_channels), trivial_type(out_channels)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      padding_(padding) {
  require(kernel % 2 == 1, ErrorCode::kInvalidArgument, "kernel size must be odd");
}

std::size_t Conv2dLayer::param_count() const {
  return static_cast<std::size_t>(out_channels_) * in_channels_ * kernel_ * kernel_;
}

std::vector<ParamInfo> Conv2dLayer::param_info() const {
  return {{name(), "weight", {out_channels_, in_channels_, kernel_, kernel_}, 0, param_count()}};
}

void Conv2dLayer::initialize(std::span<Real> params, std::mt19937_64& rng) const {
  uniform_fill(params, 2.0 / (in_channels_ * kernel_ * kernel_), rng);
}

FeatureMap Conv2dLayer::forward(std::span<const Real> params, const FeatureMap& x,
                                Trace* trace) const {
  check_input(*this, x);
  return conv2d(x, params, out_channels_, kernel_, padding_, trace ? &trace->aux : nullptr);
}

FeatureMap Conv2dLayer::backward(std::span<const Real> params, const FeatureMap& x,
                                 const FeatureMap& grad_out, const Trace& trace,
                                 std::span<Real> param_grad, ReluMode) const {
  return conv2d_backward(grad_out, params, trace.aux, in_channels_, x.height(), x.width(), kernel_,
                         padding_, param_grad);
}

// ---------------------------------------------------------------------------
// EquivariantConvLayer

EquivariantConvLayer::EquivariantConvLayer(std::string name, FieldType in, int out_fields,
                                           int kernel, int padding)
    : Layer(std::move(name), in, regular_type(in.group, out_fields)),
      bank_(in, out_fields, kernel),
      padding_(padding) {}

std::vector<ParamInfo> EquivariantConvLayer::param_info() const {
  return {{name(), "weight", bank_.canonical_shape(), 0, param_count()}};
}

void EquivariantConvLayer::initialize(std::span<Real> params, std::mt19937_64& rng) const {
  const int k = bank_.kernel();
  const auto mask = bank_.masked() ? disk_mask(k) : full_mask(k);
  const int taps = static_cast<int>(std::count(mask.begin(), mask.end(), 1));
  // He variance over the expanded fan-in of one output orientation.
  uniform_fill(params, 2.0 / (in_type().channels() * taps), rng);
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!mask[i % (k * k)]) params[i] = Real(0);
}

void EquivariantConvLayer::prepare(std::span<const Real> params) { expanded_ = bank_.expand(params); }

FeatureMap EquivariantConvLayer::forward(std::span<const Real>, const FeatureMap& x,
                                         Trace* trace) const {
  check_input(*this, x);
  require(!expanded_.empty(), ErrorCode::kInvalidArgument, name() + ": filters not prepared");
  return conv2d(x, expanded_, out_type().channels(), bank_.kernel(), padding_,
                trace ? &trace->aux : nullptr);
}

FeatureMap EquivariantConvLayer::backward(std::span<const Real>, const FeatureMap& x,
                                          const FeatureMap& grad_out, const Trace& trace,
                                          std::span<Real> param_grad, ReluMode) const {
  std::vector<Real> expanded_grad(expanded_.size(), Real(0));
  FeatureMap dx = conv2d_backward(grad_out, expanded_, trace.aux, in_type().channels(), x.height(),
                                  x.width(), bank_.kernel(), padding_, expanded_grad);
  bank_.fold(expanded_grad, param_grad);
  return dx;
}

// ---------------------------------------------------------------------------
// FieldNormLayer

FieldNormLayer::FieldNormLayer(std::string name, FieldType type)
    : Layer(std::move(name), type, type) {}

std::vector<ParamInfo> FieldNormLayer::param_info() const {
  const int f = out_type().multiplicity;
  return {{name(), "gain", {f}, 0, static_cast<std::size_t>(f)},
          {name(), "bias", {f}, static_cast<std::size_t>(f), static_cast<std::size_t>(f)}};
}

void FieldNormLayer::initialize(std::span<Real> params, std::mt19937_64&) const {
  const std::size_t f = out_type().multiplicity;
  std::fill(params.begin(), params.begin() + f, Real(1));
  std::fill(params.begin() + f, params.end(), Real(0));
}

FeatureMap FieldNormLayer::forward(std::span<const Real> params, const FeatureMap& x,
                                   Trace* trace) const {
  check_input(*this, x);
  const int fields = out_type().multiplicity;
  const std::size_t span_size = out_type().field_size() * x.plane();
  FeatureMap y(x.channels(), x.height(), x.width());
  if (trace) {
    trace->aux.resize(x.size());
    trace->index.clear();
  }
  std::vector<Real> inv_std(fields);
  for (int f = 0; f < fields; ++f) {
    const Real* src = x.data().data() + f * span_size;
    double mean = 0.0;
    for (std::size_t i = 0; i < span_size; ++i) mean += src[i];
    mean /= static_cast<double>(span_size);
    double var = 0.0;
    for (std::size_t i = 0; i < span_size; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<double>(span_size);
    const double inv = 1.0 / std::sqrt(var + kVarianceEpsilon);
    inv_std[f] = static_cast<Real>(inv);
    const Real gain = params[f];
    const Real bias = params[fields + f];
    Real* dst = y.data().data() + f * span_size;
    for (std::size_t i = 0; i < span_size; ++i) {
      const Real normed = static_cast<Real>((src[i] - mean) * inv);
      if (trace) trace->aux[f * span_size + i] = normed;
      dst[i] = gain * normed + bias;
    }
  }
  if (trace) trace->aux.insert(trace->aux.end(), inv_std.begin(), inv_std.end());
  return y;
}

FeatureMap FieldNormLayer::backward(std::span<const Real> params, const FeatureMap& x,
                                    const FeatureMap& grad_out, const Trace& trace,
                                    std::span<Real> param_grad, ReluMode) const {
  const int fields = out_type().multiplicity;
  const std::size_t span_size = out_type().field_size() * x.plane();
  FeatureMap dx(x.channels(), x.height(), x.width());
  for (int f = 0; f < fields; ++f) {
    const Real* dy = grad_out.data().data() + f * span_size;
    const Real* normed = trace.aux.data() + f * span_size;
    const Real inv = trace.aux[x.size() + f];
    const Real gain = params[f];
    double sum_dy = 0.0;
    double sum_dy_n = 0.0;
    for (std::size_t i = 0; i < span_size; ++i) {
      sum_dy += dy[i];
      sum_dy_n += dy[i] * normed[i];
    }
    param_grad[f] += static_cast<Real>(sum_dy_n);
    param_grad[fields + f] += static_cast<Real>(sum_dy);
    const double m = static_cast<double>(span_size);
    const double mean_dn = gain * sum_dy / m;
    const double mean_dn_n = gain * sum_dy_n / m;
    Real* out = dx.data().data() + f * span_size;
    for (std::size_t i = 0; i < span_size; ++i)
      out[i] = static_cast<Real>(inv * (gain * dy[i] - mean_dn - normed[i] * mean_dn_n));
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReluLayer

FeatureMap ReluLayer::forward(std::span<const Real>, const FeatureMap& x, Trace*) const {
  check_input(*this, x);
  FeatureMap y = x;
  for (Real& v : y.data()) v = std::max(v, Real(0));
  return y;
}

FeatureMap ReluLayer::backward(std::span<const Real>, const FeatureMap& x,
                               const FeatureMap& grad_out, const Trace&, std::span<Real>,
                               ReluMode mode) const {
  FeatureMap dx = grad_out;
  auto in = x.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool open = in[i] > 0 && (mode == ReluMode::kStandard || d[i] > 0);
    if (!open) d[i] = Real(0);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPoolLayer

FeatureMap MaxPoolLayer::forward(std::span<const Real>, const FeatureMap& x, Trace* trace) const {
  check_input(*this, x);
  const int out_h = x.height() / 2;
  const int out_w = x.width() / 2;
  require(out_h > 0 && out_w > 0, ErrorCode::kLayoutMismatch, name() + ": input too small to pool");
  FeatureMap y(x.channels(), out_h, out_w);
  if (trace) trace->index.assign(y.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < x.channels(); ++c)
    for (int oy = 0; oy < out_h; ++oy) {
      const auto [y0, ylen] = pool_window(x.height(), oy);
      for (int ox = 0; ox < out_w; ++ox, ++o) {
        const auto [x0, xlen] = pool_window(x.width(), ox);
        Real best = -std::numeric_limits<Real>::infinity();
        int best_index = 0;
        for (int dy = 0; dy < ylen; ++dy)
          for (int dx = 0; dx < xlen; ++dx) {
            const Real v = x.at(c, y0 + dy, x0 + dx);
            if (v > best) {
              best = v;
              best_index = ((c * x.height()) + y0 + dy) * x.width() + x0 + dx;
            }
          }
        y.data()[o] = best;
        if (trace) trace->index[o] = best_index;
      }
    }
  return y;
}

FeatureMap MaxPoolLayer::backward(std::span<const Real>, const FeatureMap& x,
                                  const FeatureMap& grad_out, const Trace& trace, std::span<Real>,
                                  ReluMode) const {
  FeatureMap dx(x.channels(), x.height(), x.width());
  auto g = grad_out.data();
  for (std::size_t o = 0; o < g.size(); ++o) dx.data()[trace.index[o]] += g[o];
  return dx;
}

// ---------------------------------------------------------------------------
// RestrictLayer

RestrictLayer::RestrictLayer(std::string name, FieldType in)
    : Layer(std::move(name), in, restrict_regular(in).type),
      channel_map_(restrict_regular(in).channel_map) {}

FeatureMap RestrictLayer::forward(std::span<const Real>, const FeatureMap& x, Trace*) const {
  check_input(*this, x);
  FeatureMap y(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    auto src = x.channel(channel_map_[c]);
    std::copy(src.begin(), src.end(), y.channel(c).begin());
  }
  return y;
}

FeatureMap RestrictLayer::backward(std::span<const Real>, const FeatureMap& x,
                                   const FeatureMap& grad_out, const Trace&, std::span<Real>,
                                   ReluMode) const {
  FeatureMap dx(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    auto src = grad_out.channel(c);
    std::copy(src.begin(), src.end(), dx.channel(channel_map_[c]).begin());
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GlobalAvgPoolLayer

FeatureMap GlobalAvgPoolLayer::forward(std::span<const Real>, const FeatureMap& x, Trace*) const {
  check_input(*this, x);
  FeatureMap y(x.channels(), 1, 1);
  for (int c = 0; c < x.channels(); ++c) {
    double sum = 0.0;
    for (Real v : x.channel(c)) sum += v;
    y.at(c, 0, 0) = static_cast<Real>(sum / static_cast<double>(x.plane()));
  }
  return y;
}

FeatureMap GlobalAvgPoolLayer::backward(std::span<const Real>, const FeatureMap& x,
                                        const FeatureMap& grad_out, const Trace&,
                                        std::span<Real>, ReluMode) const {
  FeatureMap dx(x.channels(), x.height(), x.width());
  const Real scale = Real(1) / static_cast<Real>(x.plane());
  for (int c = 0; c < x.channels(); ++c) {
    const Real g = grad_out.at(c, 0, 0) * scale;
    for (Real& v : dx.channel(c)) v = g;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// GroupPoolLayer

GroupPoolLayer::GroupPoolLayer(std::string name, FieldType in)
    : Layer(std::move(name), in, trivial_type(in.multiplicity, in.group)) {
  require(in.kind == FieldKind::kRegular, ErrorCode::kLayoutMismatch,
          "group pooling needs regular fields");
}

FeatureMap GroupPoolLayer::forward(std::span<const Real>, const FeatureMap& x, Trace* trace) const {
  check_input(*this, x);
  const int n = in_type().field_size();
  const int fields = in_type().multiplicity;
  FeatureMap y(fields, x.height(), x.width());
  if (trace) trace->index.assign(y.size(), 0);
  const std::size_t plane = x.plane();
  for (int f = 0; f < fields; ++f)
    for (std::size_t p = 0; p < plane; ++p) {
      int best_c = f * n;
      Real best = x.channel(best_c)[p];
      for (int g = 1; g < n; ++g) {
        const Real v = x.channel(f * n + g)[p];
        if (v > best) {
          best = v;
          best_c = f * n + g;
        }
      }
      y.channel(f)[p] = best;
      if (trace) trace->index[f * plane + p] = static_cast<int>(best_c * plane + p);
    }
  return y;
}

FeatureMap GroupPoolLayer::backward(std::span<const Real>, const FeatureMap& x,
                                    const FeatureMap& grad_out, const Trace& trace,
                                    std::span<Real>, ReluMode) const {
  FeatureMap dx(x.channels(), x.height(), x.width());
  auto g = grad_out.data();
  for (std::size_t o = 0; o < g.size(); ++o) dx.data()[trace.index[o]] += g[o];
  return dx;
}

// ---------------------------------------------------------------------------
// LinearLayer

LinearLayer::LinearLayer(std::string name, FieldType in, int outputs)
    : Layer(std::move(name), in, trivial_type(outputs)), inputs_(in.channels()), outputs_(outputs) {}

std::size_t LinearLayer::param_count() const {
  return static_cast<std::size_t>(outputs_) * inputs_ + outputs_;
}

std::vector<ParamInfo> LinearLayer::param_info() const {
  const std::size_t w = static_cast<std::size_t>(outputs_) * inputs_;
  return {{name(), "weight", {outputs_, inputs_}, 0, w},
          {name(), "bias", {outputs_}, w, static_cast<std::size_t>(outputs_)}};
}

void LinearLayer::initialize(std::span<Real> params, std::mt19937_64& rng) const {
  const std::size_t w = static_cast<std::size_t>(outputs_) * inputs_;
  uniform_fill(params.first(w), 1.0 / inputs_, rng);
  std::fill(params.begin() + w, params.end(), Real(0));
}

FeatureMap LinearLayer::forward(std::span<const Real> params, const FeatureMap& x, Trace*) const {
  require(static_cast<int>(x.size()) == inputs_, ErrorCode::kLayoutMismatch,
          name() + ": expected " + std::to_string(inputs_) + " features");
  FeatureMap y(outputs_, 1, 1);
  auto in = x.data();
  for (int o = 0; o < outputs_; ++o) {
    const Real* w = params.data() + static_cast<std::size_t>(o) * inputs_;
    Real acc = params[static_cast<std::size_t>(outputs_) * inputs_ + o];
    for (int i = 0; i < inputs_; ++i) acc += w[i] * in[i];
    y.data()[o] = acc;
  }
  return y;
}

FeatureMap LinearLayer::backward(std::span<const Real> params, const FeatureMap& x,
                                 const FeatureMap& grad_out, const Trace&,
                                 std::span<Real> param_grad, ReluMode) const {
  FeatureMap dx(x.channels(), x.height(), x.width());
  auto in = x.data();
  auto g = grad_out.data();
  const std::size_t w_size = static_cast<std::size_t>(outputs_) * inputs_;
  for (int o = 0; o < outputs_; ++o) {
    const Real* w = params.data() + static_cast<std::size_t>(o) * inputs_;
    Real* dw = param_grad.data() + static_cast<std::size_t>(o) * inputs_;
    for (int i = 0; i < inputs_; ++i) {
      dw[i] += g[o] * in[i];
      dx.data()[i] += g[o] * w[i];
    }
    param_grad[w_size + o] += g[o];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ResidualLayer

ResidualLayer::ResidualLayer(std::string name, std::vector<LayerPtr> body)
    : Layer(std::move(name), body.front()->in_type(), body.back()->out_type()),
      body_(std::move(body)) {
  require(in_type() == out_type(), ErrorCode::kLayoutMismatch,
          "residual body must preserve its field type");
  std::size_t offset = 0;
  for (const auto& layer : body_) {
    offsets_.push_back(offset);
    offset += layer->param_count();
  }
}

std::size_t ResidualLayer::param_count() const {
  std::size_t total = 0;
  for (const auto& layer : body_) total += layer->param_count();
  return total;
}

std::vector<ParamInfo> ResidualLayer::param_info() const {
  std::vector<ParamInfo> out;
  for (std::size_t i = 0; i < body_.size(); ++i)
    for (auto info : body_[i]->param_info()) {
      info.offset += offsets_[i];
      out.push_back(std::move(info));
    }
  return out;
}

void ResidualLayer::initialize(std::span<Real> params, std::mt19937_64& rng) const {
  for (std::size_t i = 0; i < body_.size(); ++i)
    body_[i]->initialize(params.subspan(offsets_[i], body_[i]->param_count()), rng);
}

void ResidualLayer::prepare(std::span<const Real> params) {
  for (std::size_t i = 0; i < body_.size(); ++i)
    body_[i]->prepare(params.subspan(offsets_[i], body_[i]->param_count()));
}

FeatureMap ResidualLayer::forward(std::span<const Real> params, const FeatureMap& x,
                                  Trace* trace) const {
  check_input(*this, x);
  if (trace) trace->children.assign(body_.size(), Trace{});
  FeatureMap h = x;
  for (std::size_t i = 0; i < body_.size(); ++i) {
    Trace* child = trace ? &trace->children[i] : nullptr;
    h = body_[i]->forward(params.subspan(offsets_[i], body_[i]->param_count()), h, child);
    if (child) child->output = h;
  }
  auto in = x.data();
  auto out = h.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  return h;
}

FeatureMap ResidualLayer::backward(std::span<const Real> params, const FeatureMap& x,
                                   const FeatureMap& grad_out, const Trace& trace,
                                   std::span<Real> param_grad, ReluMode mode) const {
  FeatureMap g = grad_out;
  for (std::size_t i = body_.size(); i-- > 0;) {
    const FeatureMap& input = (i == 0) ? x : trace.children[i - 1].output;
    const std::size_t count = body_[i]->param_count();
    g = body_[i]->backward(params.subspan(offsets_[i], count), input, g, trace.children[i],
                           param_grad.subspan(offsets_[i], count), mode);
  }
  auto skip = grad_out.data();
  auto out = g.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += skip[i];
  return g;
}

// ---------------------------------------------------------------------------
// Batched wrappers

namespace {

GeometricTensor apply_conv(const GeometricTensor& x, const FilterBank& bank,
                           std::span<const Real> canonical, int padding) {
  require(x.ftype() == bank.in_type(), ErrorCode::kLayoutMismatch,
          "input field type " + x.ftype().describe() + " does not match filter bank input " +
              bank.in_type().describe());
  const std::vector<Real> expanded = bank.expand(canonical);
  const FieldType out_type = bank.out_type();
  GeometricTensor out;
  for (int b = 0; b < x.batch(); ++b) {
    FeatureMap y = conv2d(x.sample(b), expanded, out_type.channels(), bank.kernel(), padding);
    if (b == 0) out = GeometricTensor(x.batch(), out_type, y.height(), y.width());
    out.set_sample(b, y);
  }
  return out;
}

}  // namespace

GeometricTensor lift_conv(const GeometricTensor& x, const FilterBank& bank,
                          std::span<const Real> canonical, int padding) {
  require(bank.lifting(), ErrorCode::kLayoutMismatch, "lift_conv needs a trivial-input filter bank");
  return apply_conv(x, bank, canonical, padding);
}

GeometricTensor group_conv(const GeometricTensor& x, const FilterBank& bank,
                           std::span<const Real> canonical, int padding) {
  require(!bank.lifting(), ErrorCode::kLayoutMismatch, "group_conv needs a regular-input filter bank");
  return apply_conv(x, bank, canonical, padding);
}

GeometricTensor field_norm(const GeometricTensor& x, std::span<const Real> gain,
                           std::span<const Real> bias) {
  const int fields = x.ftype().multiplicity;
  require(static_cast<int>(gain.size()) == fields && static_cast<int>(bias.size()) == fields,
          ErrorCode::kLayoutMismatch, "field_norm needs one gain and bias per field");
  FieldNormLayer layer("field_norm", x.ftype());
  std::vector<Real> params(gain.begin(), gain.end());
  params.insert(params.end(), bias.begin(), bias.end());
  GeometricTensor out(x.batch(), x.ftype(), x.height(), x.width());
  for (int b = 0; b < x.batch(); ++b) out.set_sample(b, layer.forward(params, x.sample(b), nullptr));
  return out;
}

}  // namespace eqdp
