#pragma once

// Feed-forward networks with a flat, canonically ordered parameter vector.
//
// Weight order: layer 0 weight matrix (row-major, rows = outputs), layer 0
// biases, layer 1 weight matrix, layer 1 biases, ... Every module (posterior
// files, weight boxes, propagation) indexes this same parameter space.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bnncert/error.hpp"

namespace bnncert {

enum class ActivationKind { relu, tanh, identity };

inline std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::identity: return "identity";
  }
  return "?";
}

inline ActivationKind activation_from_string(std::string_view name) {
  if (name == "relu") return ActivationKind::relu;
  if (name == "tanh") return ActivationKind::tanh;
  if (name == "identity" || name == "linear") return ActivationKind::identity;
  throw DomainError("unknown activation '" + std::string(name) + "'");
}

inline double activate(ActivationKind kind, double z) {
  switch (kind) {
    case ActivationKind::relu: return z > 0.0 ? z : 0.0;
    case ActivationKind::tanh: return std::tanh(z);
    case ActivationKind::identity: return z;
  }
  return z;
}

inline double activate_derivative(ActivationKind kind, double z) {
  switch (kind) {
    case ActivationKind::relu: return z > 0.0 ? 1.0 : 0.0;
    case ActivationKind::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case ActivationKind::identity: return 1.0;
  }
  return 1.0;
}

/// One affine layer followed by a pointwise activation.
struct LayerSpec {
  std::size_t rows = 0;  // output dimension
  std::size_t cols = 0;  // input dimension
  bool has_bias = true;
  ActivationKind activation = ActivationKind::identity;

  std::size_t weight_count() const { return rows * cols; }
  std::size_t param_count() const { return rows * cols + (has_bias ? rows : 0); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using WeightVector = std::vector<double>;

/// Read-only view of one layer's parameters inside a flat vector (or box bound).
struct LayerParams {
  std::span<const double> weights;  // rows * cols, row-major
  std::span<const double> bias;     // rows, or empty when the layer has no bias

  double w(std::size_t row, std::size_t col, std::size_t cols) const {
    return weights[row * cols + col];
  }
  double b(std::size_t row) const { return bias.empty() ? 0.0 : bias[row]; }
};

class Network {
 public:
  Network() = default;

  explicit Network(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
    detail::require_shape(!layers_.empty(), "network needs at least one layer");
    std::size_t offset = 0;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const auto& l = layers_[k];
      detail::require_shape(l.rows > 0 && l.cols > 0,
                            "layer " + std::to_string(k) + " has an empty weight matrix");
      if (k > 0) {
        detail::require_shape(layers_[k - 1].rows == l.cols,
                              "layer " + std::to_string(k) + " expects " + std::to_string(l.cols) +
                                  " inputs but layer " + std::to_string(k - 1) + " produces " +
                                  std::to_string(layers_[k - 1].rows));
      }
      if (k + 1 < layers_.size()) {
        detail::require_shape(l.activation != ActivationKind::identity,
                              "hidden layer " + std::to_string(k) + " must use relu or tanh");
      } else {
        detail::require_shape(l.activation == ActivationKind::identity,
                              "final layer activation must be identity");
      }
      offsets_.push_back(offset);
      offset += l.param_count();
    }
    num_params_ = offset;
  }

  /// Dense MLP: dims = {input, hidden..., output}; hidden layers share one activation.
  static Network mlp(const std::vector<std::size_t>& dims, ActivationKind hidden,
                     bool bias = true) {
    detail::require_shape(dims.size() >= 2, "mlp needs input and output dims");
    std::vector<LayerSpec> layers;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      const bool last = k + 2 == dims.size();
      layers.push_back({dims[k + 1], dims[k], bias, last ? ActivationKind::identity : hidden});
    }
    return Network(std::move(layers));
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  const LayerSpec& layer(std::size_t k) const { return layers_.at(k); }
  std::size_t input_dim() const { return layers_.front().cols; }
  std::size_t output_dim() const { return layers_.back().rows; }
  std::size_t num_params() const { return num_params_; }

  std::size_t weight_offset(std::size_t k) const { return offsets_.at(k); }
  std::size_t bias_offset(std::size_t k) const {
    return offsets_.at(k) + layers_.at(k).weight_count();
  }

  LayerParams params(std::span<const double> flat, std::size_t k) const {
    const auto& l = layers_[k];
    LayerParams p;
    p.weights = flat.subspan(weight_offset(k), l.weight_count());
    if (l.has_bias) p.bias = flat.subspan(bias_offset(k), l.rows);
    return p;
  }

  void check_weights(std::span<const double> w) const {
    if (w.size() != num_params_)
      throw ShapeError("weight vector has " + std::to_string(w.size()) + " entries, network has " +
                       std::to_string(num_params_) + " parameters");
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim())
      throw ShapeError("layer 0 expects " + std::to_string(input_dim()) + " inputs, got " +
                       std::to_string(x.size()));
  }

  friend bool operator==(const Network& a, const Network& b) { return a.layers_ == b.layers_; }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t num_params_ = 0;
};

/// Pre- and post-activation values of every layer, kept for backpropagation.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;  // inputs[k] feeds layer k; inputs[0] = x
  std::vector<std::vector<double>> pre;     // pre[k] = W_k inputs[k] + b_k

  const std::vector<double>& logits() const { return pre.back(); }
};

inline ForwardTrace forward_trace(const Network& net, std::span<const double> w,
                                  std::span<const double> x) {
  net.check_weights(w);
  net.check_input(x);
  ForwardTrace trace;
  trace.inputs.emplace_back(x.begin(), x.end());
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& spec = net.layer(k);
    const auto p = net.params(w, k);
    const auto& z = trace.inputs.back();
    std::vector<double> zeta(spec.rows);
    for (std::size_t i = 0; i < spec.rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < spec.cols; ++j) acc += p.w(i, j, spec.cols) * z[j];
      zeta[i] = acc + p.b(i);
    }
    if (k + 1 < net.num_layers()) {
      std::vector<double> next(spec.rows);
      for (std::size_t i = 0; i < spec.rows; ++i) next[i] = activate(spec.activation, zeta[i]);
      trace.inputs.push_back(std::move(next));
    }
    trace.pre.push_back(std::move(zeta));
  }
  return trace;
}

/// Logits of the deterministic network with weights w at input x.
inline std::vector<double> forward(const Network& net, std::span<const double> w,
                                   std::span<const double> x) {
  net.check_weights(w);
  net.check_input(x);
  // two ping-pong buffers instead of a full trace
  std::vector<double> z(x.begin(), x.end()), zeta;
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& spec = net.layer(k);
    const auto p = net.params(w, k);
    zeta.assign(spec.rows, 0.0);
    for (std::size_t i = 0; i < spec.rows; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < spec.cols; ++j) acc += p.w(i, j, spec.cols) * z[j];
      zeta[i] = acc + p.b(i);
    }
    if (k + 1 < net.num_layers())
      for (double& v : zeta) v = activate(spec.activation, v);
    std::swap(z, zeta);
  }
  return z;
}

struct Gradients {
  std::vector<double> input;    // d loss / d x
  std::vector<double> weights;  // d loss / d w (empty unless requested)
};

/// Backpropagates d loss / d logits through a recorded forward pass.
inline Gradients backward(const Network& net, std::span<const double> w, const ForwardTrace& trace,
                          std::span<const double> dlogits, bool want_weights) {
  detail::require_shape(dlogits.size() == net.output_dim(), "logit gradient has wrong size");
  Gradients g;
  if (want_weights) g.weights.assign(net.num_params(), 0.0);
  std::vector<double> delta(dlogits.begin(), dlogits.end());  // d loss / d pre[k]
  for (std::size_t k = net.num_layers(); k-- > 0;) {
    const auto& spec = net.layer(k);
    const auto p = net.params(w, k);
    const auto& in = trace.inputs[k];
    if (want_weights) {
      const std::size_t wo = net.weight_offset(k);
      for (std::size_t i = 0; i < spec.rows; ++i)
        for (std::size_t j = 0; j < spec.cols; ++j) g.weights[wo + i * spec.cols + j] = delta[i] * in[j];
      if (spec.has_bias) {
        const std::size_t bo = net.bias_offset(k);
        for (std::size_t i = 0; i < spec.rows; ++i) g.weights[bo + i] = delta[i];
      }
    }
    std::vector<double> din(spec.cols, 0.0);
    for (std::size_t i = 0; i < spec.rows; ++i)
      for (std::size_t j = 0; j < spec.cols; ++j) din[j] += p.w(i, j, spec.cols) * delta[i];
    if (k > 0) {
      const auto& prev = net.layer(k - 1);
      const auto& pre = trace.pre[k - 1];
      for (std::size_t j = 0; j < spec.cols; ++j) din[j] *= activate_derivative(prev.activation, pre[j]);
    }
    delta = std::move(din);
  }
  g.input = std::move(delta);
  return g;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax of empty vector");
  for (double v : logits)
    if (!std::isfinite(v)) throw NumericError("softmax input is not finite");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace bnncert
