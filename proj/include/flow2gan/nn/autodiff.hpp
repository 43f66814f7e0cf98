// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flow2gan/core/tensor.hpp"
#include "flow2gan/dsp/filterbank.hpp"
#include "flow2gan/dsp/spectral.hpp"

namespace flow2gan::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One tape entry. Nodes form a DAG through parents; creation order gives a
/// valid topological order for the backward sweep. grad stays empty (meaning
/// zero) until something accumulates into it.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  uint64_t order = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;
  std::string name;

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor(value.shape);
  }
  void accumulate(const Tensor& g) {
    ensure_grad();
    for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
  }
};

/// While a guard is alive, newly created ops skip tape construction: results
/// carry the same values (identical compute path) but no parents or backward
/// closures. Used for inference and evaluation.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

/// Handle to a tape node.
class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : node_(std::move(n)) {}
  /// New leaf holding t. requires_grad marks it as a trainable parameter.
  explicit Value(Tensor t, bool requires_grad = false);

  static Value constant(Tensor t) { return Value(std::move(t), false); }
  static Value scalar(double v) { return Value(Tensor::scalar(v), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& val() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.data.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const NodePtr& node() const { return node_; }
  double scalar_value() const { return node_->value.data[0]; }

  void zero_grad() { node_->grad = Tensor(); }
  /// Cuts the tape: returns a constant with the same value.
  Value detach() const { return constant(node_->value); }

 private:
  NodePtr node_;
};

/// Runs the reverse sweep from a scalar loss. Gradients accumulate into
/// every reachable node with requires_grad (leaves keep theirs for the
/// optimizer; interior grads are discarded with the tape).
void backward(const Value& loss);

// Elementwise and broadcast arithmetic. Rowvec variants broadcast a
// dim-sized vector across the rows of an [F x D] matrix.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value neg(const Value& a);
Value add_scalar(const Value& a, double c);
Value scale(const Value& a, double c);
Value axpby(double a, const Value& x, double b, const Value& y);
Value add_rowvec(const Value& x, const Value& v);
Value affine_rows(const Value& x, const Value& s, const Value& b);  // x*(1+s)+b

// Nonlinearities and pointwise maps.
Value relu(const Value& a);
Value leaky_relu(const Value& a, double slope);
Value prelu(const Value& x, const Value& alpha);  // per-channel slope, last dim
Value abs_val(const Value& a);
Value square(const Value& a);
Value sqrt_val(const Value& a);
Value log_floor(const Value& a, double floor);
Value clamp(const Value& a, double lo, double hi);

// Reductions to rank-0 scalars.
Value sum(const Value& a);
Value mean(const Value& a);
Value sum_mul(const Value& a, Tensor weights);  // sum(a .* constant weights)

// Linear algebra and convolutions.
Value matmul(const Value& a, const Value& b);               // [M x K] * [K x N]
Value dwconv1d(const Value& x, const Value& w, const Value& bias);  // per-channel, same pad
Value conv2d(const Value& x, const Value& w, const Value& bias, int stride_h,
             int stride_w, int pad_h, int pad_w);           // x [C,H,W], w [O,C,kh,kw]

// Structure ops.
Value repeat_rows(const Value& x, int factor);
Value pad_reshape_period(const Value& x, int period);       // [L] -> [1, ceil(L/p), p]
Value reshape(const Value& x, std::vector<int64_t> shape);  // same element count

// Normalization: y = x * exp(log_scale) / rms(x - bias) per row.
Value bias_norm(const Value& x, const Value& bias, const Value& log_scale, double eps);

// Spectral ops; layouts match the dsp concat convention [F x 2*bins].
Value stft(const Value& x, const dsp::SpectralConfig& cfg);
Value istft(const Value& spec, const dsp::SpectralConfig& cfg, int64_t out_length);
Value power_from_stft(const Value& spec);                   // re^2 + im^2 per bin
Value mag_from_stft(const Value& spec, double eps);         // sqrt(power + eps)

}  // namespace flow2gan::ad
