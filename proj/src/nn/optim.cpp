// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/nn/optim.hpp"

#include <cmath>

namespace flow2gan::nn {

AdamW::AdamW(std::vector<ad::Value> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(Tensor(p.val().shape));
    v_.emplace_back(Tensor(p.val().shape));
  }
}

void AdamW::step(double lr_scale) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  const double lr = cfg_.lr * lr_scale;
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i].mutable_value();
    const bool has_grad = params_[i].has_grad();
    const Tensor& grad = params_[i].grad();
    for (size_t j = 0; j < value.data.size(); ++j) {
      const double g = has_grad ? grad.data[j] : 0.0;
      double& m = m_[i].data[j];
      double& v = v_[i].data[j];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      value.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                             cfg_.weight_decay * value.data[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double AdamW::global_grad_norm() const {
  double acc = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad().data) acc += g * g;
  }
  return std::sqrt(acc);
}

void AdamW::clip_grad_norm(double max_norm) {
  const double norm = global_grad_norm();
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& p : params_) {
    if (!p.has_grad()) continue;
    Tensor& g = p.node()->grad;
    for (auto& x : g.data) x *= s;
  }
}

double cosine_lr_scale(int64_t iteration, int64_t max_iters) {
  if (max_iters <= 0) return 1.0;
  const double frac = std::min(1.0, static_cast<double>(iteration) / max_iters);
  return 0.5 * (1.0 + std::cos(M_PI * frac));
}

}  // namespace flow2gan::nn
