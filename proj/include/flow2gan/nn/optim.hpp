// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "flow2gan/nn/autodiff.hpp"

namespace flow2gan::nn {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay over a fixed parameter group.
/// Moment buffers align with the parameter list by index.
class AdamW {
 public:
  AdamW(std::vector<ad::Value> params, AdamWConfig cfg);

  /// One update; lr_scale multiplies the base learning rate (schedules).
  /// Missing gradients count as zero.
  void step(double lr_scale = 1.0);
  void zero_grad();

  double global_grad_norm() const;
  /// Scales gradients so their global norm is at most max_norm.
  void clip_grad_norm(double max_norm);

  const std::vector<ad::Value>& params() const { return params_; }
  const AdamWConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_count_; }

  // Checkpoint access.
  std::vector<Tensor>& moment1() { return m_; }
  std::vector<Tensor>& moment2() { return v_; }
  const std::vector<Tensor>& moment1() const { return m_; }
  const std::vector<Tensor>& moment2() const { return v_; }
  void set_step_count(int64_t t) { step_count_ = t; }

 private:
  std::vector<ad::Value> params_;
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  int64_t step_count_ = 0;
};

/// Cosine decay from 1 to 0 over max_iters; returns the lr multiplier.
double cosine_lr_scale(int64_t iteration, int64_t max_iters);

}  // namespace flow2gan::nn
