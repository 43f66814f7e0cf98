// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flow2gan/core/rng.hpp"
#include "flow2gan/core/tensor.hpp"
#include "flow2gan/dsp/filterbank.hpp"
#include "flow2gan/dsp/spectral.hpp"
#include "flow2gan/nn/autodiff.hpp"

namespace flow2gan::flow {

/// Times at or beyond 1 - kTimeGuard are rejected wherever 1/(1-t) appears.
constexpr double kTimeGuard = 1e-5;

enum class LossMode {
  velocity,           // regress x1 - x0
  endpoint_plain,     // mean ||g - x1||^2
  endpoint_perframe,  // endpoint MSE with per-frame energy scaling
  endpoint_tfactor,   // endpoint MSE with the 1/(1-t)^2 factor kept
  endpoint_spectral,  // energy-adaptive spectral scaling
};

LossMode parse_loss_mode(const std::string& s);
std::string to_string(LossMode mode);

/// Everything fm_loss needs beyond the tensors. The scale fields configure
/// the smoothed energy S(x) used by the spectral and per-frame modes.
struct LossSpec {
  LossMode mode = LossMode::endpoint_spectral;
  double clamp_lo = 0.01;
  double clamp_hi = 100.0;
  double epsilon = 1e-7;
  bool has_scale = false;
  dsp::SpectralConfig scale_spectral;
  dsp::FilterbankMatrix scale_fb;
};

/// Ordered sampling times 0 = t_0 < ... < t_N = 1.
struct StepSchedule {
  std::vector<double> times;

  int n_steps() const { return static_cast<int>(times.size()) - 1; }
  void validate() const;  // throws ConfigError
};

StepSchedule uniform_schedule(int n);

// Straight-path plumbing on plain tensors.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);
Tensor endpoint_to_velocity(const Tensor& g, const Tensor& xt, double t);

/// i.i.d. uniform draws on [0, 1 - kTimeGuard), one per batch element.
std::vector<double> sample_t(int batch, Rng& rng);

/// The spectral-scale grid clamp(1/sqrt(S(x1)+eps), lo, hi) as a plain
/// tensor [frames x n_filters]; exposed for tests and diagnostics.
Tensor spectral_scale_grid(const LossSpec& spec, const Tensor& x1);

/// Per-example loss (batch averaging is the caller's job). model_out is the
/// network output: a velocity for LossMode::velocity, the endpoint otherwise.
/// Differentiable with respect to model_out.
ad::Value fm_loss(const LossSpec& spec, const ad::Value& model_out, const Tensor& x1,
                  const Tensor& xt, double t, const Tensor& x0);

using ModelFn = std::function<ad::Value(const ad::Value& x, double t)>;

/// Plain Euler integration of a velocity field over the schedule.
ad::Value euler_sample_velocity(const ModelFn& f, const ad::Value& x0,
                                const StepSchedule& schedule);

/// Endpoint-form Euler update x <- (1-a)x + a*g with a = dt/(1-t). For a
/// single step the result is exactly g(x0, 0). Differentiable through every
/// step when gradients are enabled.
ad::Value euler_sample_endpoint(const ModelFn& g, const ad::Value& x0,
                                const StepSchedule& schedule);

}  // namespace flow2gan::flow
