// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/flow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::flow {

LossMode parse_loss_mode(const std::string& s) {
  if (s == "velocity") return LossMode::velocity;
  if (s == "endpoint_plain") return LossMode::endpoint_plain;
  if (s == "endpoint_perframe") return LossMode::endpoint_perframe;
  if (s == "endpoint_tfactor") return LossMode::endpoint_tfactor;
  if (s == "endpoint_spectral") return LossMode::endpoint_spectral;
  throw ConfigError("unknown loss mode: " + s);
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::velocity: return "velocity";
    case LossMode::endpoint_plain: return "endpoint_plain";
    case LossMode::endpoint_perframe: return "endpoint_perframe";
    case LossMode::endpoint_tfactor: return "endpoint_tfactor";
    case LossMode::endpoint_spectral: return "endpoint_spectral";
  }
  throw ConfigError("invalid loss mode value");
}

void StepSchedule::validate() const {
  if (times.size() < 2) throw ConfigError("schedule needs at least two times");
  if (times.front() != 0.0 || times.back() != 1.0)
    throw ConfigError("schedule endpoints must be exactly 0 and 1");
  for (size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1]) throw ConfigError("schedule times must strictly increase");
}

StepSchedule uniform_schedule(int n) {
  if (n < 1) throw ConfigError("schedule needs n >= 1 steps");
  StepSchedule s;
  s.times.resize(n + 1);
  for (int i = 0; i <= n; ++i) s.times[i] = static_cast<double>(i) / n;
  return s;
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  if (!x0.same_shape(x1)) throw InputError("interpolate: shape mismatch");
  if (t < 0.0 || t > 1.0) throw InputError("interpolate: t outside [0, 1]");
  Tensor xt = x0;
  for (size_t i = 0; i < xt.data.size(); ++i)
    xt.data[i] = (1.0 - t) * x0.data[i] + t * x1.data[i];
  return xt;
}

Tensor endpoint_to_velocity(const Tensor& g, const Tensor& xt, double t) {
  if (!g.same_shape(xt)) throw InputError("endpoint_to_velocity: shape mismatch");
  if (t >= 1.0 - kTimeGuard)
    throw DomainError("endpoint_to_velocity: t too close to 1");
  Tensor v = g;
  const double inv = 1.0 / (1.0 - t);
  for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = (g.data[i] - xt.data[i]) * inv;
  return v;
}

std::vector<double> sample_t(int batch, Rng& rng) {
  if (batch < 1) throw InputError("sample_t: batch must be >= 1");
  std::vector<double> t(batch);
  for (auto& v : t) v = rng.uniform() * (1.0 - kTimeGuard);
  return t;
}

namespace {

Tensor filtered_energy(const LossSpec& spec, const Tensor& x) {
  Waveform w;
  w.samples = x.data;
  w.sample_rate = spec.scale_fb.sample_rate;
  return dsp::power_spectrogram_filtered(w, spec.scale_spectral, spec.scale_fb);
}

void require_scale(const LossSpec& spec, const char* mode) {
  if (!spec.has_scale)
    throw ConfigError(std::string(mode) + " loss mode needs a scale config");
}

}  // namespace

Tensor spectral_scale_grid(const LossSpec& spec, const Tensor& x1) {
  require_scale(spec, "endpoint_spectral");
  Tensor s = filtered_energy(spec, x1);
  for (auto& v : s.data)
    v = std::clamp(1.0 / std::sqrt(v + spec.epsilon), spec.clamp_lo, spec.clamp_hi);
  return s;
}

ad::Value fm_loss(const LossSpec& spec, const ad::Value& model_out, const Tensor& x1,
                  [[maybe_unused]] const Tensor& xt, double t, const Tensor& x0) {
  if (!model_out.val().same_shape(x1)) throw InputError("fm_loss: shape mismatch");

  switch (spec.mode) {
    case LossMode::velocity: {
      Tensor v = x1;
      for (size_t i = 0; i < v.data.size(); ++i) v.data[i] -= x0.data[i];
      return ad::mean(ad::square(ad::sub(model_out, ad::Value::constant(std::move(v)))));
    }
    case LossMode::endpoint_plain:
      return ad::mean(ad::square(ad::sub(model_out, ad::Value::constant(x1))));
    case LossMode::endpoint_tfactor: {
      if (t >= 1.0 - kTimeGuard) throw DomainError("endpoint_tfactor: t too close to 1");
      const double w = 1.0 / ((1.0 - t) * (1.0 - t));
      return ad::scale(ad::mean(ad::square(ad::sub(model_out, ad::Value::constant(x1)))), w);
    }
    case LossMode::endpoint_perframe: {
      require_scale(spec, "endpoint_perframe");
      const int64_t len = x1.numel();
      const int64_t hop = spec.scale_spectral.hop;
      // Mean squared amplitude over non-overlapping hop-sized windows.
      Tensor weights({len});
      for (int64_t start = 0; start < len; start += hop) {
        const int64_t end = std::min(len, start + hop);
        double e = 0.0;
        for (int64_t i = start; i < end; ++i) e += x1.data[i] * x1.data[i];
        e /= static_cast<double>(end - start);
        const double s =
            std::clamp(1.0 / std::sqrt(e + spec.epsilon), spec.clamp_lo, spec.clamp_hi);
        for (int64_t i = start; i < end; ++i) weights.data[i] = s / static_cast<double>(len);
      }
      return ad::sum_mul(ad::square(ad::sub(model_out, ad::Value::constant(x1))),
                         std::move(weights));
    }
    case LossMode::endpoint_spectral: {
      Tensor scale = spectral_scale_grid(spec, x1);
      ad::Value diff = ad::sub(model_out, ad::Value::constant(x1));
      ad::Value spec_grid = ad::stft(diff, spec.scale_spectral);
      ad::Value power = ad::power_from_stft(spec_grid);
      // S(g - x1) = power * fb^T, then cellwise weighting and a full sum.
      const auto& w = spec.scale_fb.weights;  // [n_filters x bins]
      Tensor fb_t({w.shape[1], w.shape[0]});
      for (int64_t i = 0; i < w.shape[0]; ++i)
        for (int64_t b = 0; b < w.shape[1]; ++b) fb_t.at(b, i) = w.at(i, b);
      ad::Value s_diff = ad::matmul(power, ad::Value::constant(std::move(fb_t)));
      return ad::sum_mul(s_diff, std::move(scale));
    }
  }
  throw ConfigError("invalid loss mode value");
}

ad::Value euler_sample_velocity(const ModelFn& f, const ad::Value& x0,
                                const StepSchedule& schedule) {
  schedule.validate();
  ad::Value x = x0;
  for (size_t i = 0; i + 1 < schedule.times.size(); ++i) {
    const double t = schedule.times[i];
    const double dt = schedule.times[i + 1] - t;
    x = ad::axpby(1.0, x, dt, f(x, t));
  }
  return x;
}

ad::Value euler_sample_endpoint(const ModelFn& g, const ad::Value& x0,
                                const StepSchedule& schedule) {
  schedule.validate();
  for (size_t i = 0; i + 1 < schedule.times.size(); ++i)
    if (schedule.times[i] >= 1.0 - kTimeGuard)
      throw ConfigError("endpoint sampler cannot evaluate at t = 1");
  ad::Value x = x0;
  for (size_t i = 0; i + 1 < schedule.times.size(); ++i) {
    const double t = schedule.times[i];
    const double alpha = (schedule.times[i + 1] - t) / (1.0 - t);
    ad::Value ghat = g(x, t);
    // alpha = 1 only on the final step; landing exactly on g keeps the
    // one-step sampler bitwise equal to direct endpoint prediction.
    x = alpha == 1.0 ? ghat : ad::axpby(1.0 - alpha, x, alpha, ghat);
  }
  return x;
}

}  // namespace flow2gan::flow
