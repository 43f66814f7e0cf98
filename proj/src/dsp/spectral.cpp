// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/dsp/spectral.hpp"

#include <cmath>
#include <string>

#include "flow2gan/core/errors.hpp"
#include "flow2gan/dsp/fft.hpp"

namespace flow2gan::dsp {

void SpectralConfig::validate() const {
  if (!is_power_of_two(n_fft))
    throw ConfigError("n_fft must be a power of two, got " + std::to_string(n_fft));
  if (hop <= 0 || hop > n_fft)
    throw ConfigError("hop must be in [1, n_fft], got " + std::to_string(hop));
  if (n_fft % hop != 0)
    throw ConfigError("hop must divide n_fft, got hop=" + std::to_string(hop) +
                      " n_fft=" + std::to_string(n_fft));
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / n);
  return w;
}

int64_t stft_frame_count(int64_t length, const SpectralConfig& cfg) {
  return (length + cfg.hop - 1) / cfg.hop;
}

namespace {

// Reflection padding without edge repetition: [a,b,c,d] pad 2 -> [c,b,a,b,c,d,c,b].
std::vector<double> pad_reflect(const std::vector<double>& x, int pad) {
  const int64_t len = static_cast<int64_t>(x.size());
  if (len < pad + 1)
    throw InputError("signal of length " + std::to_string(len) +
                     " too short for reflection pad " + std::to_string(pad));
  std::vector<double> p(len + 2 * pad);
  for (int64_t i = 0; i < len; ++i) p[pad + i] = x[i];
  for (int j = 0; j < pad; ++j) {
    p[pad - 1 - j] = x[1 + j];
    p[pad + len + j] = x[len - 2 - j];
  }
  return p;
}

void check_input(const std::vector<double>& x, const SpectralConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw InputError("stft: empty waveform");
}

}  // namespace

Tensor stft_concat(const std::vector<double>& x, const SpectralConfig& cfg) {
  check_input(x, cfg);
  const int64_t len = static_cast<int64_t>(x.size());
  const int n = cfg.n_fft;
  const int pad = n / 2;
  const int64_t frames = stft_frame_count(len, cfg);
  const int64_t bins = cfg.bins();

  std::vector<double> padded;
  const std::vector<double>* src = &x;
  if (cfg.center) {
    padded = pad_reflect(x, pad);
    src = &padded;
  }
  const int64_t src_len = static_cast<int64_t>(src->size());

  const std::vector<double> w = hann_window(n);
  Tensor out({frames, 2 * bins});
  std::vector<std::complex<double>> buf(n);
  for (int64_t k = 0; k < frames; ++k) {
    const int64_t start = k * cfg.hop;
    for (int i = 0; i < n; ++i) {
      const int64_t s = start + i;
      const double v = s < src_len ? (*src)[s] : 0.0;
      buf[i] = {v * w[i], 0.0};
    }
    fft_inplace(buf, false);
    for (int64_t b = 0; b < bins; ++b) {
      out.at(k, b) = buf[b].real();
      out.at(k, bins + b) = buf[b].imag();
    }
  }
  return out;
}

std::vector<double> stft_concat_adjoint(const Tensor& grad_out, int64_t length,
                                        const SpectralConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_fft;
  const int pad = n / 2;
  const int64_t bins = cfg.bins();
  const int64_t frames = grad_out.shape[0];
  const std::vector<double> w = hann_window(n);

  const int64_t padded_len = cfg.center ? length + 2 * pad : length;
  std::vector<double> gpad(padded_len, 0.0);
  std::vector<std::complex<double>> c(n);
  for (int64_t k = 0; k < frames; ++k) {
    // Jacobian-transpose of the one-sided real FFT: halved interior bins,
    // Hermitian extension, unnormalized inverse transform.
    c[0] = {grad_out.at(k, 0), 0.0};
    c[n / 2] = {grad_out.at(k, bins - 1), 0.0};
    for (int64_t b = 1; b < bins - 1; ++b) {
      std::complex<double> g(grad_out.at(k, b), grad_out.at(k, bins + b));
      c[b] = 0.5 * g;
      c[n - b] = 0.5 * std::conj(g);
    }
    fft_inplace(c, true);
    const int64_t start = k * cfg.hop;
    for (int i = 0; i < n; ++i) {
      const int64_t s = start + i;
      if (s < padded_len) gpad[s] += w[i] * c[i].real() * n;
    }
  }

  if (!cfg.center) return gpad;
  std::vector<double> gx(length, 0.0);
  for (int64_t i = 0; i < length; ++i) gx[i] = gpad[pad + i];
  for (int j = 0; j < pad; ++j) {
    gx[1 + j] += gpad[pad - 1 - j];
    gx[length - 2 - j] += gpad[pad + length + j];
  }
  return gx;
}

namespace {

// Summed squared synthesis windows over the overlap-add span.
std::vector<double> window_square_sum(int64_t frames, const SpectralConfig& cfg) {
  const int n = cfg.n_fft;
  const std::vector<double> w = hann_window(n);
  std::vector<double> wss((frames - 1) * cfg.hop + n, 0.0);
  for (int64_t k = 0; k < frames; ++k)
    for (int i = 0; i < n; ++i) wss[k * cfg.hop + i] += w[i] * w[i];
  return wss;
}

void check_istft(const SpectralConfig& cfg, int64_t frames, int64_t out_length) {
  cfg.validate();
  if (!cfg.center)
    throw ConfigError("istft requires center=true analysis frames");
  if (frames < 1) throw InputError("istft: need at least one frame");
  const int64_t max_len = (frames - 1) * cfg.hop + cfg.n_fft / 2;
  if (out_length < 1 || out_length > max_len)
    throw InputError("istft: out_length " + std::to_string(out_length) +
                     " outside reconstructable span [1, " + std::to_string(max_len) + "]");
}

}  // namespace

std::vector<double> istft_concat(const Tensor& spec, const SpectralConfig& cfg,
                                 int64_t out_length) {
  const int64_t frames = spec.shape[0];
  check_istft(cfg, frames, out_length);
  const int n = cfg.n_fft;
  const int64_t bins = cfg.bins();
  const int pad = n / 2;
  const std::vector<double> w = hann_window(n);

  std::vector<double> buf((frames - 1) * cfg.hop + n, 0.0);
  const std::vector<double> wss = window_square_sum(frames, cfg);
  std::vector<std::complex<double>> c(n);
  for (int64_t k = 0; k < frames; ++k) {
    // Hermitian spectrum from the stored one-sided coefficients; the
    // imaginary parts of DC and Nyquist are ignored (nonphysical).
    c[0] = {spec.at(k, 0), 0.0};
    c[n / 2] = {spec.at(k, bins - 1), 0.0};
    for (int64_t b = 1; b < bins - 1; ++b) {
      std::complex<double> v(spec.at(k, b), spec.at(k, bins + b));
      c[b] = v;
      c[n - b] = std::conj(v);
    }
    fft_inplace(c, true);
    const int64_t start = k * cfg.hop;
    for (int i = 0; i < n; ++i) buf[start + i] += w[i] * c[i].real();
  }

  std::vector<double> y(out_length);
  for (int64_t i = 0; i < out_length; ++i) y[i] = buf[pad + i] / wss[pad + i];
  return y;
}

Tensor istft_concat_adjoint(const std::vector<double>& grad_y, int64_t frames,
                            const SpectralConfig& cfg) {
  const int64_t out_length = static_cast<int64_t>(grad_y.size());
  check_istft(cfg, frames, out_length);
  const int n = cfg.n_fft;
  const int64_t bins = cfg.bins();
  const int pad = n / 2;
  const std::vector<double> w = hann_window(n);
  const std::vector<double> wss = window_square_sum(frames, cfg);

  std::vector<double> gbuf((frames - 1) * cfg.hop + n, 0.0);
  for (int64_t i = 0; i < out_length; ++i) gbuf[pad + i] = grad_y[i] / wss[pad + i];

  Tensor grad_spec({frames, 2 * bins});
  std::vector<std::complex<double>> c(n);
  const double inv_n = 1.0 / n;
  for (int64_t k = 0; k < frames; ++k) {
    const int64_t start = k * cfg.hop;
    for (int i = 0; i < n; ++i) c[i] = {w[i] * gbuf[start + i], 0.0};
    fft_inplace(c, false);
    grad_spec.at(k, 0) = c[0].real() * inv_n;
    grad_spec.at(k, bins - 1) = c[n / 2].real() * inv_n;
    for (int64_t b = 1; b < bins - 1; ++b) {
      grad_spec.at(k, b) = 2.0 * c[b].real() * inv_n;
      grad_spec.at(k, bins + b) = 2.0 * c[b].imag() * inv_n;
    }
  }
  return grad_spec;
}

ComplexSpectrogram spectrogram_from_concat(const Tensor& concat, const SpectralConfig& cfg) {
  ComplexSpectrogram s;
  s.config = cfg;
  s.frames = concat.shape[0];
  const int64_t bins = cfg.bins();
  s.data.resize(s.frames * bins);
  for (int64_t k = 0; k < s.frames; ++k)
    for (int64_t b = 0; b < bins; ++b)
      s.data[k * bins + b] = {concat.at(k, b), concat.at(k, bins + b)};
  return s;
}

Tensor concat_from_spectrogram(const ComplexSpectrogram& spec) {
  const int64_t bins = spec.bins();
  Tensor t({spec.frames, 2 * bins});
  for (int64_t k = 0; k < spec.frames; ++k)
    for (int64_t b = 0; b < bins; ++b) {
      t.at(k, b) = spec.at(k, b).real();
      t.at(k, bins + b) = spec.at(k, b).imag();
    }
  return t;
}

ComplexSpectrogram stft(const Waveform& wave, const SpectralConfig& cfg) {
  return spectrogram_from_concat(stft_concat(wave.samples, cfg), cfg);
}

Waveform istft(const ComplexSpectrogram& spec, int64_t out_length) {
  Waveform w;
  w.sample_rate = 0;
  w.samples = istft_concat(concat_from_spectrogram(spec), spec.config, out_length);
  return w;
}

}  // namespace flow2gan::dsp
