// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/dsp/filterbank.hpp"

#include <cmath>
#include <string>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FilterbankMatrix make_filterbank(FilterbankKind kind, int n_filters, int n_fft,
                                 int sample_rate) {
  const int bins = n_fft / 2 + 1;
  if (n_filters < 1 || n_filters > bins)
    throw ConfigError("n_filters must be in [1, bins], got " + std::to_string(n_filters) +
                      " with bins=" + std::to_string(bins));
  const double f_max = sample_rate / 2.0;

  // n_filters + 2 edge frequencies, uniform on the chosen scale; filter i
  // rises over [e_i, e_{i+1}] and falls over [e_{i+1}, e_{i+2}].
  std::vector<double> edges(n_filters + 2);
  if (kind == FilterbankKind::mel) {
    const double m_lo = hz_to_mel(0.0), m_hi = hz_to_mel(f_max);
    for (int i = 0; i < n_filters + 2; ++i)
      edges[i] = mel_to_hz(m_lo + (m_hi - m_lo) * i / (n_filters + 1));
  } else {
    for (int i = 0; i < n_filters + 2; ++i) edges[i] = f_max * i / (n_filters + 1);
  }

  FilterbankMatrix fb;
  fb.kind = kind;
  fb.f_min = 0.0;
  fb.f_max = f_max;
  fb.n_fft = n_fft;
  fb.sample_rate = sample_rate;
  fb.weights = Tensor({n_filters, bins});
  for (int i = 0; i < n_filters; ++i) {
    const double lo = edges[i], mid = edges[i + 1], hi = edges[i + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f == mid)
        w = 1.0;
      else if (f > mid && f < hi)
        w = (hi - f) / (hi - mid);
      fb.weights.at(i, b) = w;
    }
  }
  return fb;
}

Tensor apply_filterbank_power(const Tensor& grid, const FilterbankMatrix& fb) {
  const int64_t frames = grid.shape[0];
  const int64_t bins = fb.bins();
  if (grid.shape[1] != 2 * bins)
    throw ConfigError("filterbank bins mismatch: spectrogram has " +
                      std::to_string(grid.shape[1] / 2) + " bins, filterbank expects " +
                      std::to_string(bins));
  const int64_t nf = fb.n_filters();
  Tensor out({frames, nf});
  std::vector<double> power(bins);
  for (int64_t k = 0; k < frames; ++k) {
    for (int64_t b = 0; b < bins; ++b) {
      const double re = grid.at(k, b), im = grid.at(k, bins + b);
      power[b] = re * re + im * im;
    }
    for (int64_t i = 0; i < nf; ++i) {
      double acc = 0.0;
      for (int64_t b = 0; b < bins; ++b) acc += fb.weights.at(i, b) * power[b];
      out.at(k, i) = acc;
    }
  }
  return out;
}

Tensor power_spectrogram_filtered(const Waveform& x, const SpectralConfig& cfg,
                                  const FilterbankMatrix& fb) {
  if (cfg.n_fft != fb.n_fft)
    throw ConfigError("spectral config n_fft " + std::to_string(cfg.n_fft) +
                      " does not match filterbank n_fft " + std::to_string(fb.n_fft));
  return apply_filterbank_power(stft_concat(x.samples, cfg), fb);
}

ConditionGrid mel_spectrogram(const Waveform& x, const SpectralConfig& cfg,
                              const FilterbankMatrix& fb, bool log_scale, double floor) {
  if (fb.kind != FilterbankKind::mel)
    throw ConfigError("mel_spectrogram requires a mel filterbank");
  ConditionGrid grid;
  grid.hop = cfg.hop;
  grid.features = power_spectrogram_filtered(x, cfg, fb);
  if (log_scale)
    for (auto& v : grid.features.data) v = std::log(std::max(v, floor));
  return grid;
}

}  // namespace flow2gan::dsp
