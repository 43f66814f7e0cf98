// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "flow2gan/core/tensor.hpp"
#include "flow2gan/core/types.hpp"
#include "flow2gan/dsp/spectral.hpp"

namespace flow2gan::dsp {

enum class FilterbankKind { mel, linear };

/// Bank of triangular filters over one-sided FFT bins, peak value 1.
/// weights is [n_filters x bins]. Centers are uniform on the mel scale
/// (kind=mel, HTK formula) or in Hz (kind=linear, adjacent triangles
/// overlapping by half their support), spanning [0, sample_rate/2].
struct FilterbankMatrix {
  Tensor weights;
  FilterbankKind kind = FilterbankKind::linear;
  double f_min = 0.0;
  double f_max = 0.0;
  int n_fft = 0;
  int sample_rate = 0;

  int64_t n_filters() const { return weights.shape[0]; }
  int64_t bins() const { return weights.shape[1]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

FilterbankMatrix make_filterbank(FilterbankKind kind, int n_filters, int n_fft,
                                 int sample_rate);

/// fb * |STFT(x)|^2 per frame: [frames x n_filters], all entries >= 0.
Tensor power_spectrogram_filtered(const Waveform& x, const SpectralConfig& cfg,
                                  const FilterbankMatrix& fb);

/// Same as above on an already-computed concat-layout spectrogram.
Tensor apply_filterbank_power(const Tensor& stft_concat_grid, const FilterbankMatrix& fb);

/// Mel energies per frame; log_scale applies log(max(mel, floor)).
ConditionGrid mel_spectrogram(const Waveform& x, const SpectralConfig& cfg,
                              const FilterbankMatrix& fb, bool log_scale, double floor);

}  // namespace flow2gan::dsp
