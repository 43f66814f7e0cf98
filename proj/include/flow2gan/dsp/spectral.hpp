// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "flow2gan/core/tensor.hpp"
#include "flow2gan/core/types.hpp"

namespace flow2gan::dsp {

/// STFT analysis/synthesis settings.
///
/// center=true: the signal is reflection-padded by n_fft/2 on both sides and
/// frame k is centered at sample k*hop. center=false: frame k starts at
/// sample k*hop and the signal is treated as zero-extended on the right, so
/// frame placement is independent of signal length. Both conventions yield
/// frames = ceil(length / hop), which equals length/hop for aligned lengths.
struct SpectralConfig {
  int n_fft = 1024;
  int hop = 256;
  enum class Window { hann } window = Window::hann;
  bool center = true;

  int bins() const { return n_fft / 2 + 1; }
  void validate() const;  // throws ConfigError on violated invariants
};

/// One-sided complex STFT grid, row-major [frames x bins].
struct ComplexSpectrogram {
  std::vector<std::complex<double>> data;
  int64_t frames = 0;
  SpectralConfig config;

  int64_t bins() const { return config.bins(); }
  std::complex<double>& at(int64_t f, int64_t b) { return data[f * bins() + b]; }
  std::complex<double> at(int64_t f, int64_t b) const { return data[f * bins() + b]; }
};

/// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

int64_t stft_frame_count(int64_t length, const SpectralConfig& cfg);

ComplexSpectrogram stft(const Waveform& wave, const SpectralConfig& cfg);

/// Overlap-add inverse with summed-squared-window normalization; exact
/// inverse of stft for center=true. out_length may not exceed
/// (frames-1)*hop + n_fft/2. center=false synthesis is unsupported (the
/// first samples fall on window zeros and cannot be recovered).
Waveform istft(const ComplexSpectrogram& spec, int64_t out_length);

// Raw-buffer kernels shared with the autodiff layer. The concat layout is
// [frames x 2*bins]: columns [0,bins) hold real parts, [bins,2*bins) hold
// imaginary parts. stft() and istft() are thin wrappers over these, so the
// differentiable and plain paths produce bitwise-identical values.
Tensor stft_concat(const std::vector<double>& x, const SpectralConfig& cfg);
std::vector<double> stft_concat_adjoint(const Tensor& grad_out, int64_t length,
                                        const SpectralConfig& cfg);
std::vector<double> istft_concat(const Tensor& spec, const SpectralConfig& cfg,
                                 int64_t out_length);
Tensor istft_concat_adjoint(const std::vector<double>& grad_y, int64_t frames,
                            const SpectralConfig& cfg);

ComplexSpectrogram spectrogram_from_concat(const Tensor& concat, const SpectralConfig& cfg);
Tensor concat_from_spectrogram(const ComplexSpectrogram& spec);

}  // namespace flow2gan::dsp
