// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "flow2gan/core/types.hpp"

namespace flow2gan::dsp {

/// Reads a mono WAV file; 16-bit PCM and 32-bit IEEE float are supported.
Waveform read_wav(const std::string& path);

/// Writes mono 32-bit IEEE float WAV, lossless for samples in double range.
void write_wav_float32(const std::string& path, const Waveform& wave);

/// Writes mono 16-bit PCM. dither adds deterministic seeded TPDF noise of
/// one LSB before rounding; samples are clipped to [-1, 1].
void write_wav_pcm16(const std::string& path, const Waveform& wave, bool dither,
                     uint64_t dither_seed);

}  // namespace flow2gan::dsp
