// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "flow2gan/core/tensor.hpp"

namespace flow2gan {

/// Mono audio buffer. Samples are dimensionless amplitudes, nominally in
/// [-1, 1]; training noise may exceed that range.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  int64_t length() const { return static_cast<int64_t>(samples.size()); }
};

/// Frame-rate conditioning features (mel, log-mel, or generic embeddings).
/// features is [frames x dim]; frame k corresponds to waveform sample k*hop.
struct ConditionGrid {
  Tensor features;
  int hop = 0;

  int64_t frames() const { return features.rank() == 2 ? features.shape[0] : 0; }
  int64_t dim() const { return features.rank() == 2 ? features.shape[1] : 0; }
};

}  // namespace flow2gan
