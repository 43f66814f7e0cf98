// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flow2gan/core/types.hpp"
#include "flow2gan/data/data.hpp"
#include "flow2gan/flow/flow.hpp"
#include "flow2gan/train/train.hpp"

namespace flow2gan::eval {

/// Identical signals score 0 distance and +cap SNR; the cap doubles as the
/// finite sentinel for infinite SNR.
constexpr double kSnrCapDb = 120.0;
constexpr double kLogFloor = 1e-5;

struct ClipMetrics {
  std::string id;
  double mel_l1 = 0.0;
  double multires_stft_distance = 0.0;
  double snr_db = 0.0;
};

struct MetricReport {
  double mel_l1 = 0.0;                 // means over clips
  double multires_stft_distance = 0.0;
  double snr_db = 0.0;
  std::vector<ClipMetrics> clips;
};

// Distances use right-zero-extended (center=false) framing and cell sums, so
// silent padding appended to both signals leaves them exactly unchanged.

/// L1 between floored log-mel grids at the conditioning resolution.
double mel_l1(const Waveform& a, const Waveform& b, const model::ModelConfig& cfg);

/// Sum over windows {32..2048} (hop = window/4) of L1 between floored
/// log-magnitude STFTs.
double multires_stft_distance(const Waveform& a, const Waveform& b);

/// 10*log10(sum ref^2 / sum (ref-est)^2), clamped to [-cap, cap].
double snr_db(const Waveform& ref, const Waveform& est);

/// Samples every clip from per-clip seeded noise (paired across calls with
/// the same seed) and scores against ground truth. Uses the endpoint sampler,
/// or the velocity sampler for velocity-mode checkpoints.
MetricReport evaluate(const train::TrainState& state, const data::LoadedDataset& ds,
                      const flow::StepSchedule& schedule, uint64_t seed);

/// One report per step count over shared noise; differences reflect the
/// schedule only.
std::vector<std::pair<int, MetricReport>> step_sweep(const train::TrainState& state,
                                                     const data::LoadedDataset& ds,
                                                     const std::vector<int>& steps,
                                                     uint64_t seed);

struct AblationRow {
  flow::LossMode mode;
  MetricReport report;
};

/// Trains one fm model per mode under identical (seed, budget, data), scores
/// each at eval_steps on the dev set, and returns rows ranked best-first by
/// multires_stft_distance.
std::vector<AblationRow> ablation_matrix(const train::TrainConfig& base,
                                         const data::LoadedDataset& train_ds,
                                         const data::LoadedDataset& dev_ds,
                                         const std::vector<flow::LossMode>& modes,
                                         int64_t budget, int eval_steps, uint64_t eval_seed);

// Report rendering: aligned text tables and line-delimited JSON records.
std::string format_report(const MetricReport& r);
std::string format_sweep_table(const std::vector<std::pair<int, MetricReport>>& rows);
std::string format_ablation_table(const std::vector<AblationRow>& rows);
std::string report_jsonl(const std::string& label, const MetricReport& r);

/// 8-bit PGM of the floored log-magnitude spectrogram, low frequencies at
/// the bottom row.
void write_spectrogram_pgm(const std::string& path, const Waveform& x,
                           const dsp::SpectralConfig& cfg);

}  // namespace flow2gan::eval
