// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flow2gan/backbone/model.hpp"
#include "flow2gan/core/rng.hpp"
#include "flow2gan/core/types.hpp"

namespace flow2gan::data {

struct ManifestEntry {
  std::string path;
  int64_t duration = 0;  // samples
  int sample_rate = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  enum class Split { train, dev } split = Split::train;
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

/// Synthetic corpus: harmonic tones and noise bursts separated by exact-zero
/// silences. Every clip carries at least one silent span >= 100 ms and at
/// least min_silence_fraction exact zeros, the pathology the spectral loss
/// scaling targets.
struct ToySpec {
  int n_clips = 16;
  double clip_seconds = 1.0;
  int sample_rate = 24000;
  double min_silence_fraction = 0.2;
  uint64_t seed = 0;
  int align = 256;  // clip length is rounded up to a multiple of this
};

/// Harmonic tone with random per-harmonic amplitude decay and phase.
std::vector<double> synth_tone(double f0, int n_harmonics, int64_t length,
                               int sample_rate, double amp, Rng& rng);

Waveform synth_toy_clip(const ToySpec& spec, Rng& rng);

/// Writes clip_####.wav files plus manifest.tsv under out_dir; deterministic
/// given spec.seed (byte-identical across runs).
DatasetManifest synth_toy_corpus(const ToySpec& spec, const std::string& out_dir);

/// First (1 - dev_fraction) clips for training, the rest for dev; at least
/// one clip lands in each split.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& m,
                                                           double dev_fraction);

/// Zero-pads on the right so length is a multiple of align.
Waveform pad_to_multiple(const Waveform& w, int align);

/// Conditioning features at the model's condition resolution: mel or log-mel
/// per cfg.cond_feature_kind (generic conditioning must be supplied by the
/// caller and is a config error here). Frame count = length / hop.
ConditionGrid extract_condition(const Waveform& wave, const model::ModelConfig& cfg);

/// Aligned random crop: waveform [s*hop, s*hop + segment) with condition
/// frames [s, s + segment/hop).
std::pair<Waveform, ConditionGrid> crop_pair(const Waveform& wave,
                                             const ConditionGrid& cond,
                                             int64_t segment_length, Rng& rng);

/// In-memory dataset with per-clip precomputed conditioning.
struct LoadedDataset {
  std::vector<Waveform> waves;
  std::vector<ConditionGrid> conds;
  std::vector<std::string> ids;  // clip file names, for reports
};

LoadedDataset load_dataset(const DatasetManifest& manifest, const model::ModelConfig& cfg);

}  // namespace flow2gan::data
