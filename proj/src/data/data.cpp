// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/data/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "flow2gan/core/errors.hpp"
#include "flow2gan/dsp/filterbank.hpp"
#include "flow2gan/dsp/wav.hpp"

namespace flow2gan::data {
namespace {

namespace fs = std::filesystem;

constexpr double kCondLogFloor = 1e-5;
constexpr double kPeakCeiling = 0.95;
constexpr double kFadeMs = 5.0;

int64_t ms_to_samples(double ms, int sample_rate) {
  return static_cast<int64_t>(std::llround(ms * 1e-3 * sample_rate));
}

/// Raised-cosine fade over the first and last fade_len samples of the event.
void apply_fades(std::vector<double>& event, int64_t fade_len) {
  const int64_t n = static_cast<int64_t>(event.size());
  fade_len = std::min(fade_len, n / 2);
  for (int64_t i = 0; i < fade_len; ++i) {
    const double w =
        0.5 * (1.0 - std::cos(std::numbers::pi * (i + 1) / (fade_len + 1)));
    event[i] *= w;
    event[n - 1 - i] *= w;
  }
}

void validate_spec(const ToySpec& spec) {
  if (spec.n_clips < 1) throw ConfigError("toy corpus needs n_clips >= 1");
  if (spec.sample_rate <= 0) throw ConfigError("toy corpus needs a positive sample rate");
  if (spec.clip_seconds <= 0.0) throw ConfigError("toy corpus needs positive clip_seconds");
  if (spec.align < 1) throw ConfigError("toy corpus alignment must be >= 1");
  if (spec.min_silence_fraction < 0.0 || spec.min_silence_fraction > 0.9)
    throw ConfigError("min_silence_fraction must lie in [0, 0.9]");
}

}  // namespace

std::vector<double> synth_tone(double f0, int n_harmonics, int64_t length,
                               int sample_rate, double amp, Rng& rng) {
  std::vector<double> weights(static_cast<size_t>(n_harmonics));
  std::vector<double> phases(static_cast<size_t>(n_harmonics));
  double total = 0.0;
  for (int h = 0; h < n_harmonics; ++h) {
    weights[h] = rng.uniform(0.5, 1.0) / (h + 1);
    phases[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if ((h + 1) * f0 >= 0.5 * sample_rate) weights[h] = 0.0;
    total += weights[h];
  }
  if (total <= 0.0) total = 1.0;

  std::vector<double> out(static_cast<size_t>(length), 0.0);
  for (int h = 0; h < n_harmonics; ++h) {
    if (weights[h] == 0.0) continue;
    const double a = amp * weights[h] / total;
    const double omega = 2.0 * std::numbers::pi * (h + 1) * f0 / sample_rate;
    for (int64_t i = 0; i < length; ++i)
      out[i] += a * std::sin(omega * i + phases[h]);
  }
  return out;
}

Waveform synth_toy_clip(const ToySpec& spec, Rng& rng) {
  validate_spec(spec);
  const int sr = spec.sample_rate;
  int64_t length = static_cast<int64_t>(std::ceil(spec.clip_seconds * sr));
  length += (spec.align - length % spec.align) % spec.align;

  Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<size_t>(length), 0.0);

  const int64_t fade = ms_to_samples(kFadeMs, sr);
  // Leading silence >= 100 ms guarantees the long exact-zero span.
  int64_t pos = ms_to_samples(rng.uniform(100.0, 200.0), sr);
  while (pos < length) {
    int64_t dur = ms_to_samples(rng.uniform(80.0, 250.0), sr);
    dur = std::min(dur, length - pos);
    if (dur < 2 * fade + 8) break;

    std::vector<double> event;
    if (rng.uniform() < 0.7) {
      const double f0 = rng.uniform(80.0, 400.0);
      const int harmonics = 1 + static_cast<int>(rng.uniform_int(5));
      const double amp = rng.uniform(0.15, 0.8);
      event = synth_tone(f0, harmonics, dur, sr, amp, rng);
    } else {
      const double amp = rng.uniform(0.05, 0.25);
      event.resize(static_cast<size_t>(dur));
      for (auto& v : event) v = amp * rng.gaussian();
    }
    apply_fades(event, fade);
    std::copy(event.begin(), event.end(), w.samples.begin() + pos);
    pos += dur;
    pos += ms_to_samples(rng.uniform(60.0, 200.0), sr);
  }

  // Enforce the silence budget exactly; zeroing the tail keeps determinism.
  const auto target =
      static_cast<int64_t>(std::ceil(spec.min_silence_fraction * length));
  int64_t zeros = std::count(w.samples.begin(), w.samples.end(), 0.0);
  if (zeros < target) {
    for (int64_t i = length - (target - zeros); i < length; ++i) w.samples[i] = 0.0;
  }

  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > kPeakCeiling) {
    const double s = kPeakCeiling / peak;
    for (auto& v : w.samples) v *= s;
  }
  return w;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  for (const auto& e : m.entries)
    out << e.path << '\t' << e.duration << '\t' << e.sample_rate << '\n';
  if (!out) throw IoError("failed writing manifest: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string duration, rate;
    if (!std::getline(ls, e.path, '\t') || !std::getline(ls, duration, '\t') ||
        !std::getline(ls, rate))
      throw IoError("malformed manifest line " + std::to_string(lineno) + " in " + path);
    try {
      e.duration = std::stoll(duration);
      e.sample_rate = std::stoi(rate);
    } catch (const std::exception&) {
      throw IoError("malformed manifest line " + std::to_string(lineno) + " in " + path);
    }
    if (e.path.empty() || e.duration <= 0 || e.sample_rate <= 0)
      throw IoError("invalid manifest entry at line " + std::to_string(lineno) + " in " + path);
    fs::path p(e.path);
    if (p.is_relative()) e.path = (base / p).string();
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest synth_toy_corpus(const ToySpec& spec, const std::string& out_dir) {
  validate_spec(spec);
  fs::create_directories(out_dir);
  Rng rng(spec.seed);

  DatasetManifest local;  // relative paths, as stored on disk
  for (int i = 0; i < spec.n_clips; ++i) {
    const Waveform clip = synth_toy_clip(spec, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d.wav", i);
    dsp::write_wav_float32((fs::path(out_dir) / name).string(), clip);
    local.entries.push_back({name, clip.length(), clip.sample_rate});
  }
  const std::string manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
  write_manifest(manifest_path, local);
  return read_manifest(manifest_path);
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& m,
                                                           double dev_fraction) {
  if (m.entries.empty()) throw InputError("cannot split an empty manifest");
  if (dev_fraction < 0.0 || dev_fraction > 1.0)
    throw ConfigError("dev_fraction must lie in [0, 1]");
  DatasetManifest train, dev;
  train.split = DatasetManifest::Split::train;
  dev.split = DatasetManifest::Split::dev;
  const auto n = static_cast<int64_t>(m.entries.size());
  if (n == 1) {
    train.entries = m.entries;
    dev.entries = m.entries;
    return {train, dev};
  }
  int64_t n_dev = static_cast<int64_t>(std::llround(dev_fraction * n));
  n_dev = std::clamp<int64_t>(n_dev, 1, n - 1);
  train.entries.assign(m.entries.begin(), m.entries.end() - n_dev);
  dev.entries.assign(m.entries.end() - n_dev, m.entries.end());
  return {train, dev};
}

Waveform pad_to_multiple(const Waveform& w, int align) {
  if (align < 1) throw ConfigError("pad alignment must be >= 1");
  Waveform out = w;
  const int64_t rem = out.length() % align;
  if (rem != 0) out.samples.resize(out.samples.size() + (align - rem), 0.0);
  return out;
}

ConditionGrid extract_condition(const Waveform& wave, const model::ModelConfig& cfg) {
  if (cfg.cond_feature_kind == model::CondKind::generic)
    throw ConfigError("generic conditioning features must be supplied externally");
  const int hop = cfg.cond_spectral.hop;
  if (wave.length() % hop != 0)
    throw InputError("waveform length must be divisible by the condition hop");
  const auto fb = dsp::make_filterbank(dsp::FilterbankKind::mel, cfg.cond_input_dim,
                                       cfg.cond_spectral.n_fft, cfg.sample_rate);
  const bool log_scale = cfg.cond_feature_kind == model::CondKind::log_mel;
  return dsp::mel_spectrogram(wave, cfg.cond_spectral, fb, log_scale, kCondLogFloor);
}

std::pair<Waveform, ConditionGrid> crop_pair(const Waveform& wave,
                                             const ConditionGrid& cond,
                                             int64_t segment_length, Rng& rng) {
  const int hop = cond.hop;
  if (segment_length <= 0 || segment_length % hop != 0)
    throw InputError("segment length must be a positive multiple of the condition hop");
  if (wave.length() < segment_length)
    throw InputError("clip shorter than the requested segment");
  if (cond.frames() * hop != wave.length())
    throw InputError("condition grid misaligned with its waveform");

  const int64_t max_start = (wave.length() - segment_length) / hop;
  const int64_t s = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(max_start + 1)));

  Waveform seg;
  seg.sample_rate = wave.sample_rate;
  seg.samples.assign(wave.samples.begin() + s * hop,
                     wave.samples.begin() + s * hop + segment_length);

  const int64_t f = segment_length / hop;
  ConditionGrid out;
  out.hop = hop;
  out.features = Tensor::zeros({f, cond.dim()});
  std::copy(cond.features.data.begin() + s * cond.dim(),
            cond.features.data.begin() + (s + f) * cond.dim(),
            out.features.data.begin());
  return {std::move(seg), std::move(out)};
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const model::ModelConfig& cfg) {
  LoadedDataset ds;
  const int hop = cfg.cond_spectral.hop;
  for (const auto& e : manifest.entries) {
    Waveform w = dsp::read_wav(e.path);
    if (w.sample_rate != cfg.sample_rate)
      throw InputError("sample rate mismatch for " + e.path + ": expected " +
                       std::to_string(cfg.sample_rate) + ", got " +
                       std::to_string(w.sample_rate));
    w = pad_to_multiple(w, hop);
    ds.conds.push_back(extract_condition(w, cfg));
    ds.waves.push_back(std::move(w));
    ds.ids.push_back(fs::path(e.path).filename().string());
  }
  return ds;
}

}  // namespace flow2gan::data
