// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "flow2gan/backbone/model.hpp"
#include "flow2gan/core/errors.hpp"
#include "flow2gan/core/rng.hpp"
#include "flow2gan/data/data.hpp"
#include "flow2gan/dsp/fft.hpp"
#include "flow2gan/dsp/wav.hpp"

using namespace flow2gan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("flow2gan_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int64_t count_zeros(const std::vector<double>& v) {
  return std::count(v.begin(), v.end(), 0.0);
}

/// Longest run of exact zeros, in samples.
int64_t longest_zero_run(const std::vector<double>& v) {
  int64_t best = 0, run = 0;
  for (double x : v) {
    run = x == 0.0 ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

}  // namespace

TEST_CASE("synth_tone concentrates energy at the harmonic bins") {
  Rng rng(61);
  const int sr = 24000;
  const int n = 2048;
  const double f0 = 375.0;  // exactly bin 32 of a 2048-point DFT
  const auto tone = data::synth_tone(f0, 1, n, sr, 0.5, rng);
  REQUIRE(static_cast<int>(tone.size()) == n);

  const auto spec = dsp::rfft(tone);
  size_t peak = 0;
  for (size_t b = 1; b < spec.size(); ++b)
    if (std::abs(spec[b]) > std::abs(spec[peak])) peak = b;
  CHECK(peak == 32);

  double max_amp = 0.0;
  for (double v : tone) max_amp = std::max(max_amp, std::abs(v));
  CHECK(max_amp <= 0.5 + 1e-12);
  CHECK(max_amp > 0.1);
}

TEST_CASE("synth_tone drops harmonics at or above Nyquist") {
  Rng rng(62);
  const int sr = 24000;
  const int n = 2048;
  // Harmonics at 9 kHz (kept), 18 kHz and 27 kHz (dropped, not aliased).
  const double f0 = 9000.0;
  const auto tone = data::synth_tone(f0, 3, n, sr, 0.5, rng);
  const auto spec = dsp::rfft(tone);

  const auto bin = [&](double hz) { return static_cast<size_t>(hz / sr * n); };
  CHECK(std::abs(spec[bin(9000)]) > 10.0);
  // 18 kHz would fold onto 6 kHz if it leaked through.
  CHECK(std::abs(spec[bin(6000)]) < 1e-6);
}

TEST_CASE("toy clips meet the silence contract") {
  data::ToySpec spec;
  spec.sample_rate = 8000;
  spec.clip_seconds = 0.5;
  spec.align = 64;
  spec.min_silence_fraction = 0.2;

  for (uint64_t seed : {0ULL, 1ULL, 9ULL}) {
    Rng rng(seed);
    const Waveform w = data::synth_toy_clip(spec, rng);
    CHECK(w.sample_rate == 8000);
    CHECK(w.length() % spec.align == 0);
    CHECK(w.length() >= static_cast<int64_t>(spec.clip_seconds * spec.sample_rate));

    const int64_t zeros = count_zeros(w.samples);
    CHECK(zeros >= static_cast<int64_t>(std::ceil(0.2 * w.length())));
    CHECK(zeros < w.length());  // some audible content
    // At least one silent span of 100 ms (800 samples at 8 kHz).
    CHECK(longest_zero_run(w.samples) >= 800);
    // The opening is part of that span.
    for (int64_t i = 0; i < 800; ++i) CHECK(w.samples[i] == 0.0);

    double peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 0.95 + 1e-12);
  }
}

TEST_CASE("toy corpus generation is byte-identical across runs") {
  data::ToySpec spec;
  spec.n_clips = 3;
  spec.sample_rate = 8000;
  spec.clip_seconds = 0.3;
  spec.align = 64;
  spec.seed = 7;

  const fs::path a = temp_dir("corpus_a");
  const fs::path b = temp_dir("corpus_b");
  const data::DatasetManifest ma = data::synth_toy_corpus(spec, a.string());
  const data::DatasetManifest mb = data::synth_toy_corpus(spec, b.string());

  REQUIRE(ma.entries.size() == 3);
  REQUIRE(mb.entries.size() == 3);
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d.wav", i);
    CHECK(slurp(a / name) == slurp(b / name));
    // Returned entries resolve to absolute paths of existing files.
    CHECK(fs::path(ma.entries[i].path).is_absolute());
    CHECK(fs::exists(ma.entries[i].path));
    const Waveform w = dsp::read_wav(ma.entries[i].path);
    CHECK(w.length() == ma.entries[i].duration);
    CHECK(w.sample_rate == ma.entries[i].sample_rate);
  }
  CHECK(slurp(a / "manifest.tsv") == slurp(b / "manifest.tsv"));

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("manifest round-trips and resolves relative paths") {
  const fs::path dir = temp_dir("manifest");
  data::DatasetManifest m;
  m.entries.push_back({"sub/x.wav", 1234, 24000});
  m.entries.push_back({"/abs/y.wav", 8, 8000});
  const std::string path = (dir / "m.tsv").string();
  data::write_manifest(path, m);

  const data::DatasetManifest r = data::read_manifest(path);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].path == (dir / "sub/x.wav").string());
  CHECK(r.entries[0].duration == 1234);
  CHECK(r.entries[0].sample_rate == 24000);
  CHECK(r.entries[1].path == "/abs/y.wav");

  CHECK_THROWS_AS(data::read_manifest((dir / "missing.tsv").string()), IoError);
  {
    std::ofstream bad(dir / "bad.tsv");
    bad << "only_a_path\n";
  }
  CHECK_THROWS_AS(data::read_manifest((dir / "bad.tsv").string()), IoError);
  {
    std::ofstream bad(dir / "bad2.tsv");
    bad << "x.wav\tnotanumber\t24000\n";
  }
  CHECK_THROWS_AS(data::read_manifest((dir / "bad2.tsv").string()), IoError);
  {
    std::ofstream bad(dir / "bad3.tsv");
    bad << "x.wav\t-5\t24000\n";
  }
  CHECK_THROWS_AS(data::read_manifest((dir / "bad3.tsv").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("split keeps order, puts the tail in dev, and never empties a side") {
  data::DatasetManifest m;
  for (int i = 0; i < 10; ++i)
    m.entries.push_back({"c" + std::to_string(i) + ".wav", 100, 8000});

  const auto [train, dev] = data::split_manifest(m, 0.25);
  CHECK(train.entries.size() + dev.entries.size() == 10);
  CHECK(dev.entries.size() == 3);  // round(2.5) away from zero
  CHECK(train.entries.front().path == m.entries.front().path);
  CHECK(dev.entries.back().path == m.entries.back().path);
  CHECK(dev.entries.front().path == m.entries[7].path);
  CHECK(train.split == data::DatasetManifest::Split::train);
  CHECK(dev.split == data::DatasetManifest::Split::dev);

  const auto [t0, d0] = data::split_manifest(m, 0.0);
  CHECK(d0.entries.size() == 1);
  const auto [t1, d1] = data::split_manifest(m, 1.0);
  CHECK(t1.entries.size() == 1);

  data::DatasetManifest one;
  one.entries.push_back(m.entries[0]);
  const auto [ts, ds] = data::split_manifest(one, 0.25);
  CHECK(ts.entries.size() == 1);
  CHECK(ds.entries.size() == 1);

  data::DatasetManifest empty;
  CHECK_THROWS_AS(data::split_manifest(empty, 0.25), InputError);
  CHECK_THROWS_AS(data::split_manifest(m, 1.5), ConfigError);
}

TEST_CASE("right padding reaches the next multiple with exact zeros") {
  Waveform w;
  w.sample_rate = 8000;
  w.samples.assign(100, 0.5);
  const Waveform p = data::pad_to_multiple(w, 64);
  REQUIRE(p.length() == 128);
  for (int i = 0; i < 100; ++i) CHECK(p.samples[i] == 0.5);
  for (int i = 100; i < 128; ++i) CHECK(p.samples[i] == 0.0);
  CHECK(data::pad_to_multiple(p, 64).length() == 128);
  CHECK_THROWS_AS(data::pad_to_multiple(w, 0), ConfigError);
}

TEST_CASE("condition extraction follows the preset feature kind") {
  const model::ModelConfig micro = model::ModelConfig::micro_preset();  // plain mel
  Rng rng(63);
  Waveform w;
  w.sample_rate = micro.sample_rate;
  w.samples.resize(320);
  for (auto& v : w.samples) v = 0.3 * rng.uniform(-1.0, 1.0);

  const ConditionGrid grid = data::extract_condition(w, micro);
  CHECK(grid.hop == micro.cond_spectral.hop);
  CHECK(grid.frames() == 320 / micro.cond_spectral.hop);
  CHECK(grid.dim() == micro.cond_input_dim);
  for (double v : grid.features.data) CHECK(v >= 0.0);  // power, not log

  // Log-mel floors exact silence at log(1e-5).
  model::ModelConfig logged = micro;
  logged.cond_feature_kind = model::CondKind::log_mel;
  Waveform silent;
  silent.sample_rate = logged.sample_rate;
  silent.samples.assign(320, 0.0);
  const ConditionGrid lg = data::extract_condition(silent, logged);
  for (double v : lg.features.data) CHECK(v == doctest::Approx(std::log(1e-5)).epsilon(1e-12));

  model::ModelConfig generic = micro;
  generic.cond_feature_kind = model::CondKind::generic;
  CHECK_THROWS_AS(data::extract_condition(w, generic), ConfigError);

  w.samples.resize(321);
  CHECK_THROWS_AS(data::extract_condition(w, micro), InputError);
}

TEST_CASE("crops are hop-aligned and interior frames match a fresh extraction") {
  const model::ModelConfig micro = model::ModelConfig::micro_preset();
  const int hop = micro.cond_spectral.hop;
  Rng rng(64);

  Waveform w;
  w.sample_rate = micro.sample_rate;
  w.samples.resize(20 * hop);
  for (auto& v : w.samples) v = 0.4 * rng.uniform(-1.0, 1.0);
  const ConditionGrid cond = data::extract_condition(w, micro);

  Rng crop_rng(65);
  for (int trial = 0; trial < 8; ++trial) {
    const auto [seg, seg_cond] = data::crop_pair(w, cond, 10 * hop, crop_rng);
    REQUIRE(seg.length() == 10 * hop);
    REQUIRE(seg_cond.frames() == 10);
    REQUIRE(seg_cond.hop == hop);

    // Locate the crop by matching its first condition row, then verify the
    // samples are the aligned slice starting there.
    int64_t s = -1;
    for (int64_t r = 0; r + 10 <= cond.frames(); ++r) {
      bool match = true;
      for (int64_t c = 0; c < cond.dim() && match; ++c)
        match = cond.features.at(r, c) == seg_cond.features.at(0, c);
      if (match) {
        s = r;
        break;
      }
    }
    REQUIRE(s >= 0);
    for (int64_t i = 0; i < seg.length(); ++i)
      CHECK(seg.samples[i] == w.samples[s * hop + i]);
    for (int64_t r = 0; r < 10; ++r)
      for (int64_t c = 0; c < cond.dim(); ++c)
        CHECK(seg_cond.features.at(r, c) == cond.features.at(s + r, c));

    // Re-extracting on the crop alone reproduces every frame whose analysis
    // window lies inside the segment; only frame 0 sees different context.
    const ConditionGrid fresh = data::extract_condition(seg, micro);
    for (int64_t r = 1; r < 10; ++r)
      for (int64_t c = 0; c < cond.dim(); ++c)
        CHECK(fresh.features.at(r, c) == seg_cond.features.at(r, c));
  }

  Rng err_rng(66);
  CHECK_THROWS_AS(data::crop_pair(w, cond, 10 * hop + 1, err_rng), InputError);
  CHECK_THROWS_AS(data::crop_pair(w, cond, 32 * hop, err_rng), InputError);
  ConditionGrid bad = cond;
  bad.features = Tensor::zeros({5, cond.dim()});
  CHECK_THROWS_AS(data::crop_pair(w, bad, 10 * hop, err_rng), InputError);
}

TEST_CASE("datasets load with matching conditioning and ids") {
  const model::ModelConfig micro = model::ModelConfig::micro_preset();
  data::ToySpec spec;
  spec.n_clips = 2;
  spec.sample_rate = micro.sample_rate;
  spec.clip_seconds = 0.4;
  spec.align = micro.cond_spectral.hop;
  spec.seed = 3;

  const fs::path dir = temp_dir("load");
  const data::DatasetManifest m = data::synth_toy_corpus(spec, dir.string());
  const data::LoadedDataset ds = data::load_dataset(m, micro);
  REQUIRE(ds.waves.size() == 2);
  REQUIRE(ds.conds.size() == 2);
  REQUIRE(ds.ids.size() == 2);
  CHECK(ds.ids[0] == "clip_0000.wav");
  CHECK(ds.ids[1] == "clip_0001.wav");
  for (size_t i = 0; i < ds.waves.size(); ++i) {
    CHECK(ds.waves[i].length() % micro.cond_spectral.hop == 0);
    CHECK(ds.conds[i].frames() * ds.conds[i].hop == ds.waves[i].length());
    CHECK(ds.conds[i].dim() == micro.cond_input_dim);
  }

  model::ModelConfig wrong_rate = micro;
  wrong_rate.sample_rate = 48000;
  CHECK_THROWS_AS(data::load_dataset(m, wrong_rate), InputError);
  fs::remove_all(dir);
}
