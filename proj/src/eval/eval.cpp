// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flow2gan/core/errors.hpp"
#include "flow2gan/dsp/filterbank.hpp"
#include "flow2gan/dsp/spectral.hpp"

namespace flow2gan::eval {
namespace {

/// Per-clip noise seed: a splitmix64 scramble of (seed, index) so clip
/// streams are decorrelated but paired across step counts.
uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void require_comparable(const Waveform& a, const Waveform& b) {
  if (a.length() != b.length())
    throw InputError("metric inputs must share length: " + std::to_string(a.length()) +
                     " vs " + std::to_string(b.length()));
  if (a.sample_rate != b.sample_rate)
    throw InputError("metric inputs must share sample rate");
}

Tensor log_magnitude_grid(const Waveform& x, dsp::SpectralConfig cfg) {
  cfg.center = false;
  const dsp::ComplexSpectrogram spec = dsp::stft(x, cfg);
  Tensor out = Tensor::zeros({spec.frames, spec.bins()});
  for (size_t i = 0; i < spec.data.size(); ++i)
    out.data[i] = std::log(std::max(std::abs(spec.data[i]), kLogFloor));
  return out;
}

double l1_sum(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
  return acc;
}

}  // namespace

double mel_l1(const Waveform& a, const Waveform& b, const model::ModelConfig& cfg) {
  require_comparable(a, b);
  dsp::SpectralConfig sc = cfg.cond_spectral;
  sc.center = false;
  const auto fb = dsp::make_filterbank(dsp::FilterbankKind::mel, cfg.cond_input_dim,
                                       sc.n_fft, cfg.sample_rate);
  const ConditionGrid ga = dsp::mel_spectrogram(a, sc, fb, true, kLogFloor);
  const ConditionGrid gb = dsp::mel_spectrogram(b, sc, fb, true, kLogFloor);
  return l1_sum(ga.features, gb.features);
}

double multires_stft_distance(const Waveform& a, const Waveform& b) {
  require_comparable(a, b);
  double total = 0.0;
  for (int win = 32; win <= 2048; win *= 2) {
    dsp::SpectralConfig cfg;
    cfg.n_fft = win;
    cfg.hop = win / 4;
    total += l1_sum(log_magnitude_grid(a, cfg), log_magnitude_grid(b, cfg));
  }
  return total;
}

double snr_db(const Waveform& ref, const Waveform& est) {
  require_comparable(ref, est);
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < ref.length(); ++i) {
    num += ref.samples[i] * ref.samples[i];
    const double e = ref.samples[i] - est.samples[i];
    den += e * e;
  }
  if (den == 0.0) return kSnrCapDb;
  if (num == 0.0) return -kSnrCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kSnrCapDb, kSnrCapDb);
}

MetricReport evaluate(const train::TrainState& state, const data::LoadedDataset& ds,
                      const flow::StepSchedule& schedule, uint64_t seed) {
  if (ds.waves.empty()) throw InputError("evaluation dataset is empty");
  schedule.validate();
  const model::Generator gen(state.model_cfg, &state.store);
  const bool velocity_field = state.cfg.loss_mode == flow::LossMode::velocity;

  MetricReport rep;
  for (size_t i = 0; i < ds.waves.size(); ++i) {
    const Waveform& ref = ds.waves[i];
    Rng rng(mix_seed(seed, i));
    Tensor x0 = Tensor::zeros({ref.length()});
    for (auto& v : x0.data) v = rng.gaussian();

    ad::NoGradGuard no_grad;
    const ad::Value cond_enc = gen.encode_condition(ds.conds[i].features);
    const flow::ModelFn fn = [&](const ad::Value& x, double t) {
      return gen.forward(x, t, cond_enc);
    };
    const ad::Value y = velocity_field
                            ? flow::euler_sample_velocity(fn, ad::Value::constant(x0), schedule)
                            : flow::euler_sample_endpoint(fn, ad::Value::constant(x0), schedule);
    Waveform est;
    est.sample_rate = ref.sample_rate;
    est.samples = y.val().data;

    ClipMetrics cm;
    cm.id = i < ds.ids.size() ? ds.ids[i] : std::to_string(i);
    cm.mel_l1 = mel_l1(ref, est, state.model_cfg);
    cm.multires_stft_distance = multires_stft_distance(ref, est);
    cm.snr_db = snr_db(ref, est);
    rep.mel_l1 += cm.mel_l1;
    rep.multires_stft_distance += cm.multires_stft_distance;
    rep.snr_db += cm.snr_db;
    rep.clips.push_back(std::move(cm));
  }
  const auto n = static_cast<double>(rep.clips.size());
  rep.mel_l1 /= n;
  rep.multires_stft_distance /= n;
  rep.snr_db /= n;
  return rep;
}

std::vector<std::pair<int, MetricReport>> step_sweep(const train::TrainState& state,
                                                     const data::LoadedDataset& ds,
                                                     const std::vector<int>& steps,
                                                     uint64_t seed) {
  if (steps.empty()) throw InputError("step_sweep needs at least one step count");
  std::vector<std::pair<int, MetricReport>> rows;
  for (const int n : steps)
    rows.emplace_back(n, evaluate(state, ds, flow::uniform_schedule(n), seed));
  return rows;
}

std::vector<AblationRow> ablation_matrix(const train::TrainConfig& base,
                                         const data::LoadedDataset& train_ds,
                                         const data::LoadedDataset& dev_ds,
                                         const std::vector<flow::LossMode>& modes,
                                         int64_t budget, int eval_steps, uint64_t eval_seed) {
  if (modes.empty()) throw InputError("ablation needs at least one loss mode");
  if (eval_steps < 1) throw ConfigError("eval_steps must be >= 1");

  std::vector<AblationRow> rows;
  for (const auto mode : modes) {
    train::TrainConfig cfg = base;
    cfg.stage = train::Stage::fm;
    cfg.loss_mode = mode;
    cfg.max_iters = budget;
    train::TrainState st = train::init_fm_state(cfg);
    train::train_loop(st, train_ds, "", "");
    rows.push_back({mode, evaluate(st, dev_ds, flow::uniform_schedule(eval_steps), eval_seed)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const AblationRow& a, const AblationRow& b) {
    return a.report.multires_stft_distance < b.report.multires_stft_distance;
  });
  return rows;
}

std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "mean: mel_l1=%.6f multires_stft=%.6f snr_db=%.2f\n",
                r.mel_l1, r.multires_stft_distance, r.snr_db);
  os << buf;
  for (const auto& c : r.clips) {
    std::snprintf(buf, sizeof(buf), "  %-20s mel_l1=%.6f multires_stft=%.6f snr_db=%.2f\n",
                  c.id.c_str(), c.mel_l1, c.multires_stft_distance, c.snr_db);
    os << buf;
  }
  return os.str();
}

std::string format_sweep_table(const std::vector<std::pair<int, MetricReport>>& rows) {
  std::ostringstream os;
  os << "steps        mel_l1  multires_stft    snr_db\n";
  char buf[120];
  for (const auto& [n, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%5d  %12.6f  %13.6f  %8.2f\n", n, r.mel_l1,
                  r.multires_stft_distance, r.snr_db);
    os << buf;
  }
  return os.str();
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "rank  loss_mode                mel_l1  multires_stft    snr_db\n";
  char buf[160];
  for (size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%4zu  %-18s %12.6f  %13.6f  %8.2f\n", i + 1,
                  flow::to_string(rows[i].mode).c_str(), rows[i].report.mel_l1,
                  rows[i].report.multires_stft_distance, rows[i].report.snr_db);
    os << buf;
  }
  return os.str();
}

std::string report_jsonl(const std::string& label, const MetricReport& r) {
  nlohmann::ordered_json j;
  j["label"] = label;
  j["mel_l1"] = r.mel_l1;
  j["multires_stft_distance"] = r.multires_stft_distance;
  j["snr_db"] = r.snr_db;
  nlohmann::ordered_json clips = nlohmann::ordered_json::array();
  for (const auto& c : r.clips)
    clips.push_back(nlohmann::ordered_json{{"id", c.id},
                                           {"mel_l1", c.mel_l1},
                                           {"multires_stft_distance", c.multires_stft_distance},
                                           {"snr_db", c.snr_db}});
  j["clips"] = clips;
  return j.dump();
}

void write_spectrogram_pgm(const std::string& path, const Waveform& x,
                           const dsp::SpectralConfig& cfg) {
  Tensor grid = log_magnitude_grid(x, cfg);
  const int64_t frames = grid.shape[0];
  const int64_t bins = grid.shape[1];
  double lo = grid.data[0], hi = grid.data[0];
  for (const double v : grid.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi > lo ? hi - lo : 1.0;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open image for writing: " + path);
  out << "P5\n" << frames << " " << bins << "\n255\n";
  // Top image row = highest frequency bin.
  std::vector<unsigned char> row(static_cast<size_t>(frames));
  for (int64_t b = bins - 1; b >= 0; --b) {
    for (int64_t f = 0; f < frames; ++f) {
      const double v = (grid.at(f, b) - lo) / span;
      row[static_cast<size_t>(f)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("failed writing image: " + path);
}

}  // namespace flow2gan::eval
