// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flow2gan/backbone/model.hpp"
#include "flow2gan/core/rng.hpp"
#include "flow2gan/data/data.hpp"
#include "flow2gan/flow/flow.hpp"
#include "flow2gan/gan/gan.hpp"
#include "flow2gan/nn/optim.hpp"
#include "flow2gan/nn/params.hpp"

namespace flow2gan::train {

enum class Stage { fm, gan };

Stage parse_stage(const std::string& s);
std::string to_string(Stage stage);

struct TrainConfig {
  Stage stage = Stage::fm;
  flow::LossMode loss_mode = flow::LossMode::endpoint_spectral;
  int n_steps = 1;  // gan stage: generation steps of the fine-tuned sampler
  int batch_size = 2;
  int64_t segment_length = 16384;
  double lr = 2e-4;
  double lr_d = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  int64_t max_iters = 1000;
  uint64_t seed = 0;
  bool noise_augment = false;
  double augment_coeff = 0.2;
  int64_t checkpoint_every = 0;  // 0 = final checkpoint only
  double grad_clip = 100.0;      // fm stage; <= 0 disables
  bool cosine_decay = true;
  std::string preset = "desk";
  std::string mel_kind;  // overrides the preset's condition kind when set
  std::string data_dir;
  std::string out_dir = ".";
  std::string init_from;  // gan stage: fm checkpoint path

  void validate() const;  // throws ConfigError
};

/// `key = value` lines, '#' comments, blank lines skipped. Later duplicates win.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

/// Applies one option by key name; unknown keys and unparsable values are
/// config errors. The CLI funnels both file entries and flag overrides here.
void apply_option(TrainConfig& cfg, const std::string& key, const std::string& value);
void apply_options(TrainConfig& cfg, const std::map<std::string, std::string>& kv);

/// Preset resolution plus the mel_kind override.
model::ModelConfig make_model_config(const TrainConfig& cfg);

/// One key = value line per option, parseable by parse_kv_text.
std::string describe_config(const TrainConfig& cfg);

struct TrainState {
  TrainConfig cfg;
  model::ModelConfig model_cfg;
  gan::DiscriminatorConfig disc_cfg;  // used in the gan stage only
  nn::ParameterStore store;
  std::unique_ptr<nn::AdamW> opt_g;
  std::unique_ptr<nn::AdamW> opt_d;  // null in the fm stage
  flow::LossSpec loss_spec;
  std::vector<gan::MelScale> mel_bank;  // gan stage reconstruction scales
  Rng rng{0};
  int64_t iteration = 0;
};

TrainState init_fm_state(const TrainConfig& cfg);

/// Stage handoff: generator parameters copied from the fm checkpoint
/// (bitwise), discriminators and both optimizers initialized fresh.
TrainState init_gan_state(const TrainConfig& cfg, const std::string& fm_checkpoint);

struct Batch {
  std::vector<Tensor> x1;    // rank-1 [segment_length] each
  std::vector<Tensor> cond;  // [segment_length / hop x cond_dim] each
};

Batch sample_batch(const data::LoadedDataset& ds, const TrainConfig& cfg, Rng& rng);

/// cond + coeff * u * eps with one u ~ U[0,1) per call and eps elementwise
/// standard normal; coeff <= 0 returns cond unchanged.
ConditionGrid augment_condition(const ConditionGrid& cond, double coeff, Rng& rng);
Tensor augment_condition(const Tensor& features, double coeff, Rng& rng);

/// One optimizer update on the flow-matching objective; returns the batch loss.
double fm_train_step(TrainState& state, const Batch& batch);

struct GanLossReport {
  double d_loss = 0.0;
  double adv = 0.0;
  double fm = 0.0;
  double mel = 0.0;
  double g_total = 0.0;
};

/// Discriminator update on (real, detached fake), then generator update on a
/// fresh fake against the updated discriminators.
GanLossReport gan_train_step(TrainState& state, const Batch& batch);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

/// Runs state.cfg.max_iters - state.iteration steps, appending one JSON line
/// per iteration to metrics_path (empty = no log) and checkpointing to
/// ckpt_path per checkpoint_every and at the end.
void train_loop(TrainState& state, const data::LoadedDataset& ds,
                const std::string& metrics_path, const std::string& ckpt_path);

}  // namespace flow2gan::train
