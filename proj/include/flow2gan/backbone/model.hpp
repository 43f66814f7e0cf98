// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "flow2gan/core/rng.hpp"
#include "flow2gan/core/types.hpp"
#include "flow2gan/dsp/spectral.hpp"
#include "flow2gan/nn/autodiff.hpp"
#include "flow2gan/nn/params.hpp"

namespace flow2gan::model {

enum class CondKind { mel, log_mel, generic };

CondKind parse_cond_kind(const std::string& s);
std::string to_string(CondKind kind);

struct BranchConfig {
  dsp::SpectralConfig spectral;
  int embed_dim = 0;
  int n_layers = 0;
  int ff_factor = 3;
  int kernel = 7;
};

/// Full architecture description. Also carries the feature-extraction and
/// loss-scaling spectral settings so a checkpoint is self-describing.
struct ModelConfig {
  std::vector<BranchConfig> branches;
  int cond_dim = 512;
  int cond_layers = 4;
  int cond_input_dim = 100;
  int time_dim = 512;
  CondKind cond_feature_kind = CondKind::log_mel;
  int sample_rate = 24000;
  dsp::SpectralConfig cond_spectral{1024, 256};  // conditioning mel analysis
  dsp::SpectralConfig scale_spectral{1024, 256}; // S(x) of the spectral loss
  int scale_filters = 256;
  std::string preset_name = "full";

  int largest_hop() const;
  int upsample_factor(size_t branch) const;
  void validate() const;

  static ModelConfig full_preset();
  static ModelConfig desk_preset();
  static ModelConfig micro_preset();
  static ModelConfig by_name(const std::string& name);
};

/// Registers every generator parameter (condition encoder, time embedding,
/// branches) under the "gen." prefix with the documented initialization.
void init_generator_params(const ModelConfig& cfg, nn::ParameterStore& store, Rng& rng);

/// g_theta(x_t, t | c): three STFT-domain ConvNeXt branches summed in the
/// waveform domain. Stateless over a ParameterStore.
class Generator {
 public:
  Generator(ModelConfig cfg, const nn::ParameterStore* store);

  /// Condition encoder: input projection + ConvNeXt stack at the condition
  /// frame rate. Run once per utterance; the output is reused across steps.
  ad::Value encode_condition(const Tensor& cond_features) const;

  /// xt is rank-1 [L], L divisible by the largest hop; cond_encoded from
  /// encode_condition with L / largest_hop frames.
  ad::Value forward(const ad::Value& xt, double t, const ad::Value& cond_encoded) const;

  /// Single branch, exposed for tests.
  ad::Value branch_forward(const ad::Value& xt, const ad::Value& cond_encoded,
                           const ad::Value& time_feat, size_t branch) const;

  /// Time embedding MLP over a sinusoidal ladder; output [1 x time_dim].
  ad::Value time_features(double t) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ad::Value convnext_block(const ad::Value& x, const std::string& prefix,
                           const ad::Value* time_feat, const ad::Value* cond_feat) const;

  ModelConfig cfg_;
  const nn::ParameterStore* store_;
};

/// Sinusoidal ladder embedding of t in [0,1]; frequencies span [1, 1000].
Tensor sinusoidal_embedding(double t, int dim);

}  // namespace flow2gan::model
