// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "flow2gan/backbone/model.hpp"
#include "flow2gan/core/rng.hpp"
#include "flow2gan/dsp/filterbank.hpp"
#include "flow2gan/flow/flow.hpp"
#include "flow2gan/nn/autodiff.hpp"
#include "flow2gan/nn/params.hpp"

namespace flow2gan::gan {

/// Discriminator bank description: one sub-discriminator per MPD period and
/// per MRD resolution. channels lists the width after each strided conv.
struct DiscriminatorConfig {
  std::vector<int> mpd_periods{2, 3, 5, 7, 11};
  std::vector<int> mpd_channels{32, 128, 512, 1024};
  int mpd_kernel = 5;
  int mpd_stride = 3;
  std::vector<dsp::SpectralConfig> mrd_resolutions;
  std::vector<int> mrd_channels{32, 32, 32, 32};
  double leaky_slope = 0.1;

  int n_sub() const {
    return static_cast<int>(mpd_periods.size() + mrd_resolutions.size());
  }

  static DiscriminatorConfig full_preset();
  static DiscriminatorConfig desk_preset();
  static DiscriminatorConfig micro_preset();
  static DiscriminatorConfig by_name(const std::string& name);
};

/// Registers all discriminator parameters under the "disc." prefix. Score
/// heads start at zero so every sub-discriminator outputs 0 before training.
void init_discriminator_params(const DiscriminatorConfig& cfg, nn::ParameterStore& store,
                               Rng& rng);

/// Score map plus the ordered intermediate activations of one sub-discriminator.
struct SubOutput {
  ad::Value score;
  std::vector<ad::Value> features;
};

class DiscriminatorBank {
 public:
  DiscriminatorBank(DiscriminatorConfig cfg, const nn::ParameterStore* store);

  /// MPD sub-discriminators in period order, then MRD in resolution order.
  std::vector<SubOutput> forward(const ad::Value& x) const;

  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  SubOutput mpd_forward(const ad::Value& x, size_t index) const;
  SubOutput mrd_forward(const ad::Value& x, size_t index) const;

  DiscriminatorConfig cfg_;
  const nn::ParameterStore* store_;
};

// Hinge objectives, summed over sub-discriminators, mean over score cells.
ad::Value hinge_d_loss(const std::vector<SubOutput>& real,
                       const std::vector<SubOutput>& fake);
ad::Value hinge_g_loss(const std::vector<SubOutput>& fake);

/// Mean over sub-discriminators and layers of mean |f_real - f_fake|.
/// Real features are detached; only the fake path carries gradients.
ad::Value feature_matching_loss(const std::vector<SubOutput>& real,
                                const std::vector<SubOutput>& fake);

/// One mel comparison scale of the multi-scale reconstruction loss.
struct MelScale {
  dsp::SpectralConfig spectral;
  dsp::FilterbankMatrix fb;
};

/// Windows {32..2048}, hop = window/4, mel bins {5,10,20,40,80,160,320}.
std::vector<MelScale> multiscale_mel_bank(int sample_rate);

/// Sum over scales of mean |log-mel(x_hat) - log-mel(x)|.
ad::Value multiscale_mel_loss(const ad::Value& x_hat, const Tensor& x,
                              const std::vector<MelScale>& bank, double log_floor);

struct GanLossWeights {
  double w_adv = 1.0;
  double w_fm = 2.0;
  double w_mel = 45.0;
};

ad::Value gan_generator_loss(const GanLossWeights& w, const ad::Value& adv,
                             const ad::Value& fm, const ad::Value& mel);

/// The base generator unrolled through a fixed endpoint-Euler schedule.
struct NStepGenerator {
  const model::Generator* generator = nullptr;
  flow::StepSchedule schedule;
};

/// Differentiable through all unrolled steps when gradients are enabled.
ad::Value n_step_generate(const NStepGenerator& gen, const ad::Value& x0,
                          const ad::Value& cond_encoded);

}  // namespace flow2gan::gan
