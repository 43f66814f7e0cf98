// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/gan/gan.hpp"

#include <algorithm>
#include <string>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::gan {

DiscriminatorConfig DiscriminatorConfig::full_preset() {
  DiscriminatorConfig c;
  c.mpd_periods = {2, 3, 5, 7, 11};
  c.mpd_channels = {32, 128, 512, 1024};
  c.mrd_resolutions = {{512, 128}, {1024, 256}, {2048, 512}};
  c.mrd_channels = {32, 32, 32, 32};
  return c;
}

DiscriminatorConfig DiscriminatorConfig::desk_preset() {
  DiscriminatorConfig c;
  c.mpd_periods = {2, 3, 5, 7, 11};
  c.mpd_channels = {8, 16, 32};
  c.mrd_resolutions = {{128, 32}, {256, 64}, {512, 128}};
  c.mrd_channels = {8, 16, 32};
  return c;
}

DiscriminatorConfig DiscriminatorConfig::micro_preset() {
  DiscriminatorConfig c;
  c.mpd_periods = {2, 3};
  c.mpd_channels = {4, 8};
  c.mrd_resolutions = {{16, 4}, {32, 8}};
  c.mrd_channels = {4, 8};
  return c;
}

DiscriminatorConfig DiscriminatorConfig::by_name(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset();
  if (name == "micro") return micro_preset();
  throw ConfigError("unknown discriminator preset: " + name);
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kMagEps = 1e-12;

void init_conv(nn::ParameterStore& s, const std::string& name, int out_ch, int in_ch,
               int kh, int kw, Rng& rng, bool zero) {
  if (zero)
    s.create_zeros(name + ".w", {out_ch, in_ch, kh, kw});
  else
    s.create_trunc_normal(name + ".w", {out_ch, in_ch, kh, kw}, rng, kInitStd);
  s.create_zeros(name + ".b", {out_ch});
}

}  // namespace

void init_discriminator_params(const DiscriminatorConfig& cfg, nn::ParameterStore& store,
                               Rng& rng) {
  for (size_t i = 0; i < cfg.mpd_periods.size(); ++i) {
    const std::string p = "disc.mpd" + std::to_string(i);
    int in_ch = 1;
    for (size_t j = 0; j < cfg.mpd_channels.size(); ++j) {
      init_conv(store, p + ".conv" + std::to_string(j), cfg.mpd_channels[j], in_ch,
                cfg.mpd_kernel, 1, rng, false);
      in_ch = cfg.mpd_channels[j];
    }
    init_conv(store, p + ".post", in_ch, in_ch, cfg.mpd_kernel, 1, rng, false);
    init_conv(store, p + ".score", 1, in_ch, 3, 1, rng, true);
  }
  for (size_t i = 0; i < cfg.mrd_resolutions.size(); ++i) {
    const std::string p = "disc.mrd" + std::to_string(i);
    int in_ch = 1;
    for (size_t j = 0; j < cfg.mrd_channels.size(); ++j) {
      init_conv(store, p + ".conv" + std::to_string(j), cfg.mrd_channels[j], in_ch, 3, 3,
                rng, false);
      in_ch = cfg.mrd_channels[j];
    }
    init_conv(store, p + ".post", in_ch, in_ch, 3, 3, rng, false);
    init_conv(store, p + ".score", 1, in_ch, 3, 3, rng, true);
  }
}

DiscriminatorBank::DiscriminatorBank(DiscriminatorConfig cfg, const nn::ParameterStore* store)
    : cfg_(std::move(cfg)), store_(store) {}

SubOutput DiscriminatorBank::mpd_forward(const ad::Value& x, size_t index) const {
  const std::string p = "disc.mpd" + std::to_string(index);
  const int pad = (cfg_.mpd_kernel - 1) / 2;
  SubOutput out;
  ad::Value h = ad::pad_reshape_period(x, cfg_.mpd_periods[index]);
  for (size_t j = 0; j < cfg_.mpd_channels.size(); ++j) {
    const std::string c = p + ".conv" + std::to_string(j);
    h = ad::conv2d(h, store_->get(c + ".w"), store_->get(c + ".b"), cfg_.mpd_stride, 1,
                   pad, 0);
    h = ad::leaky_relu(h, cfg_.leaky_slope);
    out.features.push_back(h);
  }
  h = ad::conv2d(h, store_->get(p + ".post.w"), store_->get(p + ".post.b"), 1, 1, pad, 0);
  h = ad::leaky_relu(h, cfg_.leaky_slope);
  out.features.push_back(h);
  out.score = ad::conv2d(h, store_->get(p + ".score.w"), store_->get(p + ".score.b"), 1, 1,
                         1, 0);
  return out;
}

SubOutput DiscriminatorBank::mrd_forward(const ad::Value& x, size_t index) const {
  const std::string p = "disc.mrd" + std::to_string(index);
  const auto& res = cfg_.mrd_resolutions[index];
  if (x.val().numel() < res.n_fft)
    throw InputError("input shorter than MRD n_fft " + std::to_string(res.n_fft));
  SubOutput out;
  ad::Value mag = ad::mag_from_stft(ad::stft(x, res), kMagEps);
  // [frames x bins] viewed as a one-channel image.
  ad::Value h = ad::reshape(mag, {1, mag.val().shape[0], mag.val().shape[1]});
  for (size_t j = 0; j < cfg_.mrd_channels.size(); ++j) {
    const std::string c = p + ".conv" + std::to_string(j);
    const int stride = j == 0 ? 1 : 2;
    h = ad::conv2d(h, store_->get(c + ".w"), store_->get(c + ".b"), stride, stride, 1, 1);
    h = ad::leaky_relu(h, cfg_.leaky_slope);
    out.features.push_back(h);
  }
  h = ad::conv2d(h, store_->get(p + ".post.w"), store_->get(p + ".post.b"), 1, 1, 1, 1);
  h = ad::leaky_relu(h, cfg_.leaky_slope);
  out.features.push_back(h);
  out.score = ad::conv2d(h, store_->get(p + ".score.w"), store_->get(p + ".score.b"), 1, 1,
                         1, 1);
  return out;
}

std::vector<SubOutput> DiscriminatorBank::forward(const ad::Value& x) const {
  if (x.val().numel() < 1) throw InputError("discriminator: empty input");
  int max_period = 0;
  for (int p : cfg_.mpd_periods) max_period = std::max(max_period, p);
  if (x.val().numel() < max_period)
    throw InputError("input shorter than the largest MPD period");
  std::vector<SubOutput> subs;
  subs.reserve(cfg_.n_sub());
  for (size_t i = 0; i < cfg_.mpd_periods.size(); ++i) subs.push_back(mpd_forward(x, i));
  for (size_t i = 0; i < cfg_.mrd_resolutions.size(); ++i) subs.push_back(mrd_forward(x, i));
  return subs;
}

ad::Value hinge_d_loss(const std::vector<SubOutput>& real,
                       const std::vector<SubOutput>& fake) {
  if (real.size() != fake.size())
    throw InputError("hinge_d_loss: sub-discriminator count mismatch");
  ad::Value loss = ad::Value::scalar(0.0);
  for (size_t i = 0; i < real.size(); ++i) {
    ad::Value lr = ad::mean(ad::relu(ad::add_scalar(ad::neg(real[i].score), 1.0)));
    ad::Value lf = ad::mean(ad::relu(ad::add_scalar(fake[i].score, 1.0)));
    loss = ad::add(loss, ad::add(lr, lf));
  }
  return loss;
}

ad::Value hinge_g_loss(const std::vector<SubOutput>& fake) {
  ad::Value loss = ad::Value::scalar(0.0);
  for (const auto& s : fake) loss = ad::add(loss, ad::neg(ad::mean(s.score)));
  return loss;
}

ad::Value feature_matching_loss(const std::vector<SubOutput>& real,
                                const std::vector<SubOutput>& fake) {
  if (real.size() != fake.size())
    throw InputError("feature_matching_loss: sub-discriminator count mismatch");
  ad::Value acc = ad::Value::scalar(0.0);
  int64_t layers = 0;
  for (size_t i = 0; i < real.size(); ++i) {
    if (real[i].features.size() != fake[i].features.size())
      throw InputError("feature_matching_loss: layer count mismatch");
    for (size_t j = 0; j < real[i].features.size(); ++j) {
      acc = ad::add(acc, ad::mean(ad::abs_val(ad::sub(real[i].features[j].detach(),
                                                      fake[i].features[j]))));
      ++layers;
    }
  }
  if (layers == 0) return acc;
  return ad::scale(acc, 1.0 / static_cast<double>(layers));
}

std::vector<MelScale> multiscale_mel_bank(int sample_rate) {
  const int wins[] = {32, 64, 128, 256, 512, 1024, 2048};
  const int mels[] = {5, 10, 20, 40, 80, 160, 320};
  std::vector<MelScale> bank;
  bank.reserve(7);
  for (int i = 0; i < 7; ++i) {
    MelScale s;
    s.spectral = {wins[i], wins[i] / 4};
    s.fb = dsp::make_filterbank(dsp::FilterbankKind::mel, mels[i], wins[i], sample_rate);
    bank.push_back(std::move(s));
  }
  return bank;
}

ad::Value multiscale_mel_loss(const ad::Value& x_hat, const Tensor& x,
                              const std::vector<MelScale>& bank, double log_floor) {
  if (x_hat.val().numel() != x.numel())
    throw InputError("multiscale_mel_loss: length mismatch");
  ad::Value loss = ad::Value::scalar(0.0);
  Waveform ref;
  ref.samples = x.data;
  for (const auto& scale : bank) {
    ref.sample_rate = scale.fb.sample_rate;
    // reference mel computed outside the tape
    Tensor ref_mel = dsp::power_spectrogram_filtered(ref, scale.spectral, scale.fb);
    for (auto& v : ref_mel.data) v = std::log(std::max(v, log_floor));

    const auto& w = scale.fb.weights;
    Tensor fb_t({w.shape[1], w.shape[0]});
    for (int64_t i = 0; i < w.shape[0]; ++i)
      for (int64_t b = 0; b < w.shape[1]; ++b) fb_t.at(b, i) = w.at(i, b);
    ad::Value hat_mel = ad::log_floor(
        ad::matmul(ad::power_from_stft(ad::stft(x_hat, scale.spectral)),
                   ad::Value::constant(std::move(fb_t))),
        log_floor);
    loss = ad::add(loss, ad::mean(ad::abs_val(ad::sub(hat_mel,
                                                      ad::Value::constant(std::move(ref_mel))))));
  }
  return loss;
}

ad::Value gan_generator_loss(const GanLossWeights& w, const ad::Value& adv,
                             const ad::Value& fm, const ad::Value& mel) {
  if (w.w_adv < 0 || w.w_fm < 0 || w.w_mel < 0)
    throw ConfigError("gan loss weights must be nonnegative");
  return ad::add(ad::add(ad::scale(adv, w.w_adv), ad::scale(fm, w.w_fm)),
                 ad::scale(mel, w.w_mel));
}

ad::Value n_step_generate(const NStepGenerator& gen, const ad::Value& x0,
                          const ad::Value& cond_encoded) {
  if (!gen.generator) throw ConfigError("n_step_generate: missing base generator");
  flow::ModelFn g = [&](const ad::Value& x, double t) {
    return gen.generator->forward(x, t, cond_encoded);
  };
  return flow::euler_sample_endpoint(g, x0, gen.schedule);
}

}  // namespace flow2gan::gan
