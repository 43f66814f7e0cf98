// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/backbone/model.hpp"

#include <cmath>
#include <string>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::model {

CondKind parse_cond_kind(const std::string& s) {
  if (s == "mel") return CondKind::mel;
  if (s == "log_mel") return CondKind::log_mel;
  if (s == "generic") return CondKind::generic;
  throw ConfigError("unknown condition kind: " + s);
}

std::string to_string(CondKind kind) {
  switch (kind) {
    case CondKind::mel: return "mel";
    case CondKind::log_mel: return "log_mel";
    case CondKind::generic: return "generic";
  }
  throw ConfigError("invalid condition kind value");
}

int ModelConfig::largest_hop() const {
  int h = 0;
  for (const auto& b : branches) h = std::max(h, b.spectral.hop);
  return h;
}

int ModelConfig::upsample_factor(size_t branch) const {
  return largest_hop() / branches[branch].spectral.hop;
}

void ModelConfig::validate() const {
  if (branches.empty()) throw ConfigError("model needs at least one branch");
  const int big = largest_hop();
  for (size_t i = 0; i < branches.size(); ++i) {
    const auto& b = branches[i];
    b.spectral.validate();
    if (b.embed_dim < 1 || b.n_layers < 0 || b.ff_factor < 1)
      throw ConfigError("branch " + std::to_string(i) + ": bad dimensions");
    if (b.kernel % 2 == 0) throw ConfigError("branch kernel must be odd");
    if (big % b.spectral.hop != 0)
      throw ConfigError("branch hops must divide the largest hop");
    const int f = big / b.spectral.hop;
    if (f != 1 && f != 2 && f != 4)
      throw ConfigError("branch hop ratios must be 4:2:1");
  }
  if (cond_spectral.hop != big)
    throw ConfigError("condition hop must equal the largest branch hop");
  cond_spectral.validate();
  scale_spectral.validate();
  if (time_dim < 4 || time_dim % 2 != 0)
    throw ConfigError("time_dim must be even and >= 4");
  if (cond_dim < 1 || cond_input_dim < 1) throw ConfigError("bad condition dims");
}

ModelConfig ModelConfig::full_preset() {
  ModelConfig c;
  c.preset_name = "full";
  c.branches = {
      {{512, 256}, 768, 8, 3, 7},
      {{256, 128}, 512, 8, 3, 7},
      {{128, 64}, 384, 8, 3, 7},
  };
  c.cond_dim = 512;
  c.cond_layers = 4;
  c.cond_input_dim = 100;
  c.time_dim = 512;
  c.cond_feature_kind = CondKind::log_mel;
  c.sample_rate = 24000;
  c.cond_spectral = {1024, 256};
  c.scale_spectral = {1024, 256};
  c.scale_filters = 256;
  return c;
}

ModelConfig ModelConfig::desk_preset() {
  ModelConfig c;
  c.preset_name = "desk";
  c.branches = {
      {{512, 256}, 96, 2, 3, 7},
      {{256, 128}, 64, 2, 3, 7},
      {{128, 64}, 48, 2, 3, 7},
  };
  c.cond_dim = 64;
  c.cond_layers = 2;
  c.cond_input_dim = 32;
  c.time_dim = 64;
  c.cond_feature_kind = CondKind::log_mel;
  c.sample_rate = 24000;
  c.cond_spectral = {512, 256};
  c.scale_spectral = {256, 64};
  c.scale_filters = 64;
  return c;
}

ModelConfig ModelConfig::micro_preset() {
  ModelConfig c;
  c.preset_name = "micro";
  c.branches = {
      {{32, 16}, 12, 1, 3, 3},
      {{16, 8}, 10, 1, 3, 3},
      {{8, 4}, 8, 1, 3, 3},
  };
  c.cond_dim = 8;
  c.cond_layers = 1;
  c.cond_input_dim = 6;
  c.time_dim = 8;
  c.cond_feature_kind = CondKind::mel;
  c.sample_rate = 8000;
  c.cond_spectral = {32, 16};
  c.scale_spectral = {16, 4};
  c.scale_filters = 6;
  return c;
}

ModelConfig ModelConfig::by_name(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset();
  if (name == "micro") return micro_preset();
  throw ConfigError("unknown preset: " + name);
}

Tensor sinusoidal_embedding(double t, int dim) {
  if (t < 0.0 || t > 1.0) throw InputError("time embedding: t outside [0, 1]");
  const int half = dim / 2;
  Tensor e({1, dim});
  for (int i = 0; i < half; ++i) {
    const double expo = half > 1 ? 3.0 * i / (half - 1) : 0.0;
    const double omega = std::pow(10.0, expo);
    e.data[i] = std::sin(omega * t);
    e.data[half + i] = std::cos(omega * t);
  }
  return e;
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-8;
constexpr double kPreluInit = 0.25;

void init_block(nn::ParameterStore& s, const std::string& p, int dim, int kernel,
                int ff, int time_dim, int cond_dim, Rng& rng) {
  s.create_trunc_normal(p + ".dwconv.w", {dim, kernel}, rng, kInitStd);
  s.create_zeros(p + ".dwconv.b", {dim});
  s.create_zeros(p + ".norm.bias", {dim});
  s.create_zeros(p + ".norm.gamma", {1});
  if (time_dim > 0) {
    // Zero-initialized modulation: blocks start as unconditioned residuals.
    s.create_zeros(p + ".film_s.w", {time_dim, dim});
    s.create_zeros(p + ".film_s.b", {dim});
    s.create_zeros(p + ".film_b.w", {time_dim, dim});
    s.create_zeros(p + ".film_b.b", {dim});
  }
  if (cond_dim > 0) {
    s.create_zeros(p + ".cond.w", {cond_dim, dim});
    s.create_zeros(p + ".cond.b", {dim});
  }
  s.create_trunc_normal(p + ".pw1.w", {dim, ff * dim}, rng, kInitStd);
  s.create_zeros(p + ".pw1.b", {ff * dim});
  s.create_full(p + ".pw1.alpha", {ff * dim}, kPreluInit);
  s.create_trunc_normal(p + ".pw2.w", {ff * dim, dim}, rng, kInitStd);
  s.create_zeros(p + ".pw2.b", {dim});
}

}  // namespace

void init_generator_params(const ModelConfig& cfg, nn::ParameterStore& store, Rng& rng) {
  cfg.validate();
  store.create_trunc_normal("gen.time.mlp1.w", {cfg.time_dim, cfg.time_dim}, rng, kInitStd);
  store.create_zeros("gen.time.mlp1.b", {cfg.time_dim});
  store.create_full("gen.time.alpha", {cfg.time_dim}, kPreluInit);
  store.create_trunc_normal("gen.time.mlp2.w", {cfg.time_dim, cfg.time_dim}, rng, kInitStd);
  store.create_zeros("gen.time.mlp2.b", {cfg.time_dim});

  store.create_trunc_normal("gen.cond.in.w", {cfg.cond_input_dim, cfg.cond_dim}, rng, kInitStd);
  store.create_zeros("gen.cond.in.b", {cfg.cond_dim});
  const int ff = cfg.branches[0].ff_factor;
  const int ck = cfg.branches[0].kernel;
  for (int i = 0; i < cfg.cond_layers; ++i)
    init_block(store, "gen.cond.block" + std::to_string(i), cfg.cond_dim, ck, ff, 0, 0, rng);

  for (size_t bi = 0; bi < cfg.branches.size(); ++bi) {
    const auto& b = cfg.branches[bi];
    const std::string p = "gen.branch" + std::to_string(bi);
    const int io = 2 * b.spectral.bins();
    store.create_trunc_normal(p + ".in.w", {io, b.embed_dim}, rng, kInitStd);
    store.create_zeros(p + ".in.b", {b.embed_dim});
    store.create_trunc_normal(p + ".cond_in.w", {cfg.cond_dim, b.embed_dim}, rng, kInitStd);
    store.create_zeros(p + ".cond_in.b", {b.embed_dim});
    store.create_trunc_normal(p + ".time_in.w", {cfg.time_dim, b.embed_dim}, rng, kInitStd);
    store.create_zeros(p + ".time_in.b", {b.embed_dim});
    for (int j = 0; j < b.n_layers; ++j)
      init_block(store, p + ".block" + std::to_string(j), b.embed_dim, b.kernel,
                 b.ff_factor, cfg.time_dim, cfg.cond_dim, rng);
    // Zero output head: the untrained generator emits silence.
    store.create_zeros(p + ".out.w", {b.embed_dim, io});
    store.create_zeros(p + ".out.b", {io});
  }
}

Generator::Generator(ModelConfig cfg, const nn::ParameterStore* store)
    : cfg_(std::move(cfg)), store_(store) {
  cfg_.validate();
}

namespace {

ad::Value linear(const nn::ParameterStore& s, const ad::Value& x, const std::string& p) {
  return ad::add_rowvec(ad::matmul(x, s.get(p + ".w")), s.get(p + ".b"));
}

}  // namespace

ad::Value Generator::time_features(double t) const {
  ad::Value e = ad::Value::constant(sinusoidal_embedding(t, cfg_.time_dim));
  ad::Value h = linear(*store_, e, "gen.time.mlp1");
  h = ad::prelu(h, store_->get("gen.time.alpha"));
  return linear(*store_, h, "gen.time.mlp2");
}

ad::Value Generator::convnext_block(const ad::Value& x, const std::string& prefix,
                                    const ad::Value* time_feat,
                                    const ad::Value* cond_feat) const {
  const nn::ParameterStore& s = *store_;
  ad::Value h = ad::dwconv1d(x, s.get(prefix + ".dwconv.w"), s.get(prefix + ".dwconv.b"));
  h = ad::bias_norm(h, s.get(prefix + ".norm.bias"), s.get(prefix + ".norm.gamma"), kNormEps);
  if (time_feat) {
    ad::Value sc = linear(s, *time_feat, prefix + ".film_s");
    ad::Value sh = linear(s, *time_feat, prefix + ".film_b");
    h = ad::affine_rows(h, sc, sh);
  }
  if (cond_feat) h = ad::add(h, *cond_feat);
  h = linear(s, h, prefix + ".pw1");
  h = ad::prelu(h, s.get(prefix + ".pw1.alpha"));
  h = linear(s, h, prefix + ".pw2");
  return ad::add(x, h);
}

ad::Value Generator::encode_condition(const Tensor& cond_features) const {
  if (cond_features.rank() != 2 || cond_features.shape[1] != cfg_.cond_input_dim)
    throw ConfigError("condition features must be [frames x " +
                      std::to_string(cfg_.cond_input_dim) + "]");
  ad::Value h = linear(*store_, ad::Value::constant(cond_features), "gen.cond.in");
  for (int i = 0; i < cfg_.cond_layers; ++i)
    h = convnext_block(h, "gen.cond.block" + std::to_string(i), nullptr, nullptr);
  return h;
}

ad::Value Generator::branch_forward(const ad::Value& xt, const ad::Value& cond_encoded,
                                    const ad::Value& time_feat, size_t branch) const {
  const auto& b = cfg_.branches[branch];
  const int64_t len = xt.val().numel();
  if (len % b.spectral.hop != 0)
    throw InputError("waveform length must be divisible by branch hop");
  const std::string p = "gen.branch" + std::to_string(branch);
  const int factor = cfg_.upsample_factor(branch);
  const nn::ParameterStore& s = *store_;

  ad::Value x = linear(s, ad::stft(xt, b.spectral), p + ".in");
  ad::Value cond_at_rate = linear(s, cond_encoded, p + ".cond_in");
  x = ad::add(x, factor == 1 ? cond_at_rate : ad::repeat_rows(cond_at_rate, factor));
  x = ad::add_rowvec(x, linear(s, time_feat, p + ".time_in"));

  for (int j = 0; j < b.n_layers; ++j) {
    const std::string bp = p + ".block" + std::to_string(j);
    // Per-block zero-initialized condition pathway, projected at the
    // condition frame rate then repeated to the branch rate.
    ad::Value c = linear(s, cond_encoded, bp + ".cond");
    if (factor != 1) c = ad::repeat_rows(c, factor);
    x = convnext_block(x, bp, &time_feat, &c);
  }
  return ad::istft(linear(s, x, p + ".out"), b.spectral, len);
}

ad::Value Generator::forward(const ad::Value& xt, double t,
                             const ad::Value& cond_encoded) const {
  const int64_t len = xt.val().numel();
  const int big = cfg_.largest_hop();
  if (len % big != 0)
    throw InputError("waveform length must be divisible by the largest hop");
  if (cond_encoded.val().shape[0] != len / big)
    throw InputError("condition frames (" + std::to_string(cond_encoded.val().shape[0]) +
                     ") do not match waveform length / hop (" +
                     std::to_string(len / big) + ")");
  ad::Value tf = time_features(t);
  ad::Value y = branch_forward(xt, cond_encoded, tf, 0);
  for (size_t i = 1; i < cfg_.branches.size(); ++i)
    y = ad::add(y, branch_forward(xt, cond_encoded, tf, i));
  return y;
}

}  // namespace flow2gan::model
