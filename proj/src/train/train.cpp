// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/train/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flow2gan/core/errors.hpp"

namespace flow2gan::train {
namespace {

using ojson = nlohmann::ordered_json;

constexpr char kCheckpointMagic[] = "F2GANCKPT1";
constexpr double kMelLogFloor = 1e-5;

Tensor gaussian_tensor(const std::vector<int64_t>& shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data) v = rng.gaussian();
  return t;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t to_int64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("option '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t to_uint64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("option '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("option '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("option '" + key + "' expects a boolean, got '" + v + "'");
}

flow::LossSpec make_loss_spec(const TrainConfig& cfg, const model::ModelConfig& m) {
  flow::LossSpec spec;
  spec.mode = cfg.loss_mode;
  spec.has_scale = true;
  spec.scale_spectral = m.scale_spectral;
  spec.scale_fb = dsp::make_filterbank(dsp::FilterbankKind::linear, m.scale_filters,
                                       m.scale_spectral.n_fft, m.sample_rate);
  return spec;
}

nn::AdamWConfig g_opt_config(const TrainConfig& cfg) {
  return {.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2, .eps = 1e-8,
          .weight_decay = cfg.weight_decay};
}

nn::AdamWConfig d_opt_config(const TrainConfig& cfg) {
  return {.lr = cfg.lr_d, .beta1 = cfg.beta1, .beta2 = cfg.beta2, .eps = 1e-8,
          .weight_decay = cfg.weight_decay};
}

// --- checkpoint JSON <-> config records ---

ojson spectral_to_json(const dsp::SpectralConfig& c) {
  return ojson{{"n_fft", c.n_fft}, {"hop", c.hop}, {"center", c.center}};
}

dsp::SpectralConfig spectral_from_json(const ojson& j) {
  dsp::SpectralConfig c;
  c.n_fft = j.at("n_fft").get<int>();
  c.hop = j.at("hop").get<int>();
  c.center = j.at("center").get<bool>();
  return c;
}

ojson model_to_json(const model::ModelConfig& m) {
  ojson branches = ojson::array();
  for (const auto& b : m.branches) {
    branches.push_back(ojson{{"spectral", spectral_to_json(b.spectral)},
                             {"embed_dim", b.embed_dim},
                             {"n_layers", b.n_layers},
                             {"ff_factor", b.ff_factor},
                             {"kernel", b.kernel}});
  }
  return ojson{{"preset_name", m.preset_name},
               {"branches", branches},
               {"cond_dim", m.cond_dim},
               {"cond_layers", m.cond_layers},
               {"cond_input_dim", m.cond_input_dim},
               {"time_dim", m.time_dim},
               {"cond_feature_kind", model::to_string(m.cond_feature_kind)},
               {"sample_rate", m.sample_rate},
               {"cond_spectral", spectral_to_json(m.cond_spectral)},
               {"scale_spectral", spectral_to_json(m.scale_spectral)},
               {"scale_filters", m.scale_filters}};
}

model::ModelConfig model_from_json(const ojson& j) {
  model::ModelConfig m;
  m.branches.clear();
  for (const auto& bj : j.at("branches")) {
    model::BranchConfig b;
    b.spectral = spectral_from_json(bj.at("spectral"));
    b.embed_dim = bj.at("embed_dim").get<int>();
    b.n_layers = bj.at("n_layers").get<int>();
    b.ff_factor = bj.at("ff_factor").get<int>();
    b.kernel = bj.at("kernel").get<int>();
    m.branches.push_back(b);
  }
  m.preset_name = j.at("preset_name").get<std::string>();
  m.cond_dim = j.at("cond_dim").get<int>();
  m.cond_layers = j.at("cond_layers").get<int>();
  m.cond_input_dim = j.at("cond_input_dim").get<int>();
  m.time_dim = j.at("time_dim").get<int>();
  m.cond_feature_kind = model::parse_cond_kind(j.at("cond_feature_kind").get<std::string>());
  m.sample_rate = j.at("sample_rate").get<int>();
  m.cond_spectral = spectral_from_json(j.at("cond_spectral"));
  m.scale_spectral = spectral_from_json(j.at("scale_spectral"));
  m.scale_filters = j.at("scale_filters").get<int>();
  return m;
}

ojson disc_to_json(const gan::DiscriminatorConfig& d) {
  ojson resolutions = ojson::array();
  for (const auto& r : d.mrd_resolutions) resolutions.push_back(spectral_to_json(r));
  return ojson{{"mpd_periods", d.mpd_periods},
               {"mpd_channels", d.mpd_channels},
               {"mpd_kernel", d.mpd_kernel},
               {"mpd_stride", d.mpd_stride},
               {"mrd_resolutions", resolutions},
               {"mrd_channels", d.mrd_channels},
               {"leaky_slope", d.leaky_slope}};
}

gan::DiscriminatorConfig disc_from_json(const ojson& j) {
  gan::DiscriminatorConfig d;
  d.mpd_periods = j.at("mpd_periods").get<std::vector<int>>();
  d.mpd_channels = j.at("mpd_channels").get<std::vector<int>>();
  d.mpd_kernel = j.at("mpd_kernel").get<int>();
  d.mpd_stride = j.at("mpd_stride").get<int>();
  d.mrd_resolutions.clear();
  for (const auto& rj : j.at("mrd_resolutions")) d.mrd_resolutions.push_back(spectral_from_json(rj));
  d.mrd_channels = j.at("mrd_channels").get<std::vector<int>>();
  d.leaky_slope = j.at("leaky_slope").get<double>();
  return d;
}

ojson train_to_json(const TrainConfig& c) {
  return ojson{{"stage", to_string(c.stage)},
               {"loss_mode", flow::to_string(c.loss_mode)},
               {"n_steps", c.n_steps},
               {"batch_size", c.batch_size},
               {"segment_length", c.segment_length},
               {"lr", c.lr},
               {"lr_d", c.lr_d},
               {"beta1", c.beta1},
               {"beta2", c.beta2},
               {"weight_decay", c.weight_decay},
               {"max_iters", c.max_iters},
               {"seed", c.seed},
               {"noise_augment", c.noise_augment},
               {"augment_coeff", c.augment_coeff},
               {"checkpoint_every", c.checkpoint_every},
               {"grad_clip", c.grad_clip},
               {"cosine_decay", c.cosine_decay},
               {"preset", c.preset},
               {"mel_kind", c.mel_kind},
               {"data_dir", c.data_dir},
               {"out_dir", c.out_dir},
               {"init_from", c.init_from}};
}

TrainConfig train_from_json(const ojson& j) {
  TrainConfig c;
  c.stage = parse_stage(j.at("stage").get<std::string>());
  c.loss_mode = flow::parse_loss_mode(j.at("loss_mode").get<std::string>());
  c.n_steps = j.at("n_steps").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.segment_length = j.at("segment_length").get<int64_t>();
  c.lr = j.at("lr").get<double>();
  c.lr_d = j.at("lr_d").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.max_iters = j.at("max_iters").get<int64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  c.noise_augment = j.at("noise_augment").get<bool>();
  c.augment_coeff = j.at("augment_coeff").get<double>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.cosine_decay = j.at("cosine_decay").get<bool>();
  c.preset = j.at("preset").get<std::string>();
  c.mel_kind = j.at("mel_kind").get<std::string>();
  c.data_dir = j.at("data_dir").get<std::string>();
  c.out_dir = j.at("out_dir").get<std::string>();
  c.init_from = j.at("init_from").get<std::string>();
  return c;
}

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("checkpoint truncated in header");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_payload(std::ostream& os, const std::vector<double>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_payload(std::istream& is, std::vector<double>& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw IoError("checkpoint payload truncated");
}

double finite_scalar(const ad::Value& v, const std::string& what, int64_t iteration) {
  const double x = v.scalar_value();
  if (!std::isfinite(x))
    throw DomainError("non-finite " + what + " at iteration " + std::to_string(iteration));
  return x;
}

}  // namespace

Stage parse_stage(const std::string& s) {
  if (s == "fm") return Stage::fm;
  if (s == "gan") return Stage::gan;
  throw ConfigError("unknown training stage '" + s + "' (expected fm or gan)");
}

std::string to_string(Stage stage) { return stage == Stage::fm ? "fm" : "gan"; }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (segment_length < 1) throw ConfigError("segment_length must be >= 1");
  if (lr <= 0.0 || lr_d <= 0.0) throw ConfigError("learning rates must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("betas must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (augment_coeff < 0.0) throw ConfigError("augment_coeff must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (stage == Stage::gan && n_steps != 1 && n_steps != 2 && n_steps != 4)
    throw ConfigError("gan stage supports n_steps in {1, 2, 4}");
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + " is not 'key = value': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + " has an empty key");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str());
}

void apply_option(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "stage") cfg.stage = parse_stage(value);
  else if (key == "loss_mode") cfg.loss_mode = flow::parse_loss_mode(value);
  else if (key == "n_steps") cfg.n_steps = static_cast<int>(to_int64(key, value));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_int64(key, value));
  else if (key == "segment_length") cfg.segment_length = to_int64(key, value);
  else if (key == "lr") cfg.lr = to_double(key, value);
  else if (key == "lr_d") cfg.lr_d = to_double(key, value);
  else if (key == "beta1") cfg.beta1 = to_double(key, value);
  else if (key == "beta2") cfg.beta2 = to_double(key, value);
  else if (key == "weight_decay") cfg.weight_decay = to_double(key, value);
  else if (key == "max_iters") cfg.max_iters = to_int64(key, value);
  else if (key == "seed") cfg.seed = to_uint64(key, value);
  else if (key == "noise_augment") cfg.noise_augment = to_bool(key, value);
  else if (key == "augment_coeff") cfg.augment_coeff = to_double(key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = to_int64(key, value);
  else if (key == "grad_clip") cfg.grad_clip = to_double(key, value);
  else if (key == "cosine_decay") cfg.cosine_decay = to_bool(key, value);
  else if (key == "preset") cfg.preset = value;
  else if (key == "mel_kind") cfg.mel_kind = value;
  else if (key == "data_dir") cfg.data_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "init_from") cfg.init_from = value;
  else throw ConfigError("unknown config option '" + key + "'");
}

void apply_options(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) apply_option(cfg, k, v);
}

model::ModelConfig make_model_config(const TrainConfig& cfg) {
  model::ModelConfig m = model::ModelConfig::by_name(cfg.preset);
  if (!cfg.mel_kind.empty()) m.cond_feature_kind = model::parse_cond_kind(cfg.mel_kind);
  m.validate();
  return m;
}

std::string describe_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "stage = " << to_string(cfg.stage) << "\n"
     << "preset = " << cfg.preset << "\n"
     << "mel_kind = " << cfg.mel_kind << "\n"
     << "loss_mode = " << flow::to_string(cfg.loss_mode) << "\n"
     << "n_steps = " << cfg.n_steps << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "segment_length = " << cfg.segment_length << "\n"
     << "lr = " << cfg.lr << "\n"
     << "lr_d = " << cfg.lr_d << "\n"
     << "beta1 = " << cfg.beta1 << "\n"
     << "beta2 = " << cfg.beta2 << "\n"
     << "weight_decay = " << cfg.weight_decay << "\n"
     << "grad_clip = " << cfg.grad_clip << "\n"
     << "cosine_decay = " << (cfg.cosine_decay ? "true" : "false") << "\n"
     << "max_iters = " << cfg.max_iters << "\n"
     << "seed = " << cfg.seed << "\n"
     << "noise_augment = " << (cfg.noise_augment ? "true" : "false") << "\n"
     << "augment_coeff = " << cfg.augment_coeff << "\n"
     << "checkpoint_every = " << cfg.checkpoint_every << "\n"
     << "data_dir = " << cfg.data_dir << "\n"
     << "out_dir = " << cfg.out_dir << "\n"
     << "init_from = " << cfg.init_from << "\n";
  return os.str();
}

TrainState init_fm_state(const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.stage != Stage::fm) throw ConfigError("init_fm_state requires stage = fm");

  TrainState st;
  st.cfg = cfg;
  st.model_cfg = make_model_config(cfg);
  if (cfg.segment_length % st.model_cfg.cond_spectral.hop != 0)
    throw ConfigError("segment_length must be divisible by the condition hop");
  st.rng = Rng(cfg.seed);
  model::init_generator_params(st.model_cfg, st.store, st.rng);
  st.opt_g = std::make_unique<nn::AdamW>(st.store.group("gen."), g_opt_config(cfg));
  st.loss_spec = make_loss_spec(cfg, st.model_cfg);
  return st;
}

TrainState init_gan_state(const TrainConfig& cfg, const std::string& fm_checkpoint) {
  cfg.validate();
  if (cfg.stage != Stage::gan) throw ConfigError("init_gan_state requires stage = gan");
  if (fm_checkpoint.empty())
    throw ConfigError("gan fine-tuning requires a flow-matching checkpoint (init_from)");

  TrainState fm = load_checkpoint(fm_checkpoint);
  if (fm.cfg.stage != Stage::fm)
    throw ConfigError("init_from must point at a flow-matching (stage 1) checkpoint");

  TrainState st;
  st.cfg = cfg;
  st.cfg.init_from = fm_checkpoint;
  st.model_cfg = fm.model_cfg;
  st.cfg.preset = st.model_cfg.preset_name;
  if (cfg.segment_length % st.model_cfg.cond_spectral.hop != 0)
    throw ConfigError("segment_length must be divisible by the condition hop");
  if (cfg.noise_augment && st.model_cfg.cond_feature_kind != model::CondKind::log_mel)
    throw ConfigError("noise augmentation requires log_mel conditioning features");

  st.rng = Rng(cfg.seed);
  // Generator weights are copied bitwise; discriminators start fresh.
  for (const auto& [name, value] : fm.store.items())
    if (name.rfind("gen.", 0) == 0) st.store.create(name, value.val());
  st.disc_cfg = gan::DiscriminatorConfig::by_name(st.model_cfg.preset_name);
  gan::init_discriminator_params(st.disc_cfg, st.store, st.rng);

  st.opt_g = std::make_unique<nn::AdamW>(st.store.group("gen."), g_opt_config(cfg));
  st.opt_d = std::make_unique<nn::AdamW>(st.store.group("disc."), d_opt_config(cfg));
  st.loss_spec = make_loss_spec(cfg, st.model_cfg);
  st.mel_bank = gan::multiscale_mel_bank(st.model_cfg.sample_rate);
  return st;
}

Batch sample_batch(const data::LoadedDataset& ds, const TrainConfig& cfg, Rng& rng) {
  if (ds.waves.empty()) throw InputError("cannot sample from an empty dataset");
  Batch b;
  for (int i = 0; i < cfg.batch_size; ++i) {
    const auto idx = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(ds.waves.size())));
    auto [seg, cond] = data::crop_pair(ds.waves[idx], ds.conds[idx], cfg.segment_length, rng);
    Tensor x1;
    x1.shape = {seg.length()};
    x1.data = std::move(seg.samples);
    b.x1.push_back(std::move(x1));
    b.cond.push_back(std::move(cond.features));
  }
  return b;
}

Tensor augment_condition(const Tensor& features, double coeff, Rng& rng) {
  if (coeff <= 0.0) return features;
  Tensor out = features;
  const double u = rng.uniform();
  for (auto& v : out.data) v += coeff * u * rng.gaussian();
  return out;
}

ConditionGrid augment_condition(const ConditionGrid& cond, double coeff, Rng& rng) {
  ConditionGrid out;
  out.hop = cond.hop;
  out.features = augment_condition(cond.features, coeff, rng);
  return out;
}

double fm_train_step(TrainState& state, const Batch& batch) {
  if (state.cfg.stage != Stage::fm || !state.opt_g)
    throw ConfigError("fm_train_step requires an fm-stage state");
  if (batch.x1.empty() || batch.x1.size() != batch.cond.size())
    throw InputError("malformed training batch");

  const model::Generator gen(state.model_cfg, &state.store);
  const int batch_n = static_cast<int>(batch.x1.size());
  const std::vector<double> ts = flow::sample_t(batch_n, state.rng);

  state.opt_g->zero_grad();
  ad::Value total;
  for (int b = 0; b < batch_n; ++b) {
    const Tensor& x1 = batch.x1[b];
    const Tensor x0 = gaussian_tensor(x1.shape, state.rng);
    const Tensor xt = flow::interpolate(x0, x1, ts[b]);
    const ad::Value cond_enc = gen.encode_condition(batch.cond[b]);
    const ad::Value out = gen.forward(ad::Value::constant(xt), ts[b], cond_enc);
    const ad::Value lb = flow::fm_loss(state.loss_spec, out, x1, xt, ts[b], x0);
    total = b == 0 ? lb : ad::add(total, lb);
  }
  total = ad::scale(total, 1.0 / batch_n);

  const double loss = finite_scalar(total, "flow-matching loss", state.iteration);
  ad::backward(total);
  if (state.cfg.grad_clip > 0.0) state.opt_g->clip_grad_norm(state.cfg.grad_clip);
  const double s =
      state.cfg.cosine_decay ? nn::cosine_lr_scale(state.iteration, state.cfg.max_iters) : 1.0;
  state.opt_g->step(s);
  ++state.iteration;
  return loss;
}

GanLossReport gan_train_step(TrainState& state, const Batch& batch) {
  if (state.cfg.stage != Stage::gan || !state.opt_g || !state.opt_d)
    throw ConfigError("gan_train_step requires a gan-stage state");
  if (batch.x1.empty() || batch.x1.size() != batch.cond.size())
    throw InputError("malformed training batch");

  const model::Generator gen(state.model_cfg, &state.store);
  const gan::DiscriminatorBank disc(state.disc_cfg, &state.store);
  const gan::NStepGenerator sampler{&gen, flow::uniform_schedule(state.cfg.n_steps)};
  const gan::GanLossWeights weights;
  const int batch_n = static_cast<int>(batch.x1.size());
  const double lr_scale =
      state.cfg.cosine_decay ? nn::cosine_lr_scale(state.iteration, state.cfg.max_iters) : 1.0;

  const bool augment = state.cfg.noise_augment &&
                       state.model_cfg.cond_feature_kind == model::CondKind::log_mel;
  std::vector<Tensor> conds(batch.cond.size());
  std::vector<Tensor> latents;
  latents.reserve(batch.x1.size());
  for (int b = 0; b < batch_n; ++b) {
    conds[b] = augment ? augment_condition(batch.cond[b], state.cfg.augment_coeff, state.rng)
                       : batch.cond[b];
    latents.push_back(gaussian_tensor(batch.x1[b].shape, state.rng));
  }

  GanLossReport report;

  // Discriminator phase: real vs detached fake.
  std::vector<Tensor> fakes(batch.x1.size());
  {
    ad::NoGradGuard no_grad;
    for (int b = 0; b < batch_n; ++b) {
      const ad::Value cond_enc = gen.encode_condition(conds[b]);
      fakes[b] = gan::n_step_generate(sampler, ad::Value::constant(latents[b]), cond_enc).val();
    }
  }
  state.opt_d->zero_grad();
  ad::Value d_total;
  for (int b = 0; b < batch_n; ++b) {
    const auto real_outs = disc.forward(ad::Value::constant(batch.x1[b]));
    const auto fake_outs = disc.forward(ad::Value::constant(fakes[b]));
    const ad::Value db = gan::hinge_d_loss(real_outs, fake_outs);
    d_total = b == 0 ? db : ad::add(d_total, db);
  }
  d_total = ad::scale(d_total, 1.0 / batch_n);
  report.d_loss = finite_scalar(d_total, "discriminator loss", state.iteration);
  ad::backward(d_total);
  state.opt_d->step(lr_scale);

  // Generator phase: fresh fake against the updated discriminators; real
  // features enter feature matching as constants.
  state.opt_g->zero_grad();
  ad::Value g_total;
  for (int b = 0; b < batch_n; ++b) {
    std::vector<gan::SubOutput> real_outs;
    {
      ad::NoGradGuard no_grad;
      real_outs = disc.forward(ad::Value::constant(batch.x1[b]));
    }
    const ad::Value cond_enc = gen.encode_condition(conds[b]);
    const ad::Value fake = gan::n_step_generate(sampler, ad::Value::constant(latents[b]), cond_enc);
    const auto fake_outs = disc.forward(fake);

    const ad::Value adv = gan::hinge_g_loss(fake_outs);
    const ad::Value fm = gan::feature_matching_loss(real_outs, fake_outs);
    const ad::Value mel = gan::multiscale_mel_loss(fake, batch.x1[b], state.mel_bank, kMelLogFloor);
    const ad::Value gb = gan::gan_generator_loss(weights, adv, fm, mel);

    report.adv += adv.scalar_value() / batch_n;
    report.fm += fm.scalar_value() / batch_n;
    report.mel += mel.scalar_value() / batch_n;
    g_total = b == 0 ? gb : ad::add(g_total, gb);
  }
  g_total = ad::scale(g_total, 1.0 / batch_n);
  report.g_total = finite_scalar(g_total, "generator loss", state.iteration);
  ad::backward(g_total);
  state.opt_g->step(lr_scale);

  ++state.iteration;
  return report;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  ojson j;
  j["magic"] = "flow2gan.ckpt";
  j["version"] = 1;
  j["stage"] = to_string(state.cfg.stage);
  j["iteration"] = state.iteration;
  j["train"] = train_to_json(state.cfg);
  j["model"] = model_to_json(state.model_cfg);
  if (state.opt_d) j["disc"] = disc_to_json(state.disc_cfg);
  {
    std::ostringstream os;
    state.rng.save(os);
    j["rng"] = os.str();
  }
  j["opt_g_steps"] = state.opt_g ? state.opt_g->step_count() : 0;
  if (state.opt_d) j["opt_d_steps"] = state.opt_d->step_count();
  ojson tensors = ojson::array();
  for (const auto& [name, value] : state.store.items())
    tensors.push_back(ojson{{"name", name}, {"shape", value.val().shape}});
  j["tensors"] = tensors;

  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  const std::string header = j.dump();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  write_u64(out, header.size());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, value] : state.store.items()) write_payload(out, value.val().data);
  if (state.opt_g) {
    for (const auto& m : state.opt_g->moment1()) write_payload(out, m.data);
    for (const auto& v : state.opt_g->moment2()) write_payload(out, v.data);
  }
  if (state.opt_d) {
    for (const auto& m : state.opt_d->moment1()) write_payload(out, m.data);
    for (const auto& v : state.opt_d->moment2()) write_payload(out, v.data);
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, sizeof(magic)) != kCheckpointMagic)
    throw IoError("not a checkpoint file: " + path);
  const uint64_t header_len = read_u64(in);
  if (header_len == 0 || header_len > (1ull << 30)) throw IoError("corrupt checkpoint header: " + path);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("checkpoint truncated in header: " + path);

  ojson j;
  TrainState st;
  try {
    j = ojson::parse(header);
    if (j.at("magic").get<std::string>() != "flow2gan.ckpt" || j.at("version").get<int>() != 1)
      throw IoError("unsupported checkpoint format: " + path);
    st.cfg = train_from_json(j.at("train"));
    st.model_cfg = model_from_json(j.at("model"));
    if (j.contains("disc")) st.disc_cfg = disc_from_json(j.at("disc"));
  } catch (const ojson::exception& e) {
    throw IoError("malformed checkpoint header in " + path + ": " + e.what());
  }
  st.model_cfg.validate();
  st.cfg.validate();

  // Rebuild the canonical parameter set, then overwrite every value.
  Rng scratch(0);
  model::init_generator_params(st.model_cfg, st.store, scratch);
  const bool has_disc = j.contains("disc");
  if (has_disc) gan::init_discriminator_params(st.disc_cfg, st.store, scratch);

  const auto& items = st.store.items();
  const ojson& tensors = j.at("tensors");
  if (tensors.size() != items.size())
    throw IoError("checkpoint tensor count mismatch in " + path + ": expected " +
                  std::to_string(items.size()) + ", got " + std::to_string(tensors.size()));
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<std::vector<int64_t>>();
    if (name != items[i].first)
      throw IoError("checkpoint tensor '" + name + "' does not match expected '" +
                    items[i].first + "'");
    if (shape != items[i].second.val().shape)
      throw IoError("checkpoint tensor '" + name + "' has a mismatched shape");
  }
  for (const auto& [name, value] : items) {
    ad::Value v = value;  // handle copy; the node is shared
    read_payload(in, v.mutable_value().data);
  }

  st.opt_g = std::make_unique<nn::AdamW>(st.store.group("gen."), g_opt_config(st.cfg));
  st.opt_g->set_step_count(j.at("opt_g_steps").get<int64_t>());
  for (auto& m : st.opt_g->moment1()) read_payload(in, m.data);
  for (auto& v : st.opt_g->moment2()) read_payload(in, v.data);
  if (has_disc) {
    st.opt_d = std::make_unique<nn::AdamW>(st.store.group("disc."), d_opt_config(st.cfg));
    st.opt_d->set_step_count(j.at("opt_d_steps").get<int64_t>());
    for (auto& m : st.opt_d->moment1()) read_payload(in, m.data);
    for (auto& v : st.opt_d->moment2()) read_payload(in, v.data);
  }
  char extra = 0;
  if (in.read(&extra, 1)) throw IoError("checkpoint has trailing bytes: " + path);

  {
    std::istringstream rs(j.at("rng").get<std::string>());
    st.rng.load(rs);
  }
  st.iteration = j.at("iteration").get<int64_t>();
  st.loss_spec = make_loss_spec(st.cfg, st.model_cfg);
  if (has_disc) st.mel_bank = gan::multiscale_mel_bank(st.model_cfg.sample_rate);
  return st;
}

void train_loop(TrainState& state, const data::LoadedDataset& ds,
                const std::string& metrics_path, const std::string& ckpt_path) {
  if (ds.waves.empty()) throw InputError("training dataset is empty");
  for (size_t i = 0; i < ds.waves.size(); ++i)
    if (ds.waves[i].length() < state.cfg.segment_length)
      throw InputError("clip " + std::to_string(i) + " is shorter than segment_length");

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    metrics.open(metrics_path, std::ios::app);
    if (!metrics) throw IoError("cannot open metrics log: " + metrics_path);
  }

  const auto start = std::chrono::steady_clock::now();
  while (state.iteration < state.cfg.max_iters) {
    const Batch batch = sample_batch(ds, state.cfg, state.rng);
    ojson line;
    if (state.cfg.stage == Stage::fm) {
      const double loss = fm_train_step(state, batch);
      line = ojson{{"iter", state.iteration}, {"stage", "fm"}, {"loss", loss}};
    } else {
      const GanLossReport r = gan_train_step(state, batch);
      line = ojson{{"iter", state.iteration}, {"stage", "gan"},   {"d_loss", r.d_loss},
                   {"adv", r.adv},            {"fm", r.fm},       {"mel", r.mel},
                   {"g_total", r.g_total}};
    }
    if (metrics.is_open()) {
      const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
      line["wall_s"] = wall.count();
      metrics << line.dump() << '\n';
      metrics.flush();
    }
    if (!ckpt_path.empty() && state.cfg.checkpoint_every > 0 &&
        state.iteration % state.cfg.checkpoint_every == 0 &&
        state.iteration < state.cfg.max_iters)
      save_checkpoint(state, ckpt_path);
  }
  if (!ckpt_path.empty()) save_checkpoint(state, ckpt_path);
}

}  // namespace flow2gan::train
