// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/cli/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "flow2gan/core/errors.hpp"
#include "flow2gan/data/data.hpp"
#include "flow2gan/dsp/wav.hpp"
#include "flow2gan/eval/eval.hpp"
#include "flow2gan/train/train.hpp"

namespace flow2gan::cli {
namespace {

namespace fs = std::filesystem;

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// data_dir may name the corpus directory or the manifest file itself.
data::DatasetManifest load_manifest_for(const std::string& data_dir) {
  if (data_dir.empty())
    throw ConfigError("data_dir is required (--data-dir or the config file)");
  fs::path p(data_dir);
  if (fs::is_directory(p)) p /= "manifest.tsv";
  return data::read_manifest(p.string());
}

data::DatasetManifest select_split(const data::DatasetManifest& m, const std::string& split,
                                   double dev_fraction) {
  if (split == "all") return m;
  auto [train_m, dev_m] = data::split_manifest(m, dev_fraction);
  if (split == "train") return train_m;
  if (split == "dev") return dev_m;
  throw ConfigError("unknown split '" + split + "' (expected train, dev, or all)");
}

fs::path output_path(const std::string& out_dir, const std::string& name) {
  fs::path p(name);
  if (!p.is_absolute()) p = fs::path(out_dir) / p;
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
  return p;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open report file: " + path);
  out << line << '\n';
}

// --- shared training-flag plumbing ---

struct TrainArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::string metrics_name = "metrics.jsonl";
  std::string ckpt_name;
  std::string resume;
  double dev_fraction = 0.25;
};

/// Config file first, then flag overrides; the subcommand fixes the stage.
train::TrainConfig resolve_train_config(const TrainArgs& a, train::Stage stage) {
  train::TrainConfig cfg;
  cfg.stage = stage;
  if (!a.config_path.empty()) {
    std::map<std::string, std::string> kv;
    try {
      kv = train::parse_kv_file(a.config_path);
    } catch (const IoError& e) {
      throw ConfigError(e.what());  // a bad --config path is a usage error
    }
    train::apply_options(cfg, kv);
  }
  for (const auto& [k, v] : a.overrides) train::apply_option(cfg, k, v);
  cfg.stage = stage;
  cfg.validate();
  return cfg;
}

void add_train_overrides(CLI::App* cmd, TrainArgs& args) {
  const auto bind = [cmd, &args](const std::string& flag, const std::string& key,
                                 const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&args, key](const std::string& v) { args.overrides[key] = v; }, desc);
  };
  cmd->add_option("--config", args.config_path, "key = value configuration file");
  bind("--data-dir", "data_dir", "corpus directory or manifest path");
  bind("--out-dir", "out_dir", "output directory (default .)");
  bind("--seed", "seed", "training seed (default 0)");
  bind("--loss-mode", "loss_mode",
       "velocity | endpoint_plain | endpoint_tfactor | endpoint_perframe | endpoint_spectral");
  bind("--preset", "preset", "model preset: full | desk | micro (default desk)");
  bind("--mel-kind", "mel_kind", "conditioning features: mel | log_mel");
  bind("--max-iters", "max_iters", "training iterations (default 1000)");
  bind("--batch-size", "batch_size", "segments per step (default 2)");
  bind("--segment-length", "segment_length", "crop length in samples (default 16384)");
  bind("--lr", "lr", "generator learning rate (default 2e-4)");
  bind("--lr-d", "lr_d", "discriminator learning rate (default 2e-4)");
  bind("--grad-clip", "grad_clip", "global gradient-norm clip, <= 0 disables (default 100)");
  bind("--ckpt-every", "checkpoint_every", "checkpoint interval in iterations (default 0 = end only)");
  bind("--augment-cond", "noise_augment", "on | off: gan-stage conditioning noise (default off)");
  bind("--augment-coeff", "augment_coeff", "conditioning noise coefficient (default 0.2)");
  bind("--n-steps", "n_steps", "gan stage: sampler steps in {1,2,4} (default 1)");
  cmd->add_option("--metrics-name", args.metrics_name, "metrics log file name")
      ->capture_default_str();
  cmd->add_option("--dev-fraction", args.dev_fraction, "held-out fraction of the corpus")
      ->capture_default_str();
  cmd->add_option("--resume", args.resume, "checkpoint to continue training from");
}

void run_training_command(const char* name, train::Stage stage, const TrainArgs& args) {
  train::TrainConfig cfg = resolve_train_config(args, stage);
  const std::string default_ckpt = stage == train::Stage::fm ? "fm.ckpt" : "gan.ckpt";
  const std::string ckpt_name = args.ckpt_name.empty() ? default_ckpt : args.ckpt_name;

  std::cout << "[" << name << "]\n"
            << train::describe_config(cfg) << "dev_fraction = " << args.dev_fraction << "\n"
            << "resume = " << args.resume << "\n"
            << "checkpoint = " << ckpt_name << "\n"
            << "metrics = " << args.metrics_name << "\n";

  train::TrainState st = [&] {
    if (!args.resume.empty()) {
      train::TrainState loaded = train::load_checkpoint(args.resume);
      if (loaded.cfg.stage != stage)
        throw ConfigError("--resume checkpoint is for stage " + train::to_string(loaded.cfg.stage));
      return loaded;
    }
    return stage == train::Stage::fm ? train::init_fm_state(cfg)
                                     : train::init_gan_state(cfg, cfg.init_from);
  }();

  const auto manifest = load_manifest_for(st.cfg.data_dir.empty() ? cfg.data_dir : st.cfg.data_dir);
  auto [train_m, dev_m] = data::split_manifest(manifest, args.dev_fraction);
  const data::LoadedDataset ds = data::load_dataset(train_m, st.model_cfg);
  std::cout << "clips: train = " << train_m.entries.size() << ", dev = " << dev_m.entries.size()
            << "\n"
            << "generator params = " << st.store.total_params("gen.") << "\n";
  if (st.opt_d) std::cout << "discriminator params = " << st.store.total_params("disc.") << "\n";

  const std::string out_dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  const fs::path metrics = output_path(out_dir, args.metrics_name);
  const fs::path ckpt = output_path(out_dir, ckpt_name);
  train::train_loop(st, ds, metrics.string(), ckpt.string());
  std::cout << "final checkpoint: " << ckpt.string() << "\n";
}

// --- subcommand argument bundles ---

struct ToyArgs {
  std::string out_dir;
  int n_clips = 16;
  double clip_seconds = 1.0;
  int sample_rate = 24000;
  double silence_fraction = 0.2;
  uint64_t seed = 0;
  int align = 256;
};

void run_make_toy_data(const ToyArgs& a) {
  std::cout << "[make-toy-data]\n"
            << "out_dir = " << a.out_dir << "\n"
            << "n_clips = " << a.n_clips << "\n"
            << "clip_seconds = " << a.clip_seconds << "\n"
            << "sample_rate = " << a.sample_rate << "\n"
            << "silence_fraction = " << a.silence_fraction << "\n"
            << "seed = " << a.seed << "\n"
            << "align = " << a.align << "\n";
  data::ToySpec spec;
  spec.n_clips = a.n_clips;
  spec.clip_seconds = a.clip_seconds;
  spec.sample_rate = a.sample_rate;
  spec.min_silence_fraction = a.silence_fraction;
  spec.seed = a.seed;
  spec.align = a.align;
  const auto manifest = data::synth_toy_corpus(spec, a.out_dir);
  std::cout << "wrote " << manifest.entries.size() << " clips and manifest.tsv under "
            << a.out_dir << "\n";
}

struct SampleArgs {
  std::string ckpt;
  std::string cond;
  std::string out;
  std::string out_dir = ".";
  int steps = 1;
  uint64_t seed = 0;
  bool pcm16 = false;
  bool spectrogram = false;
};

void run_sample(const SampleArgs& a) {
  std::cout << "[sample]\n"
            << "ckpt = " << a.ckpt << "\n"
            << "cond = " << a.cond << "\n"
            << "out = " << a.out << "\n"
            << "out_dir = " << a.out_dir << "\n"
            << "steps = " << a.steps << "\n"
            << "seed = " << a.seed << "\n"
            << "pcm16 = " << (a.pcm16 ? "true" : "false") << "\n"
            << "spectrogram = " << (a.spectrogram ? "true" : "false") << "\n";

  const train::TrainState st = train::load_checkpoint(a.ckpt);
  Waveform cond_wav = dsp::read_wav(a.cond);
  if (cond_wav.sample_rate != st.model_cfg.sample_rate)
    throw InputError("conditioning sample rate " + std::to_string(cond_wav.sample_rate) +
                     " does not match the model's " + std::to_string(st.model_cfg.sample_rate));
  cond_wav = data::pad_to_multiple(cond_wav, st.model_cfg.cond_spectral.hop);
  const ConditionGrid cond = data::extract_condition(cond_wav, st.model_cfg);

  Rng rng(a.seed);
  Tensor x0 = Tensor::zeros({cond_wav.length()});
  for (auto& v : x0.data) v = rng.gaussian();

  ad::NoGradGuard no_grad;
  const model::Generator gen(st.model_cfg, &st.store);
  const ad::Value cond_enc = gen.encode_condition(cond.features);
  const flow::ModelFn fn = [&](const ad::Value& x, double t) {
    return gen.forward(x, t, cond_enc);
  };
  const auto schedule = flow::uniform_schedule(a.steps);
  const ad::Value y = st.cfg.loss_mode == flow::LossMode::velocity
                          ? flow::euler_sample_velocity(fn, ad::Value::constant(x0), schedule)
                          : flow::euler_sample_endpoint(fn, ad::Value::constant(x0), schedule);
  Waveform est;
  est.sample_rate = st.model_cfg.sample_rate;
  est.samples = y.val().data;

  const fs::path out = output_path(a.out_dir, a.out);
  if (a.pcm16)
    dsp::write_wav_pcm16(out.string(), est, true, a.seed);
  else
    dsp::write_wav_float32(out.string(), est);
  if (a.spectrogram)
    eval::write_spectrogram_pgm(out.string() + ".pgm", est, st.model_cfg.cond_spectral);
  std::cout << "wrote " << out.string() << " (" << est.length() << " samples)\n";
}

struct EvalArgs {
  std::string ckpt;
  std::string data_dir;
  std::string out_dir = ".";
  std::string split = "dev";
  std::string steps_list = "1,2,4";  // step-sweep only
  int steps = 2;
  uint64_t seed = 0;
  double dev_fraction = 0.25;
};

void run_eval(const EvalArgs& a) {
  std::cout << "[eval]\n"
            << "ckpt = " << a.ckpt << "\n"
            << "data_dir = " << a.data_dir << "\n"
            << "out_dir = " << a.out_dir << "\n"
            << "split = " << a.split << "\n"
            << "steps = " << a.steps << "\n"
            << "seed = " << a.seed << "\n"
            << "dev_fraction = " << a.dev_fraction << "\n";
  const train::TrainState st = train::load_checkpoint(a.ckpt);
  const auto manifest = select_split(load_manifest_for(a.data_dir), a.split, a.dev_fraction);
  const data::LoadedDataset ds = data::load_dataset(manifest, st.model_cfg);
  const eval::MetricReport report =
      eval::evaluate(st, ds, flow::uniform_schedule(a.steps), a.seed);
  std::cout << eval::format_report(report);
  const fs::path out = output_path(a.out_dir, "report.jsonl");
  append_line(out.string(),
              eval::report_jsonl("eval steps=" + std::to_string(a.steps) + " seed=" +
                                     std::to_string(a.seed) + " split=" + a.split,
                                 report));
  std::cout << "appended " << out.string() << "\n";
}

void run_step_sweep(const EvalArgs& a) {
  std::cout << "[step-sweep]\n"
            << "ckpt = " << a.ckpt << "\n"
            << "data_dir = " << a.data_dir << "\n"
            << "out_dir = " << a.out_dir << "\n"
            << "split = " << a.split << "\n"
            << "steps = " << a.steps_list << "\n"
            << "seed = " << a.seed << "\n"
            << "dev_fraction = " << a.dev_fraction << "\n";
  std::vector<int> steps;
  for (const auto& s : split_commas(a.steps_list)) {
    try {
      steps.push_back(std::stoi(s));
    } catch (const std::exception&) {
      throw ConfigError("--steps expects a comma-separated integer list, got '" + s + "'");
    }
  }
  const train::TrainState st = train::load_checkpoint(a.ckpt);
  const auto manifest = select_split(load_manifest_for(a.data_dir), a.split, a.dev_fraction);
  const data::LoadedDataset ds = data::load_dataset(manifest, st.model_cfg);
  const auto rows = eval::step_sweep(st, ds, steps, a.seed);
  std::cout << eval::format_sweep_table(rows);
  const fs::path out = output_path(a.out_dir, "sweep.jsonl");
  for (const auto& [n, r] : rows)
    append_line(out.string(), eval::report_jsonl("steps=" + std::to_string(n), r));
  std::cout << "appended " << out.string() << "\n";
}

struct AblateArgs {
  TrainArgs train;
  std::string modes =
      "velocity,endpoint_plain,endpoint_tfactor,endpoint_perframe,endpoint_spectral";
  int64_t budget = 2000;
  int eval_steps = 2;
};

void run_ablate(const AblateArgs& a) {
  train::TrainConfig base = resolve_train_config(a.train, train::Stage::fm);
  std::vector<flow::LossMode> modes;
  for (const auto& m : split_commas(a.modes)) modes.push_back(flow::parse_loss_mode(m));

  std::cout << "[ablate]\n"
            << train::describe_config(base) << "modes = " << a.modes << "\n"
            << "budget = " << a.budget << "\n"
            << "eval_steps = " << a.eval_steps << "\n"
            << "dev_fraction = " << a.train.dev_fraction << "\n";

  const auto manifest = load_manifest_for(base.data_dir);
  auto [train_m, dev_m] = data::split_manifest(manifest, a.train.dev_fraction);
  const model::ModelConfig mcfg = train::make_model_config(base);
  const data::LoadedDataset train_ds = data::load_dataset(train_m, mcfg);
  const data::LoadedDataset dev_ds = data::load_dataset(dev_m, mcfg);

  const auto rows =
      eval::ablation_matrix(base, train_ds, dev_ds, modes, a.budget, a.eval_steps, base.seed);
  const std::string table = eval::format_ablation_table(rows);
  std::cout << table;

  const std::string out_dir = base.out_dir.empty() ? "." : base.out_dir;
  const fs::path table_path = output_path(out_dir, "ablation.txt");
  std::ofstream tf(table_path, std::ios::trunc);
  if (!tf) throw IoError("cannot open table file: " + table_path.string());
  tf << table;
  const fs::path jsonl = output_path(out_dir, "ablation.jsonl");
  for (const auto& row : rows)
    append_line(jsonl.string(), eval::report_jsonl("mode=" + flow::to_string(row.mode), row.report));
  std::cout << "wrote " << table_path.string() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"flow2gan: flow-matching pre-training and GAN fine-tuning for audio generation"};
  app.require_subcommand(1);

  ToyArgs toy;
  auto* toy_cmd = app.add_subcommand("make-toy-data", "synthesize the deterministic toy corpus");
  toy_cmd->add_option("--out-dir", toy.out_dir, "corpus output directory")->required();
  toy_cmd->add_option("--n-clips", toy.n_clips, "number of clips")->capture_default_str();
  toy_cmd->add_option("--clip-seconds", toy.clip_seconds, "clip duration")->capture_default_str();
  toy_cmd->add_option("--sample-rate", toy.sample_rate, "sample rate")->capture_default_str();
  toy_cmd->add_option("--silence-fraction", toy.silence_fraction, "minimum exact-zero fraction")
      ->capture_default_str();
  toy_cmd->add_option("--seed", toy.seed, "corpus seed")->capture_default_str();
  toy_cmd->add_option("--align", toy.align, "round clip length up to this multiple")
      ->capture_default_str();

  TrainArgs fm_args;
  auto* fm_cmd = app.add_subcommand("train-fm", "stage 1: flow-matching pre-training");
  add_train_overrides(fm_cmd, fm_args);
  fm_cmd->add_option("--ckpt-name", fm_args.ckpt_name, "checkpoint file name (default fm.ckpt)");

  TrainArgs gan_args;
  auto* gan_cmd = app.add_subcommand("finetune-gan", "stage 2: adversarial fine-tuning");
  add_train_overrides(gan_cmd, gan_args);
  gan_cmd->add_option("--ckpt-name", gan_args.ckpt_name, "checkpoint file name (default gan.ckpt)");
  gan_cmd->add_option_function<std::string>(
      "--init-from",
      [&gan_args](const std::string& v) { gan_args.overrides["init_from"] = v; },
      "stage-1 checkpoint to fine-tune");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "generate audio from a checkpoint");
  sample_cmd->add_option("--ckpt", sample.ckpt, "model checkpoint")->required();
  sample_cmd->add_option("--cond", sample.cond, "conditioning WAV file")->required();
  sample_cmd->add_option("--out", sample.out, "output WAV name")->required();
  sample_cmd->add_option("--out-dir", sample.out_dir, "output directory")->capture_default_str();
  sample_cmd->add_option("--steps", sample.steps, "sampler steps")->capture_default_str();
  sample_cmd->add_option("--seed", sample.seed, "noise seed")->capture_default_str();
  sample_cmd->add_flag("--pcm16", sample.pcm16, "write dithered 16-bit PCM instead of float32");
  sample_cmd->add_flag("--spectrogram", sample.spectrogram, "also write a PGM spectrogram");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint against ground truth");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data-dir", eval_args.data_dir, "corpus directory or manifest")
      ->required();
  eval_cmd->add_option("--out-dir", eval_args.out_dir, "report directory")->capture_default_str();
  eval_cmd->add_option("--split", eval_args.split, "train | dev | all")->capture_default_str();
  eval_cmd->add_option("--steps", eval_args.steps, "sampler steps")->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed, "noise seed")->capture_default_str();
  eval_cmd->add_option("--dev-fraction", eval_args.dev_fraction, "held-out fraction")
      ->capture_default_str();

  EvalArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("step-sweep", "paired metrics across step counts");
  sweep_cmd->add_option("--ckpt", sweep_args.ckpt, "model checkpoint")->required();
  sweep_cmd->add_option("--data-dir", sweep_args.data_dir, "corpus directory or manifest")
      ->required();
  sweep_cmd->add_option("--out-dir", sweep_args.out_dir, "report directory")
      ->capture_default_str();
  sweep_cmd->add_option("--split", sweep_args.split, "train | dev | all")->capture_default_str();
  sweep_cmd->add_option("--steps", sweep_args.steps_list, "comma-separated step counts")
      ->capture_default_str();
  sweep_cmd->add_option("--seed", sweep_args.seed, "noise seed")->capture_default_str();
  sweep_cmd->add_option("--dev-fraction", sweep_args.dev_fraction, "held-out fraction")
      ->capture_default_str();

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and rank loss modes under one budget");
  add_train_overrides(ablate_cmd, ablate.train);
  ablate_cmd->add_option("--modes", ablate.modes, "comma-separated loss modes")
      ->capture_default_str();
  ablate_cmd->add_option("--budget", ablate.budget, "training iterations per mode")
      ->capture_default_str();
  ablate_cmd->add_option("--eval-steps", ablate.eval_steps, "sampler steps for scoring")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (*toy_cmd) return guarded([&] { run_make_toy_data(toy); });
  if (*fm_cmd) return guarded([&] { run_training_command("train-fm", train::Stage::fm, fm_args); });
  if (*gan_cmd)
    return guarded([&] { run_training_command("finetune-gan", train::Stage::gan, gan_args); });
  if (*sample_cmd) return guarded([&] { run_sample(sample); });
  if (*eval_cmd) return guarded([&] { run_eval(eval_args); });
  if (*sweep_cmd) return guarded([&] { run_step_sweep(sweep_args); });
  if (*ablate_cmd) return guarded([&] { run_ablate(ablate); });
  return 1;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.emplace_back("flow2gan");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace flow2gan::cli
