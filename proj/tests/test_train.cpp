// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "flow2gan/core/errors.hpp"
#include "flow2gan/data/data.hpp"
#include "flow2gan/train/train.hpp"

using namespace flow2gan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("flow2gan_train_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Micro-scale flow-matching config against a freshly synthesized corpus.
train::TrainConfig micro_fm_config(const fs::path& data_dir, int64_t segment = 256) {
  train::TrainConfig cfg;
  cfg.stage = train::Stage::fm;
  cfg.preset = "micro";
  cfg.segment_length = segment;
  cfg.batch_size = 2;
  cfg.max_iters = 8;
  cfg.lr = 1e-3;
  cfg.data_dir = data_dir.string();
  cfg.out_dir = data_dir.string();
  return cfg;
}

data::LoadedDataset micro_dataset(const fs::path& dir, int n_clips = 3,
                                  double seconds = 0.5) {
  data::ToySpec spec;
  spec.n_clips = n_clips;
  spec.sample_rate = 8000;
  spec.clip_seconds = seconds;
  spec.align = 16;
  spec.seed = 11;
  const data::DatasetManifest m = data::synth_toy_corpus(spec, dir.string());
  return data::load_dataset(m, model::ModelConfig::micro_preset());
}

}  // namespace

TEST_CASE("stage names round-trip") {
  CHECK(train::parse_stage("fm") == train::Stage::fm);
  CHECK(train::parse_stage("gan") == train::Stage::gan);
  CHECK(train::to_string(train::Stage::gan) == "gan");
  CHECK_THROWS_AS(train::parse_stage("warmup"), ConfigError);
}

TEST_CASE("config validation rejects out-of-range settings") {
  train::TrainConfig ok;
  ok.validate();

  auto expect_bad = [](auto mutate) {
    train::TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  expect_bad([](auto& c) { c.batch_size = 0; });
  expect_bad([](auto& c) { c.segment_length = 0; });
  expect_bad([](auto& c) { c.lr = 0.0; });
  expect_bad([](auto& c) { c.lr_d = -1.0; });
  expect_bad([](auto& c) { c.beta1 = 1.0; });
  expect_bad([](auto& c) { c.beta2 = -0.1; });
  expect_bad([](auto& c) { c.weight_decay = -1e-9; });
  expect_bad([](auto& c) { c.max_iters = 0; });
  expect_bad([](auto& c) { c.augment_coeff = -0.5; });
  expect_bad([](auto& c) { c.checkpoint_every = -1; });
  expect_bad([](auto& c) {
    c.stage = train::Stage::gan;
    c.n_steps = 3;
  });
  // Step counts outside {1,2,4} only matter for the gan sampler.
  train::TrainConfig fm;
  fm.n_steps = 3;
  fm.validate();
}

TEST_CASE("key = value parsing handles comments, blanks, and duplicates") {
  const auto kv = train::parse_kv_text(
      "# full line comment\n"
      "\n"
      "lr = 1e-3   # trailing comment\n"
      "  preset=micro\n"
      "out_dir = /tmp/a=b\n"
      "lr = 5e-4\n");
  CHECK(kv.at("lr") == "5e-4");
  CHECK(kv.at("preset") == "micro");
  CHECK(kv.at("out_dir") == "/tmp/a=b");
  CHECK(kv.size() == 3);

  CHECK_THROWS_WITH_AS(train::parse_kv_text("lr\n"),
                       doctest::Contains("line 1"), ConfigError);
  CHECK_THROWS_WITH_AS(train::parse_kv_text("a = 1\n= bad\n"),
                       doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_AS(train::parse_kv_file("/nonexistent/path.cfg"), IoError);
}

TEST_CASE("described configs parse back to the same settings") {
  train::TrainConfig cfg;
  cfg.stage = train::Stage::gan;
  cfg.loss_mode = flow::LossMode::endpoint_tfactor;
  cfg.n_steps = 4;
  cfg.batch_size = 7;
  cfg.segment_length = 4096;
  cfg.lr = 3e-4;
  cfg.lr_d = 1.5e-4;
  cfg.beta1 = 0.5;
  cfg.beta2 = 0.999;
  cfg.weight_decay = 0.01;
  cfg.max_iters = 1234;
  cfg.seed = 99;
  cfg.noise_augment = true;
  cfg.augment_coeff = 0.3;
  cfg.checkpoint_every = 50;
  cfg.grad_clip = 10.0;
  cfg.cosine_decay = false;
  cfg.preset = "micro";
  cfg.mel_kind = "log_mel";
  cfg.data_dir = "/tmp/data";
  cfg.out_dir = "/tmp/out";
  cfg.init_from = "/tmp/fm.ckpt";

  train::TrainConfig back;
  train::apply_options(back, train::parse_kv_text(train::describe_config(cfg)));
  CHECK(back.stage == cfg.stage);
  CHECK(back.loss_mode == cfg.loss_mode);
  CHECK(back.n_steps == cfg.n_steps);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.segment_length == cfg.segment_length);
  CHECK(back.lr == cfg.lr);
  CHECK(back.lr_d == cfg.lr_d);
  CHECK(back.beta1 == cfg.beta1);
  CHECK(back.beta2 == cfg.beta2);
  CHECK(back.weight_decay == cfg.weight_decay);
  CHECK(back.max_iters == cfg.max_iters);
  CHECK(back.seed == cfg.seed);
  CHECK(back.noise_augment == cfg.noise_augment);
  CHECK(back.augment_coeff == cfg.augment_coeff);
  CHECK(back.checkpoint_every == cfg.checkpoint_every);
  CHECK(back.grad_clip == cfg.grad_clip);
  CHECK(back.cosine_decay == cfg.cosine_decay);
  CHECK(back.preset == cfg.preset);
  CHECK(back.mel_kind == cfg.mel_kind);
  CHECK(back.data_dir == cfg.data_dir);
  CHECK(back.out_dir == cfg.out_dir);
  CHECK(back.init_from == cfg.init_from);
}

TEST_CASE("unknown keys and unparsable values name the offender") {
  train::TrainConfig cfg;
  CHECK_THROWS_WITH_AS(train::apply_option(cfg, "learning_rate", "1e-3"),
                       doctest::Contains("learning_rate"), ConfigError);
  CHECK_THROWS_WITH_AS(train::apply_option(cfg, "max_iters", "many"),
                       doctest::Contains("max_iters"), ConfigError);
  CHECK_THROWS_WITH_AS(train::apply_option(cfg, "lr", "fast"),
                       doctest::Contains("lr"), ConfigError);
  CHECK_THROWS_AS(train::apply_option(cfg, "noise_augment", "maybe"), ConfigError);
  CHECK_THROWS_AS(train::apply_option(cfg, "batch_size", "2.5"), ConfigError);
}

TEST_CASE("model config resolution honors the mel kind override") {
  train::TrainConfig cfg;
  cfg.preset = "micro";
  CHECK(train::make_model_config(cfg).cond_feature_kind == model::CondKind::mel);
  cfg.mel_kind = "log_mel";
  CHECK(train::make_model_config(cfg).cond_feature_kind == model::CondKind::log_mel);
  cfg.mel_kind = "loud";
  CHECK_THROWS_AS(train::make_model_config(cfg), ConfigError);
  cfg.mel_kind = "";
  cfg.preset = "enormous";
  CHECK_THROWS_AS(train::make_model_config(cfg), ConfigError);
}

TEST_CASE("fm state initialization wires the generator and its optimizer") {
  const fs::path dir = temp_dir("fm_init");
  train::TrainConfig cfg = micro_fm_config(dir);
  train::TrainState st = train::init_fm_state(cfg);
  CHECK(st.store.total_params("gen.") == st.store.total_params());
  CHECK(st.opt_g != nullptr);
  CHECK(st.opt_d == nullptr);
  CHECK(st.iteration == 0);
  CHECK(st.loss_spec.mode == flow::LossMode::endpoint_spectral);
  CHECK(st.loss_spec.has_scale);

  cfg.segment_length = 250;  // not a hop multiple
  CHECK_THROWS_AS(train::init_fm_state(cfg), ConfigError);
  cfg.segment_length = 256;
  cfg.stage = train::Stage::gan;
  CHECK_THROWS_AS(train::init_fm_state(cfg), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("condition augmentation has the documented marginal spread") {
  Rng rng(71);
  const Tensor zeros = Tensor::zeros({8});

  double sum = 0.0, sq = 0.0;
  const int calls = 3000;
  for (int i = 0; i < calls; ++i) {
    const Tensor noisy = train::augment_condition(zeros, 0.2, rng);
    for (double v : noisy.data) {
      sum += v;
      sq += v * v;
    }
  }
  const double n = calls * 8.0;
  const double mean = sum / n;
  const double std_dev = std::sqrt(sq / n - mean * mean);
  const double expected = 0.2 / std::sqrt(3.0);  // coeff * std(u * eps)
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(std_dev - expected) < 0.03 * expected);

  // Disabled augmentation is the identity, and draws nothing from the rng.
  Rng before(72), after(72);
  Tensor feat = Tensor::full({4}, 0.5);
  const Tensor same = train::augment_condition(feat, 0.0, before);
  for (size_t i = 0; i < feat.data.size(); ++i) CHECK(same.data[i] == feat.data[i]);
  CHECK(before.bits() == after.bits());
}

TEST_CASE("batches crop aligned segments with matching conditions") {
  const fs::path dir = temp_dir("batch");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig cfg = micro_fm_config(dir);

  Rng a(5), b(5);
  const train::Batch ba = train::sample_batch(ds, cfg, a);
  const train::Batch bb = train::sample_batch(ds, cfg, b);
  REQUIRE(ba.x1.size() == 2);
  REQUIRE(ba.cond.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(ba.x1[i].shape == std::vector<int64_t>{256});
    CHECK(ba.cond[i].shape == std::vector<int64_t>{16, 6});
    for (size_t j = 0; j < ba.x1[i].data.size(); ++j)
      CHECK(ba.x1[i].data[j] == bb.x1[i].data[j]);
  }
  fs::remove_all(dir);
}

TEST_CASE("flow-matching training reduces the loss on the toy corpus") {
  const fs::path dir = temp_dir("fm_smoke");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig cfg = micro_fm_config(dir);
  cfg.max_iters = 60;
  cfg.cosine_decay = true;
  train::TrainState st = train::init_fm_state(cfg);

  std::vector<double> losses;
  for (int i = 0; i < 60; ++i) {
    const train::Batch batch = train::sample_batch(ds, st.cfg, st.rng);
    losses.push_back(train::fm_train_step(st, batch));
    CHECK(std::isfinite(losses.back()));
  }
  CHECK(st.iteration == 60);
  const double head = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10;
  const double tail = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10;
  CHECK(tail < head);
  fs::remove_all(dir);
}

TEST_CASE("training is reproducible from the seed alone") {
  const fs::path dir = temp_dir("fm_repro");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig cfg = micro_fm_config(dir);

  auto run = [&](uint64_t seed) {
    train::TrainConfig c = cfg;
    c.seed = seed;
    train::TrainState st = train::init_fm_state(c);
    std::vector<double> losses;
    for (int i = 0; i < 4; ++i)
      losses.push_back(train::fm_train_step(st, train::sample_batch(ds, st.cfg, st.rng)));
    return losses;
  };
  const auto a = run(3), b = run(3), c = run(4);
  for (int i = 0; i < 4; ++i) CHECK(a[i] == b[i]);
  bool differs = false;
  for (int i = 0; i < 4; ++i) differs = differs || a[i] != c[i];
  CHECK(differs);
  fs::remove_all(dir);
}

TEST_CASE("checkpoints restore training bit-exactly") {
  const fs::path dir = temp_dir("ckpt");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig cfg = micro_fm_config(dir);
  cfg.cosine_decay = false;  // lr scale independent of max_iters
  train::TrainState st = train::init_fm_state(cfg);
  for (int i = 0; i < 3; ++i)
    train::fm_train_step(st, train::sample_batch(ds, st.cfg, st.rng));

  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();
  train::save_checkpoint(st, p1);
  train::TrainState loaded = train::load_checkpoint(p1);
  train::save_checkpoint(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  CHECK(loaded.iteration == 3);
  CHECK(loaded.cfg.lr == cfg.lr);
  CHECK(loaded.cfg.preset == "micro");
  CHECK(loaded.model_cfg.preset_name == "micro");
  const auto& a = st.store.items();
  const auto& b = loaded.store.items();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    for (size_t j = 0; j < a[i].second.val().data.size(); ++j)
      CHECK(a[i].second.val().data[j] == b[i].second.val().data[j]);
  }

  // Continuing from disk matches continuing in memory, loss for loss.
  for (int i = 0; i < 3; ++i) {
    const double mem = train::fm_train_step(st, train::sample_batch(ds, st.cfg, st.rng));
    const double disk =
        train::fm_train_step(loaded, train::sample_batch(ds, loaded.cfg, loaded.rng));
    CHECK(mem == disk);
  }
  fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected with the failing detail") {
  const fs::path dir = temp_dir("ckpt_bad");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig cfg = micro_fm_config(dir);
  train::TrainState st = train::init_fm_state(cfg);
  const std::string good = (dir / "good.ckpt").string();
  train::save_checkpoint(st, good);
  std::vector<char> bytes = slurp(good);

  CHECK_THROWS_AS(train::load_checkpoint((dir / "missing.ckpt").string()), IoError);

  auto write_bytes = [&](const fs::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  std::vector<char> wrong_magic = bytes;
  wrong_magic[0] = 'X';
  write_bytes(dir / "magic.ckpt", wrong_magic);
  CHECK_THROWS_WITH_AS(train::load_checkpoint((dir / "magic.ckpt").string()),
                       doctest::Contains("not a checkpoint"), IoError);

  std::vector<char> truncated(bytes.begin(), bytes.begin() + 40);
  write_bytes(dir / "trunc.ckpt", truncated);
  CHECK_THROWS_AS(train::load_checkpoint((dir / "trunc.ckpt").string()), IoError);

  std::vector<char> trailing = bytes;
  trailing.push_back('\0');
  write_bytes(dir / "trail.ckpt", trailing);
  CHECK_THROWS_WITH_AS(train::load_checkpoint((dir / "trail.ckpt").string()),
                       doctest::Contains("trailing"), IoError);

  // Rename one tensor inside the header; the loader must call it out.
  std::string text(bytes.begin(), bytes.end());
  const std::string target = "gen.time.mlp1.w";
  const auto pos = text.find(target);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, target.size(), "gen.time.mlpX.w");
  write_bytes(dir / "renamed.ckpt", {text.begin(), text.end()});
  CHECK_THROWS_WITH_AS(train::load_checkpoint((dir / "renamed.ckpt").string()),
                       doctest::Contains("gen.time.mlpX.w"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("train_loop logs one json line per iteration and checkpoints") {
  const fs::path dir = temp_dir("loop");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig cfg = micro_fm_config(dir);
  cfg.max_iters = 5;
  train::TrainState st = train::init_fm_state(cfg);

  const std::string metrics = (dir / "metrics.jsonl").string();
  const std::string ckpt = (dir / "model.ckpt").string();
  train::train_loop(st, ds, metrics, ckpt);
  CHECK(st.iteration == 5);
  CHECK(fs::exists(ckpt));

  std::ifstream in(metrics);
  std::string line;
  int count = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("iter").get<int>() == count + 1);
    CHECK(j.at("stage").get<std::string>() == "fm");
    CHECK(std::isfinite(j.at("loss").get<double>()));
    CHECK(j.at("wall_s").get<double>() >= 0.0);
    ++count;
  }
  CHECK(count == 5);

  CHECK(train::load_checkpoint(ckpt).iteration == 5);
  fs::remove_all(dir);
}

TEST_CASE("gan stage adopts the pretrained generator bitwise") {
  const fs::path dir = temp_dir("gan_init");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig fm_cfg = micro_fm_config(dir, 2048);
  fm_cfg.max_iters = 2;
  fm_cfg.batch_size = 1;
  train::TrainState fm = train::init_fm_state(fm_cfg);
  for (int i = 0; i < 2; ++i)
    train::fm_train_step(fm, train::sample_batch(ds, fm.cfg, fm.rng));
  const std::string fm_ckpt = (dir / "fm.ckpt").string();
  train::save_checkpoint(fm, fm_ckpt);

  train::TrainConfig gan_cfg = fm_cfg;
  gan_cfg.stage = train::Stage::gan;
  gan_cfg.n_steps = 1;
  gan_cfg.init_from = fm_ckpt;
  train::TrainState st = train::init_gan_state(gan_cfg, fm_ckpt);
  CHECK(st.opt_d != nullptr);
  CHECK(st.disc_cfg.n_sub() == 4);
  CHECK(st.store.total_params("disc.") > 0);
  CHECK(st.mel_bank.size() == 7);

  for (const auto& [name, value] : fm.store.items()) {
    const ad::Value mine = st.store.get(name);
    for (size_t j = 0; j < value.val().data.size(); ++j)
      CHECK(mine.val().data[j] == value.val().data[j]);
  }

  CHECK_THROWS_AS(train::init_gan_state(gan_cfg, ""), ConfigError);
  train::TrainConfig wrong = gan_cfg;
  wrong.stage = train::Stage::fm;
  CHECK_THROWS_AS(train::init_gan_state(wrong, fm_ckpt), ConfigError);
  // A gan checkpoint is not a valid handoff source.
  const std::string gan_ckpt = (dir / "gan.ckpt").string();
  train::save_checkpoint(st, gan_ckpt);
  CHECK_THROWS_AS(train::init_gan_state(gan_cfg, gan_ckpt), ConfigError);
  // Noise augmentation needs log-mel features; micro uses plain mel.
  train::TrainConfig aug = gan_cfg;
  aug.noise_augment = true;
  CHECK_THROWS_AS(train::init_gan_state(aug, fm_ckpt), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("adversarial fine-tuning steps run and report coherent losses") {
  const fs::path dir = temp_dir("gan_smoke");
  const data::LoadedDataset ds = micro_dataset(dir);
  train::TrainConfig fm_cfg = micro_fm_config(dir, 2048);
  fm_cfg.max_iters = 2;
  fm_cfg.batch_size = 1;
  train::TrainState fm = train::init_fm_state(fm_cfg);
  for (int i = 0; i < 2; ++i)
    train::fm_train_step(fm, train::sample_batch(ds, fm.cfg, fm.rng));
  const std::string fm_ckpt = (dir / "fm.ckpt").string();
  train::save_checkpoint(fm, fm_ckpt);

  for (int n_steps : {1, 2}) {
    train::TrainConfig gan_cfg = fm_cfg;
    gan_cfg.stage = train::Stage::gan;
    gan_cfg.n_steps = n_steps;
    gan_cfg.max_iters = 3;
    train::TrainState st = train::init_gan_state(gan_cfg, fm_ckpt);

    for (int i = 0; i < 2; ++i) {
      const train::Batch batch = train::sample_batch(ds, st.cfg, st.rng);
      const train::GanLossReport r = train::gan_train_step(st, batch);
      if (i == 0)
        // Zero-initialized score heads: relu(1-0) + relu(1+0) per sub.
        CHECK(r.d_loss == 2.0 * st.disc_cfg.n_sub());
      CHECK(std::isfinite(r.d_loss));
      CHECK(std::isfinite(r.adv));
      CHECK(r.fm >= 0.0);
      CHECK(r.mel >= 0.0);
      CHECK(r.g_total ==
            doctest::Approx(r.adv + 2.0 * r.fm + 45.0 * r.mel).epsilon(1e-12));
    }
    CHECK(st.iteration == 2);
  }
  fs::remove_all(dir);
}
