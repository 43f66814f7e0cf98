// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "flow2gan/backbone/model.hpp"
#include "flow2gan/core/errors.hpp"
#include "flow2gan/core/rng.hpp"
#include "flow2gan/nn/params.hpp"

using namespace flow2gan;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Closed-form parameter count assembled from the layer shapes alone.
int64_t block_param_count(int64_t dim, int64_t kernel, int64_t ff, int64_t time_dim,
                          int64_t cond_dim) {
  int64_t n = dim * kernel + dim;  // depthwise conv
  n += dim + 1;                    // norm bias + log gain
  if (time_dim > 0) n += 2 * (time_dim * dim + dim);
  if (cond_dim > 0) n += cond_dim * dim + dim;
  n += dim * ff * dim + ff * dim + ff * dim;  // pointwise expand + slopes
  n += ff * dim * dim + dim;                  // pointwise contract
  return n;
}

int64_t generator_param_count(const model::ModelConfig& cfg) {
  int64_t n = 2 * int64_t(cfg.time_dim) * cfg.time_dim + 3 * cfg.time_dim;
  n += int64_t(cfg.cond_input_dim) * cfg.cond_dim + cfg.cond_dim;
  for (int i = 0; i < cfg.cond_layers; ++i)
    n += block_param_count(cfg.cond_dim, cfg.branches[0].kernel, cfg.branches[0].ff_factor, 0, 0);
  for (const auto& b : cfg.branches) {
    const int64_t io = 2 * b.spectral.bins();
    const int64_t e = b.embed_dim;
    n += io * e + e;                              // spectrum input projection
    n += int64_t(cfg.cond_dim) * e + e;           // branch condition projection
    n += int64_t(cfg.time_dim) * e + e;           // branch time projection
    for (int j = 0; j < b.n_layers; ++j)
      n += block_param_count(e, b.kernel, b.ff_factor, cfg.time_dim, cfg.cond_dim);
    n += e * io + io;                             // output head
  }
  return n;
}

/// Micro-preset store with randomized output heads so signals reach the
/// waveform (the stock init deliberately emits silence).
nn::ParameterStore live_micro_store(const model::ModelConfig& cfg, uint64_t seed) {
  nn::ParameterStore store;
  Rng rng(seed);
  model::init_generator_params(cfg, store, rng);
  for (const auto& [name, value] : store.items()) {
    if (name.find(".out.") == std::string::npos) continue;
    ad::Value v = value;
    for (auto& x : v.mutable_value().data) x = rng.uniform(-0.05, 0.05);
  }
  return store;
}

}  // namespace

TEST_CASE("condition kind names round-trip") {
  for (auto k : {model::CondKind::mel, model::CondKind::log_mel, model::CondKind::generic})
    CHECK(model::parse_cond_kind(model::to_string(k)) == k);
  CHECK_THROWS_AS(model::parse_cond_kind("spectro"), ConfigError);
}

TEST_CASE("presets validate and expose the documented hop ladder") {
  for (const char* name : {"full", "desk", "micro"}) {
    const model::ModelConfig cfg = model::ModelConfig::by_name(name);
    cfg.validate();
    CHECK(cfg.preset_name == name);
    REQUIRE(cfg.branches.size() == 3);
    CHECK(cfg.upsample_factor(0) == 1);
    CHECK(cfg.upsample_factor(1) == 2);
    CHECK(cfg.upsample_factor(2) == 4);
    CHECK(cfg.largest_hop() == cfg.branches[0].spectral.hop);
    CHECK(cfg.cond_spectral.hop == cfg.largest_hop());
  }
  CHECK_THROWS_AS(model::ModelConfig::by_name("tiny"), ConfigError);
}

TEST_CASE("config validation rejects broken architectures") {
  model::ModelConfig cfg = model::ModelConfig::micro_preset();
  cfg.branches.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = model::ModelConfig::micro_preset();
  cfg.branches[1].kernel = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = model::ModelConfig::micro_preset();
  cfg.branches[2].spectral.hop = 2;  // 8:1 ratio
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = model::ModelConfig::micro_preset();
  cfg.cond_spectral.hop = 8;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = model::ModelConfig::micro_preset();
  cfg.time_dim = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("registered parameters match the closed-form count") {
  for (const char* name : {"micro", "desk"}) {
    const model::ModelConfig cfg = model::ModelConfig::by_name(name);
    nn::ParameterStore store;
    Rng rng(3);
    model::init_generator_params(cfg, store, rng);
    CHECK(store.total_params() == generator_param_count(cfg));
    CHECK(store.total_params("gen.") == store.total_params());
  }
}

TEST_CASE("full preset parameter count sits in the published band") {
  const int64_t n = generator_param_count(model::ModelConfig::full_preset());
  CHECK(n > int64_t(78.9e6 * 0.9));
  CHECK(n < int64_t(78.9e6 * 1.1));
  // Presets order by capacity.
  CHECK(generator_param_count(model::ModelConfig::desk_preset()) < n);
  CHECK(generator_param_count(model::ModelConfig::micro_preset()) <
        generator_param_count(model::ModelConfig::desk_preset()));
}

TEST_CASE("sinusoidal time embedding is bounded and injective over the grid") {
  const Tensor a = model::sinusoidal_embedding(0.3, 16);
  REQUIRE(a.shape == std::vector<int64_t>{1, 16});
  for (double v : a.data) CHECK(std::abs(v) <= 1.0 + 1e-12);
  const Tensor b = model::sinusoidal_embedding(0.7, 16);
  double diff = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) diff += std::abs(a.data[i] - b.data[i]);
  CHECK(diff > 1e-3);
  CHECK_THROWS_AS(model::sinusoidal_embedding(-0.1, 16), InputError);
  CHECK_THROWS_AS(model::sinusoidal_embedding(1.5, 16), InputError);
}

TEST_CASE("untrained generator emits exact silence") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  nn::ParameterStore store;
  Rng rng(5);
  model::init_generator_params(cfg, store, rng);
  const model::Generator gen(cfg, &store);

  Rng data_rng(6);
  const Tensor xt = random_tensor({64}, data_rng);
  const Tensor cond = random_tensor({4, cfg.cond_input_dim}, data_rng);
  const ad::Value y = gen.forward(ad::Value::constant(xt), 0.5, gen.encode_condition(cond));
  REQUIRE(y.val().shape == std::vector<int64_t>{64});
  for (double v : y.val().data) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and shape-preserving") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  const nn::ParameterStore store = live_micro_store(cfg, 7);
  const model::Generator gen(cfg, &store);

  Rng data_rng(8);
  const Tensor xt = random_tensor({128}, data_rng);
  const Tensor cond = random_tensor({8, cfg.cond_input_dim}, data_rng);

  const ad::Value enc = gen.encode_condition(cond);
  REQUIRE(enc.val().shape == std::vector<int64_t>{8, cfg.cond_dim});
  const ad::Value y1 = gen.forward(ad::Value::constant(xt), 0.25, enc);
  const ad::Value y2 = gen.forward(ad::Value::constant(xt), 0.25, enc);
  REQUIRE(y1.val().shape == std::vector<int64_t>{128});
  for (size_t i = 0; i < y1.val().data.size(); ++i)
    CHECK(y1.val().data[i] == y2.val().data[i]);
  bool nonzero = false;
  for (double v : y1.val().data) {
    CHECK(std::isfinite(v));
    if (v != 0.0) nonzero = true;
  }
  CHECK(nonzero);
}

TEST_CASE("time and condition inputs steer the output") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  const nn::ParameterStore store = live_micro_store(cfg, 9);
  const model::Generator gen(cfg, &store);

  Rng data_rng(10);
  const Tensor xt = random_tensor({64}, data_rng);
  const Tensor cond_a = random_tensor({4, cfg.cond_input_dim}, data_rng);
  const Tensor cond_b = random_tensor({4, cfg.cond_input_dim}, data_rng);

  const ad::Value base = gen.forward(ad::Value::constant(xt), 0.2, gen.encode_condition(cond_a));
  const ad::Value other_cond =
      gen.forward(ad::Value::constant(xt), 0.2, gen.encode_condition(cond_b));
  const ad::Value other_t =
      gen.forward(ad::Value::constant(xt), 0.8, gen.encode_condition(cond_a));

  auto l1 = [](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s;
  };
  CHECK(l1(base.val(), other_cond.val()) > 1e-9);
  CHECK(l1(base.val(), other_t.val()) > 1e-9);
}

TEST_CASE("forward validates lengths and condition frames") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  nn::ParameterStore store;
  Rng rng(11);
  model::init_generator_params(cfg, store, rng);
  const model::Generator gen(cfg, &store);

  Rng data_rng(12);
  const Tensor cond = random_tensor({4, cfg.cond_input_dim}, data_rng);
  const ad::Value enc = gen.encode_condition(cond);
  CHECK_THROWS_AS(
      gen.forward(ad::Value::constant(random_tensor({63}, data_rng)), 0.5, enc), InputError);
  CHECK_THROWS_AS(
      gen.forward(ad::Value::constant(random_tensor({128}, data_rng)), 0.5, enc), InputError);
  CHECK_THROWS_AS(gen.encode_condition(random_tensor({4, 5}, data_rng)), ConfigError);
}

TEST_CASE("generator gradients reach every trainable tensor") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  const nn::ParameterStore store = live_micro_store(cfg, 13);
  const model::Generator gen(cfg, &store);

  Rng data_rng(14);
  const Tensor xt = random_tensor({64}, data_rng);
  const Tensor cond = random_tensor({4, cfg.cond_input_dim}, data_rng);
  const Tensor probe = random_tensor({64}, data_rng);

  ad::Value y = gen.forward(ad::Value::constant(xt), 0.4, gen.encode_condition(cond));
  ad::backward(ad::sum_mul(y, probe));

  int64_t with_grad = 0, nonzero = 0, total = 0;
  for (const auto& [name, value] : store.items()) {
    ++total;
    if (!value.has_grad()) continue;
    ++with_grad;
    for (double g : value.grad().data)
      if (g != 0.0) {
        ++nonzero;
        break;
      }
  }
  CHECK(with_grad == total);
  // The odd dead tensor is fine (zero-init gates), but the bulk must be live.
  CHECK(nonzero > total * 9 / 10);
}

TEST_CASE("generator gradients match finite differences at sampled coordinates") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  nn::ParameterStore store = live_micro_store(cfg, 15);
  const model::Generator gen(cfg, &store);

  Rng data_rng(16);
  const Tensor xt = random_tensor({64}, data_rng);
  const Tensor cond = random_tensor({4, cfg.cond_input_dim}, data_rng);
  const Tensor probe = random_tensor({64}, data_rng);

  auto loss_value = [&]() {
    ad::NoGradGuard guard;
    return ad::sum_mul(gen.forward(ad::Value::constant(xt), 0.4, gen.encode_condition(cond)),
                       probe)
        .scalar_value();
  };

  ad::Value loss =
      ad::sum_mul(gen.forward(ad::Value::constant(xt), 0.4, gen.encode_condition(cond)), probe);
  ad::backward(loss);

  const double h = 1e-5;
  for (const char* name : {"gen.branch0.block0.dwconv.w", "gen.branch1.block0.film_s.w",
                           "gen.branch2.block0.cond.w", "gen.cond.block0.pw1.w",
                           "gen.time.mlp1.w", "gen.branch0.out.w"}) {
    ad::Value p = store.get(name);
    REQUIRE(p.has_grad());
    for (size_t i = 0; i < p.val().data.size(); i += std::max<size_t>(1, p.val().data.size() / 3)) {
      const double orig = p.val().data[i];
      p.mutable_value().data[i] = orig + h;
      const double fp = loss_value();
      p.mutable_value().data[i] = orig - h;
      const double fm = loss_value();
      p.mutable_value().data[i] = orig;
      const double num = (fp - fm) / (2 * h);
      CHECK(std::abs(p.grad().data[i] - num) <= 2e-5 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST_CASE("branch outputs sum to the full forward pass") {
  const model::ModelConfig cfg = model::ModelConfig::micro_preset();
  const nn::ParameterStore store = live_micro_store(cfg, 17);
  const model::Generator gen(cfg, &store);

  Rng data_rng(18);
  const Tensor xt = random_tensor({64}, data_rng);
  const Tensor cond = random_tensor({4, cfg.cond_input_dim}, data_rng);
  const ad::Value enc = gen.encode_condition(cond);
  const ad::Value tf = gen.time_features(0.3);
  REQUIRE(tf.val().shape == std::vector<int64_t>{1, cfg.time_dim});

  Tensor acc = Tensor::zeros({64});
  for (size_t b = 0; b < cfg.branches.size(); ++b) {
    const ad::Value yb = gen.branch_forward(ad::Value::constant(xt), enc, tf, b);
    REQUIRE(yb.val().shape == std::vector<int64_t>{64});
    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += yb.val().data[i];
  }
  const ad::Value y = gen.forward(ad::Value::constant(xt), 0.3, enc);
  for (size_t i = 0; i < acc.data.size(); ++i)
    CHECK(y.val().data[i] == doctest::Approx(acc.data[i]).epsilon(1e-12));
}
