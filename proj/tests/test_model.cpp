#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "fd_check.hpp"
#include "iaqcast/model.hpp"
#include "iaqcast/objective.hpp"
#include "test_util.hpp"

using namespace iaq;

namespace {

std::vector<double> randu(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("gru: zero input and zero weights give a zero sequence") {
  ModelParams mp;
  Rng rng(1);
  init_gru_params(mp, "gru", 3, 4, rng);
  for (auto& p : mp.all()) std::fill(p.data.begin(), p.data.end(), 0.0);
  Graph g;
  Tensor x = g.constant({6, 3}, 0.0);
  Tensor z = gru_forward(g, mp, "gru", x);
  REQUIRE(z.shape() == Shape{6, 4});
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("gru: a length-1 sequence equals a single cell step") {
  ModelParams mp;
  Rng rng(2);
  init_gru_params(mp, "gru", 3, 4, rng);
  Rng data_rng(3);
  std::vector<double> row = randu(data_rng, 3);
  std::vector<double> two_rows = row;
  auto more = randu(data_rng, 3);
  two_rows.insert(two_rows.end(), more.begin(), more.end());

  Graph g;
  Tensor z1 = gru_forward(g, mp, "gru", g.constant({1, 3}, row));
  Tensor z2 = gru_forward(g, mp, "gru", g.constant({2, 3}, two_rows));
  for (std::size_t j = 0; j < 4; ++j) CHECK(z1.values()[j] == z2.values()[j]);
}

TEST_CASE("gru gradients match finite differences") {
  ModelParams mp;
  Rng rng(4);
  init_gru_params(mp, "gru", 3, 3, rng);
  Rng data_rng(5);
  const std::vector<double> x = randu(data_rng, 5 * 3);

  std::vector<fd::Param> ps;
  for (const auto& p : mp.all()) ps.push_back({p.name, p.shape, p.data});
  auto res = fd::max_rel_error(ps, [&](Graph& g, const std::vector<fd::Param>& pv) {
    ModelParams local;
    for (const auto& p : pv) local.add(p.name, p.shape, p.values);
    return reduce_mean(square(gru_forward(g, local, "gru", g.constant({5, 3}, x))));
  });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("forward output contract") {
  ModelConfig cfg = testutil::tiny_model(10, 3, 6, 2);
  cfg.uncertainty = UncertaintyMode::kHetero;
  ModelParams mp = init_model_params(cfg, 7);
  Rng rng(8);
  std::vector<double> xe = randu(rng, 10 * cfg.env_dim);
  std::vector<double> xa = randu(rng, 10 * cfg.act_dim);

  Graph g;
  ForwardArtifacts art = model_forward(g, cfg, mp, xe, xa);
  CHECK(art.mu.shape() == Shape{3, 2});
  CHECK(art.log_sigma.shape() == Shape{3, 2});
  CHECK(art.y_full.shape() == Shape{10, 2});
  CHECK(art.has_fusion);
  for (double v : art.log_sigma.values()) {
    CHECK(v >= -7.0);
    CHECK(v <= 3.0);
  }
}

TEST_CASE("targets never enter the forward pass") {
  ModelConfig cfg = testutil::tiny_model();
  ModelParams mp = init_model_params(cfg, 9);
  WindowSet ws = testutil::noise_windows(10, 4, 2, cfg.lookback, cfg.horizon, 0.5, 0.5);
  Window w = ws.train[0];

  Graph g1;
  auto mu1 = model_forward(g1, cfg, mp, w.x_env, w.x_act).mu;
  for (auto& v : w.y) v += 100.0;  // mutate targets
  Graph g2;
  auto mu2 = model_forward(g2, cfg, mp, w.x_env, w.x_act).mu;
  for (std::size_t i = 0; i < mu1.numel(); ++i)
    CHECK(mu1.values()[i] == mu2.values()[i]);
}

TEST_CASE("loss gradient never reaches head rows before L-P") {
  ModelConfig cfg = testutil::tiny_model(8, 2, 6, 1);
  ModelParams mp = init_model_params(cfg, 11);
  Rng rng(12);
  std::vector<double> xe = randu(rng, 8 * cfg.env_dim);
  std::vector<double> xa = randu(rng, 8 * cfg.act_dim);

  Graph g;
  ForwardArtifacts art = model_forward(g, cfg, mp, xe, xa);
  Tensor y = g.constant({2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  Tensor loss = mse_loss(art.mu, y);
  g.backward(loss);
  auto grad = art.y_full.grad();
  REQUIRE(grad.size() == 16);
  for (std::size_t i = 0; i < (8 - 2) * 2; ++i) CHECK(grad[i] == 0.0);
  bool tail_nonzero = false;
  for (std::size_t i = (8 - 2) * 2; i < grad.size(); ++i)
    tail_nonzero = tail_nonzero || grad[i] != 0.0;
  CHECK(tail_nonzero);
}

TEST_CASE("env_only ignores the action stream entirely") {
  ModelConfig cfg = testutil::tiny_model(8, 2, 6, 1);
  cfg.variant = Variant::kEnvOnly;
  ModelParams mp = init_model_params(cfg, 13);
  Rng rng(14);
  std::vector<double> xe = randu(rng, 8 * cfg.env_dim);
  std::vector<double> xa1 = randu(rng, 8 * cfg.act_dim);
  std::vector<double> xa2 = randu(rng, 8 * cfg.act_dim);

  Graph g1, g2;
  auto mu1 = model_forward(g1, cfg, mp, xe, xa1).mu;
  auto mu2 = model_forward(g2, cfg, mp, xe, xa2).mu;
  for (std::size_t i = 0; i < mu1.numel(); ++i)
    CHECK(mu1.values()[i] == mu2.values()[i]);
}

TEST_CASE("variant head widths and fusion flags") {
  auto head_rows = [](Variant v, int rounds) {
    ModelConfig cfg = testutil::tiny_model(8, 2, 6, rounds);
    cfg.variant = v;
    ModelParams mp = init_model_params(cfg, 15);
    return mp.at("head.W").shape[0];
  };
  CHECK(head_rows(Variant::kShortOnly, 1) == 6);
  CHECK(head_rows(Variant::kLongOnly, 1) == 6);
  CHECK(head_rows(Variant::kFull, 1) == 12);
  CHECK(head_rows(Variant::kEnvOnly, 1) == 12);

  ModelConfig cfg = testutil::tiny_model(8, 2, 6, 1);
  cfg.variant = Variant::kDirectConcat;
  ModelParams mp = init_model_params(cfg, 16);
  Rng rng(17);
  std::vector<double> xe = randu(rng, 8 * cfg.env_dim);
  std::vector<double> xa = randu(rng, 8 * cfg.act_dim);
  Graph g;
  ForwardArtifacts art = model_forward(g, cfg, mp, xe, xa);
  CHECK_FALSE(art.has_fusion);
  CHECK(art.mu.shape() == Shape{2, 2});
}

TEST_CASE("no_feedback equals full with zero rounds") {
  ModelConfig a = testutil::tiny_model(8, 2, 6, 0);
  a.variant = Variant::kFull;
  ModelConfig b = a;
  b.variant = Variant::kNoFeedback;
  b.feedback_rounds = 3;  // ignored by the variant

  ModelParams pa = init_model_params(a, 18);
  ModelParams pb = init_model_params(b, 18);
  Rng rng(19);
  std::vector<double> xe = randu(rng, 8 * a.env_dim);
  std::vector<double> xa = randu(rng, 8 * a.act_dim);
  Graph g1, g2;
  auto mu1 = model_forward(g1, a, pa, xe, xa).mu;
  auto mu2 = model_forward(g2, b, pb, xe, xa).mu;
  for (std::size_t i = 0; i < mu1.numel(); ++i)
    CHECK(mu1.values()[i] == mu2.values()[i]);
}

TEST_CASE("homo mode broadcasts theta as log sigma") {
  ModelConfig cfg = testutil::tiny_model(8, 3, 6, 1);
  cfg.uncertainty = UncertaintyMode::kHomo;
  ModelParams mp = init_model_params(cfg, 20);
  mp.at("unc.theta").data = {0.25, -0.5};
  Rng rng(21);
  std::vector<double> xe = randu(rng, 8 * cfg.env_dim);
  std::vector<double> xa = randu(rng, 8 * cfg.act_dim);
  Graph g;
  ForwardArtifacts art = model_forward(g, cfg, mp, xe, xa);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(art.log_sigma.values()[j * 2] == 0.25);
    CHECK(art.log_sigma.values()[j * 2 + 1] == -0.5);
  }
}

TEST_CASE("forecast denormalization round-trips") {
  ModelConfig cfg = testutil::tiny_model(8, 2, 6, 1);
  ModelParams mp = init_model_params(cfg, 22);
  Normalizer norm;
  norm.mean = {20, 45, 700, 12};
  norm.sd = {1.5, 4.0, 180.0, 5.0};
  Rng rng(23);
  std::vector<double> xe = randu(rng, 8 * cfg.env_dim);
  std::vector<double> xa = randu(rng, 8 * cfg.act_dim);
  Graph g;
  ForwardArtifacts art = model_forward(g, cfg, mp, xe, xa);
  Forecast f = make_forecast(art, norm);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t k = 0; k < 2; ++k) {
      const std::size_t i = j * 2 + k;
      const double renorm = norm.transform(kTargetChannel[k], f.mu[i]);
      CHECK(std::fabs(renorm - f.mu_norm[i]) < 1e-9);
      CHECK(f.sigma[i] == doctest::Approx(std::exp(f.log_sigma[i]) * norm.target_sd(k)));
    }
  }
}

TEST_CASE("checkpoint round-trip is exact") {
  ModelConfig cfg = testutil::tiny_model(8, 2, 6, 1);
  cfg.uncertainty = UncertaintyMode::kHetero;
  ModelParams mp = init_model_params(cfg, 24);
  Normalizer norm;
  norm.mean = {21, 44, 650, 9};
  norm.sd = {0.5, 3.0, 210.0, 4.0};

  const std::string path = "model_ck_test.bin";
  save_checkpoint(path, cfg, mp, norm, R"({"seed":24})");
  Checkpoint ck = load_checkpoint(path);
  std::remove(path.c_str());

  CHECK(ck.config.hidden == cfg.hidden);
  CHECK(ck.config.variant == cfg.variant);
  CHECK(ck.config.uncertainty == cfg.uncertainty);
  CHECK(ck.run_config_echo == R"({"seed":24})");
  REQUIRE(ck.params.count() == mp.count());
  for (std::size_t i = 0; i < mp.count(); ++i) {
    const auto& a = mp.all()[i];
    const auto& b = ck.params.all()[i];
    CHECK(a.name == b.name);
    REQUIRE(a.data.size() == b.data.size());
    for (std::size_t j = 0; j < a.data.size(); ++j) CHECK(a.data[j] == b.data[j]);
  }
  for (std::size_t c = 0; c < kNumEnvChannels; ++c) {
    CHECK(ck.norm.mean[c] == norm.mean[c]);
    CHECK(ck.norm.sd[c] == norm.sd[c]);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  const std::string path = "model_ck_bad.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("model config equality detects mismatches") {
  ModelConfig a = testutil::tiny_model();
  ModelConfig b = a;
  CHECK(a == b);
  b.hidden = 16;
  CHECK_FALSE(a == b);
}
