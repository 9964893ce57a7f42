#include "sdalr/network.hpp"

#include <gtest/gtest.h>

#include "sdalr/error.hpp"
#include "test_util.hpp"

namespace sdalr {
namespace {

using testing::TempDir;

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.base_channels = 8;
  c.window_len = 256;
  c.feature_dim = 32;
  return c;
}

TEST(Encoder, ReferenceShapes) {
  torch::manual_seed(0);
  ModelState model(EncoderConfig{}, 8);
  model.eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({64, 2048});
  const auto lengths = model.net()->encoder->stage_lengths(x);
  EXPECT_EQ(lengths, (std::vector<std::int64_t>{1024, 1024, 512, 256, 128}));
  const auto f = forward_features(model, x);
  EXPECT_EQ(f.sizes(), (std::vector<std::int64_t>{64, 256}));
  EXPECT_TRUE(torch::isfinite(f).all().item<bool>());
  const auto p = forward_probs(model, x);
  EXPECT_EQ(p.sizes(), (std::vector<std::int64_t>{64, 8}));
  EXPECT_TRUE(torch::allclose(p.sum(1), torch::ones({64}), 1e-5, 1e-5));
}

TEST(Encoder, FinalLengthIsSixteenth) {
  ModelState model(small_encoder(), 3);
  EXPECT_EQ(model.net()->encoder->stage_lengths(torch::randn({2, 256})).back(), 16);
}

TEST(Encoder, AcceptsChannelDimAndRejectsWrongLength) {
  ModelState model(small_encoder(), 3);
  model.eval();
  torch::NoGradGuard no_grad;
  EXPECT_EQ(forward_features(model, torch::randn({3, 1, 256})).size(0), 3);
  try {
    forward_features(model, torch::randn({3, 255}));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("shape error"), std::string::npos);
  }
}

TEST(Encoder, EvalForwardIsPure) {
  torch::manual_seed(1);
  ModelState model(small_encoder(), 4);
  model.eval();
  torch::NoGradGuard no_grad;
  auto row = torch::randn({1, 256});
  auto x = row.repeat({5, 1});
  const auto a = forward_features(model, x);
  const auto b = forward_features(model, x);
  EXPECT_TRUE(torch::equal(a, b));
  for (int i = 1; i < 5; ++i) EXPECT_TRUE(torch::allclose(a[i], a[0], 1e-6, 1e-6));
}

TEST(Encoder, RejectsBadConfig) {
  auto c = small_encoder();
  c.base_channels = 0;
  EXPECT_THROW(ModelState(c, 3), ConfigError);
  EXPECT_THROW(ModelState(small_encoder(), 1), ConfigError);
}

TEST(WeightNorm, EffectiveWeightDefinition) {
  torch::manual_seed(2);
  WeightNormLinear layer(6, 3);
  const auto w = layer->effective_weight();
  for (int r = 0; r < 3; ++r) {
    const auto v = layer->direction[r];
    EXPECT_TRUE(torch::allclose(w[r], layer->magnitude[r] * v / v.norm(), 1e-6, 1e-7));
    EXPECT_NEAR(w[r].norm().item<double>(), layer->magnitude[r].item<double>(), 1e-5);
  }
}

TEST(WeightNorm, DirectionScaleInvariance) {
  torch::manual_seed(3);
  ModelState model(small_encoder(), 5);
  model.eval();
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({4, 256});
  const auto before = forward_probs(model, x);
  auto& dir = model.net()->classifier->direction;
  for (double s : {1e-3, 0.5, 7.0, 1e3}) {
    const auto saved = dir.clone();
    dir.mul_(s);
    const auto after = forward_probs(model, x);
    EXPECT_TRUE(torch::allclose(after, before, 1e-5, 1e-7)) << "scale " << s;
    dir.copy_(saved);
  }
}

TEST(ModelState, CloneIsIsolatedAndIdentical) {
  torch::manual_seed(4);
  ModelState source(small_encoder(), 3);
  source.meta.domain = "S";
  // Move running statistics away from their defaults.
  source.train();
  forward_features(source, torch::randn({8, 256}));
  source.eval();

  auto target = init_target_from_source(source, 3);
  EXPECT_EQ(target.meta.domain, "S");
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({6, 256});
  target.eval();
  EXPECT_TRUE(torch::equal(forward_probs(source, x), forward_probs(target, x)));

  const auto ref = forward_probs(source, x);
  for (auto& p : target.net()->encoder->parameters()) p.add_(0.5);
  EXPECT_TRUE(torch::equal(forward_probs(source, x), ref));
  EXPECT_FALSE(torch::equal(forward_probs(target, x), ref));
  EXPECT_THROW(init_target_from_source(source, 4), ConfigError);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  TempDir dir("ckpt");
  torch::manual_seed(5);
  ModelState model(small_encoder(), 3);
  model.train();
  forward_features(model, torch::randn({8, 256}));
  model.eval();
  model.meta = {"synth", "S", 7};
  save_checkpoint(model, dir / "m.pt");

  auto loaded = load_checkpoint(dir / "m.pt", small_encoder(), 3);
  EXPECT_EQ(loaded.meta.dataset, "synth");
  EXPECT_EQ(loaded.meta.domain, "S");
  EXPECT_EQ(loaded.meta.epoch, 7);
  EXPECT_EQ(loaded.config_hash(), model.config_hash());
  torch::NoGradGuard no_grad;
  const auto x = torch::randn({5, 256});
  loaded.eval();
  EXPECT_TRUE(torch::equal(forward_probs(model, x), forward_probs(loaded, x)));
}

TEST(Checkpoint, RefusesMismatchedArchitecture) {
  TempDir dir("ckpt2");
  ModelState model(small_encoder(), 3);
  save_checkpoint(model, dir / "m.pt");
  auto other = small_encoder();
  other.feature_dim = 64;
  EXPECT_THROW(load_checkpoint(dir / "m.pt", other), ConfigError);
  EXPECT_THROW(load_checkpoint(dir / "m.pt", small_encoder(), 4), ConfigError);
  EXPECT_THROW(load_checkpoint(dir / "missing.pt"), DataError);
}

TEST(Checkpoint, HashDependsOnArchitecture) {
  ModelState a(small_encoder(), 3), b(small_encoder(), 4);
  auto c = small_encoder();
  c.bn_eps = 1e-3;
  ModelState d(c, 3);
  EXPECT_NE(a.config_hash(), b.config_hash());
  EXPECT_NE(a.config_hash(), d.config_hash());
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

TEST(EvalGuard, RestoresMode) {
  ModelState model(small_encoder(), 3);
  model.train();
  {
    EvalGuard g(model);
    EXPECT_FALSE(model.is_training());
  }
  EXPECT_TRUE(model.is_training());
}

}  // namespace
}  // namespace sdalr
