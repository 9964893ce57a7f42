#include "sdalr/training.hpp"

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "sdalr/config.hpp"
#include "sdalr/datasets.hpp"
#include "sdalr/error.hpp"
#include "test_util.hpp"

namespace sdalr {
namespace {

using testing::TempDir;

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.base_channels = 4;
  c.window_len = 128;
  c.feature_dim = 16;
  return c;
}

AdaptationConfig fast_config() {
  AdaptationConfig c;
  c.batch_size = 16;
  c.source_epochs = 3;
  c.target_epochs = 2;
  c.strict_determinism = true;
  return c;
}

std::pair<DomainDataset, DomainDataset> tiny_benchmark() {
  SynthConfig s;
  s.class_count = 3;
  s.samples_per_class = 50;
  s.window_len = 128;
  return synth_benchmark(s, {1.35, 3.0}, 5);
}

TEST(Schedule, DecaysFromLr0) {
  EXPECT_DOUBLE_EQ(scheduled_lr(5e-4, 0.0), 5e-4);
  EXPECT_NEAR(scheduled_lr(5e-4, 1.0), 5e-4 * std::pow(11.0, -0.75), 1e-18);
  double last = scheduled_lr(1.0, 0.0);
  for (int k = 1; k <= 100; ++k) {
    const double now = scheduled_lr(1.0, k / 100.0);
    EXPECT_LT(now, last);
    last = now;
  }
}

TEST(Evaluate, PerfectPredictorIsIdentity) {
  const std::vector<int> y = {0, 1, 2, 2, 1, 0, 3};
  const auto r = evaluate_predictions(y, y, 4);
  EXPECT_EQ(r.accuracy, 1.0);
  const auto n = r.row_normalized();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(n[i][j], i == j ? 1.0 : 0.0);
  }
}

TEST(Evaluate, ChanceLevelAndTraceConsistency) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(0, 3);
  std::vector<int> y(2000), p(2000);
  for (auto& v : y) v = d(rng);
  for (auto& v : p) v = d(rng);
  const auto r = evaluate_predictions(y, p, 4);
  EXPECT_NEAR(r.accuracy, 0.25, 0.05);
  std::int64_t trace = 0, total = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    trace += r.confusion[i][i];
    for (auto v : r.confusion[i]) total += v;
  }
  EXPECT_EQ(total, 2000);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(trace) / 2000.0);
}

TEST(Evaluate, ClassMismatchIsAConfigError) {
  ModelState model(tiny_encoder(), 3);
  EXPECT_THROW(evaluate(model, testing::random_dataset(4, 2, 128, 1)), ConfigError);
}

TEST(TrainSource, TwoSampleToyLossDecreases) {
  auto enc = tiny_encoder();
  enc.dropout = 0.0;
  auto cfg = fast_config();
  cfg.source_epochs = 5;
  cfg.source_lr = 1e-4;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    cfg.seed = seed;
    const auto r = train_source(testing::random_dataset(2, 1, 128, 2 + seed), enc, cfg);
    ASSERT_EQ(r.loss_trace.size(), 5u);
    for (std::size_t k = 1; k < 5; ++k) {
      EXPECT_LT(r.loss_trace[k], r.loss_trace[k - 1]) << "seed " << seed << ": " << ::testing::PrintToString(r.loss_trace);
    }
  }
}

TEST(TrainSource, StratifiedSplitAndDeterminism) {
  const auto [source, target] = tiny_benchmark();
  const auto a = train_source(source, tiny_encoder(), fast_config());
  EXPECT_EQ(a.train_size, 120u);
  EXPECT_EQ(a.val_size, 30u);
  const auto b = train_source(source, tiny_encoder(), fast_config());
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(TrainSource, RejectsUnlabeledAndMismatchedWindows) {
  std::vector<SignalSample> s(4, SignalSample{Waveform(128, 0.1f), std::nullopt, "u", ""});
  EXPECT_THROW(train_source(DomainDataset("u", 2, s), tiny_encoder(), fast_config()), DataError);
  EXPECT_THROW(train_source(testing::random_dataset(2, 4, 64, 3), tiny_encoder(), fast_config()), ConfigError);
}

struct Adapted {
  ModelState source;
  DomainDataset target;
};

Adapted trained_source() {
  auto [source, target] = tiny_benchmark();
  auto r = train_source(source, tiny_encoder(), fast_config());
  return {std::move(r.model), target};
}

TEST(AdaptTarget, FreezesClassifierAndLeavesSourceUntouched) {
  auto s = trained_source();
  std::vector<torch::Tensor> source_params;
  for (const auto& p : s.source.net()->parameters()) source_params.push_back(p.detach().clone());

  TempDir dir("adapt");
  auto r = adapt_target(s.source, s.target, fast_config(), dir.path());
  const auto before = s.source.net()->classifier->parameters();
  const auto after = r.model.net()->classifier->parameters();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(torch::equal(before[i], after[i]));

  const auto now = s.source.net()->parameters();
  for (std::size_t i = 0; i < now.size(); ++i) EXPECT_TRUE(torch::equal(now[i], source_params[i]));

  bool encoder_moved = false;
  const auto src_enc = s.source.net()->encoder->parameters();
  const auto tgt_enc = r.model.net()->encoder->parameters();
  for (std::size_t i = 0; i < src_enc.size(); ++i) encoder_moved |= !torch::equal(src_enc[i], tgt_enc[i]);
  EXPECT_TRUE(encoder_moved);
}

TEST(AdaptTarget, WritesMetricsAndRunRecord) {
  auto s = trained_source();
  TempDir dir("adapt2");
  const auto r = adapt_target(s.source, s.target, fast_config(), dir.path());
  ASSERT_EQ(r.record.epochs.size(), 2u);
  EXPECT_TRUE(r.record.final_accuracy.has_value());
  EXPECT_TRUE(r.record.source_only_accuracy.has_value());
  EXPECT_FALSE(r.record.config_hash.empty());
  EXPECT_EQ(r.record.confusion.size(), 3u);

  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"l_lsc", "l_uem", "l_ent", "l_div", "l_im", "l_car", "l_total", "lr", "epoch", "step"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_NEAR(j["l_total"].get<double>(),
                j["l_lsc"].get<double>() + j["l_uem"].get<double>() + j["l_im"].get<double>() +
                    j["l_car"].get<double>(),
                1e-9);
    ++lines;
  }
  std::size_t steps = 0;
  for (const auto& e : r.record.epochs) steps += e.steps;
  EXPECT_EQ(lines, steps);
  EXPECT_GT(lines, 0u);

  const auto saved = read_json_file(dir / "run_record.json").get<RunRecord>();
  EXPECT_EQ(saved.final_accuracy, r.record.final_accuracy);
  EXPECT_EQ(saved.config_hash, r.record.config_hash);
}

TEST(AdaptTarget, StrictModeIsReproducible) {
  auto s = trained_source();
  const auto a = adapt_target(s.source, s.target, fast_config());
  const auto b = adapt_target(s.source, s.target, fast_config());
  ASSERT_EQ(a.record.epochs.size(), b.record.epochs.size());
  for (std::size_t e = 0; e < a.record.epochs.size(); ++e) {
    EXPECT_EQ(a.record.epochs[e].mean.l_total, b.record.epochs[e].mean.l_total);
    EXPECT_EQ(a.record.epochs[e].reliable_fraction, b.record.epochs[e].reliable_fraction);
  }
  EXPECT_EQ(a.record.final_accuracy, b.record.final_accuracy);
}

TEST(AdaptTarget, DegenerateSettingsComplete) {
  auto s = trained_source();
  auto once = fast_config();
  once.refresh_every = 0;
  const auto r1 = adapt_target(s.source, s.target, once);
  EXPECT_TRUE(r1.record.epochs[0].refreshed);
  EXPECT_FALSE(r1.record.epochs[1].refreshed);

  auto baseline = fast_config();
  baseline.losses = {true, true, false, false};
  baseline.voting = false;
  const auto r2 = adapt_target(s.source, s.target, baseline);
  for (const auto& e : r2.record.epochs) {
    EXPECT_EQ(e.mean.l_uem, 0.0);
    EXPECT_EQ(e.mean.l_car, 0.0);
    EXPECT_EQ(e.balanced_size, static_cast<std::size_t>(e.mean.reliable));
  }
}

TEST(AdaptTarget, ClassMismatchIsRefused) {
  ModelState source(tiny_encoder(), 4);
  const auto [src, target] = tiny_benchmark();
  EXPECT_THROW(adapt_target(source, target, fast_config()), ConfigError);
}

TEST(Config, ValidateRejectsOutOfRange) {
  auto c = fast_config();
  c.threshold = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = fast_config();
  c.target_lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = fast_config();
  c.refresh_every = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace sdalr
