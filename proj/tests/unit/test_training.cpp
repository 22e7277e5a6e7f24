#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "fixture_data.hpp"
#include "statekit/error.hpp"
#include "statekit/training.hpp"

using namespace statekit;

namespace {

const testdata::FixtureSplits& fixture() {
  static const auto f = testdata::load_fixture("training");
  return f;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.optimizer.kind = OptimizerKind::sgd;
  cfg.optimizer.learning_rate = 0.01;
  cfg.batch_size = 16;
  cfg.max_epochs = 3;
  cfg.seed = 11;
  return cfg;
}

ArchitectureSpec tiny() { return make_architecture(Preset::tiny_test, 11, 32, 0.0); }

// Logits that are a fixed function of the label, for evaluate_epoch checks.
ArchitectureSpec probe_spec() {
  ArchitectureSpec s;
  s.name = "probe";
  s.input_shape = {11, 2, 2};
  s.num_classes = 11;
  s.layers = {{LayerKind::flatten, "flatten"},
              {LayerKind::dense, "head", 44, 11},
              {LayerKind::softmax_xent, "loss"}};
  return s;
}

}  // namespace

TEST(EarlyStop, ScriptedSequence) {
  const std::vector<double> losses{1.0, 0.9, 0.85, 0.86, 0.87, 0.88, 0.89, 0.90};
  const auto d = early_stop_check(losses, 5, 0.0);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_epoch, 3u);
  // Not yet after epoch 7.
  EXPECT_FALSE(early_stop_check(std::span(losses).first(7), 5, 0.0).stop);
}

TEST(EarlyStop, DecreasingNeverStops) {
  std::vector<double> losses;
  for (int i = 0; i < 40; ++i) losses.push_back(10.0 - 0.1 * i);
  for (std::size_t p : {1u, 2u, 5u}) EXPECT_FALSE(early_stop_check(losses, p, 0.0).stop);
  EXPECT_EQ(early_stop_check(losses, 1, 0.0).best_epoch, 40u);
}

TEST(EarlyStop, EqualLossIsNotImprovement) {
  const std::vector<double> losses{0.5, 0.5};
  const auto d = early_stop_check(losses, 1, 0.0);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_epoch, 1u);
}

TEST(EarlyStop, MinDeltaDemandsRealProgress) {
  const std::vector<double> losses{1.0, 0.99, 0.98};
  EXPECT_TRUE(early_stop_check(losses, 2, 0.05).stop);
  EXPECT_EQ(early_stop_check(losses, 2, 0.05).best_epoch, 3u);
  EXPECT_FALSE(early_stop_check(losses, 2, 0.0).stop);
}

TEST(Evaluate, OneHotAndUniformNets) {
  // Each sample is the one-hot image of its label, so an identity head
  // reproduces one-hot logits.
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 33; ++i) labels.push_back(i % 11);
  Dataset<float> data{Tensor<float>({33, 11, 2, 2}, 0.0f), labels, std::vector<std::string>(33)};
  for (std::size_t i = 0; i < 33; ++i)
    for (std::size_t p = 0; p < 4; ++p) data.images.at({i, labels[i], p / 2, p % 2}) = 0.25f;
  Network<float> net(probe_spec());
  auto* w = net.find_parameter("head.weight");
  w->value.fill(0.0f);
  for (std::size_t k = 0; k < 11; ++k)
    for (std::size_t p = 0; p < 4; ++p) w->value.at({k * 4 + p, k}) = 1.0f;
  const auto r = evaluate_epoch(net, data, 8);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.predictions, labels);
  EXPECT_NEAR(r.loss, std::log(1.0 + 10.0 / std::exp(1.0)), 1e-6);

  w->value.fill(0.0f);
  const auto u = evaluate_epoch(net, data, 8);
  EXPECT_NEAR(u.loss, std::log(11.0), 1e-6);
}

TEST(Evaluate, RandomLogitsAreAtChance) {
  const std::size_t n = 11 * 400;
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % 11;
  const auto pixels = oracle::random_values(n * 44, 80);
  Dataset<float> data{Tensor<float>({n, 11, 2, 2}, std::vector<float>(pixels.begin(), pixels.end())),
                      labels, std::vector<std::string>(n)};
  Network<float> net(probe_spec(), 5);
  EXPECT_NEAR(evaluate_epoch(net, data, 256).accuracy, 1.0 / 11.0, 0.03);
}

TEST(Train, SingleEpochRun) {
  auto cfg = quick_config();
  cfg.max_epochs = 1;
  Network<float> net(tiny(), 1);
  const auto r = train(net, fixture().train, fixture().validation, cfg);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.stop_reason, StopReason::max_epochs);
  EXPECT_EQ(r.records[0].epoch, 1u);
  EXPECT_EQ(r.best_epoch, 1u);
  EXPECT_EQ(r.records[0].wall_seconds, 0.0);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto cfg = quick_config();
  cfg.optimizer.learning_rate = 0.0;
  Network<float> net(tiny(), 2);
  const auto before = net.parameters();
  const auto r = train(net, fixture().train, fixture().validation, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(net.parameters()[i].value, before[i].value);
  ASSERT_EQ(r.records.size(), 3u);
  for (const auto& rec : r.records) EXPECT_EQ(rec.train_loss, r.records[0].train_loss);
}

TEST(Train, BestSnapshotHasLowestValidationLoss) {
  auto cfg = quick_config();
  cfg.max_epochs = 6;
  Network<float> net(tiny(), 3);
  std::size_t callbacks = 0;
  TrainHooks<float> hooks;
  hooks.on_new_best = [&](const Network<float>&, const EpochRecord&) { ++callbacks; };
  auto r = train(net, fixture().train, fixture().validation, cfg, hooks);
  const auto best = evaluate_epoch(r.best, fixture().validation, 16);
  for (const auto& rec : r.records) EXPECT_LE(best.loss, rec.val_loss + 1e-12);
  EXPECT_EQ(best.loss, r.records[r.best_epoch - 1].val_loss);
  EXPECT_GE(callbacks, 1u);
}

TEST(Train, IdenticalSeedsGiveIdenticalRuns) {
  auto cfg = quick_config();
  Network<float> a(tiny(), 4), b(tiny(), 4);
  const auto ra = train(a, fixture().train, fixture().validation, cfg);
  const auto rb = train(b, fixture().train, fixture().validation, cfg);
  EXPECT_EQ(ra.records, rb.records);
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    EXPECT_EQ(a.parameters()[i].value, b.parameters()[i].value);
}

TEST(Train, FrozenTrunkStaysBitIdentical) {
  auto spec = tiny();
  set_frozen(spec, FreezeSelection::conv_trunk());
  Network<float> net(spec, 5);
  const auto before = net.parameters();
  train(net, fixture().train, fixture().validation, quick_config());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = net.parameters()[i];
    if (p.name.starts_with("block")) {
      EXPECT_EQ(p.value, before[i].value) << p.name;
    } else if (p.name.ends_with("weight")) {
      EXPECT_NE(p.value, before[i].value) << p.name;
    }
  }
}

TEST(Train, NonFiniteLossAbortsWithBatchIndex) {
  auto poisoned = fixture().train;
  poisoned.images[5] = std::numeric_limits<float>::quiet_NaN();
  Network<float> net(tiny(), 6);
  try {
    train(net, poisoned, fixture().validation, quick_config());
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadConfigAndEmptySplits) {
  auto cfg = quick_config();
  cfg.max_epochs = 0;
  Network<float> net(tiny(), 7);
  EXPECT_THROW(train(net, fixture().train, fixture().validation, cfg), ConfigError);
  cfg = quick_config();
  cfg.early_stop_patience = 0;
  EXPECT_THROW(validate(cfg), ConfigError);
  Dataset<float> empty{Tensor<float>({1}), {}, {}};
  EXPECT_THROW(train(net, fixture().train, empty, quick_config()), DataError);
}

TEST(Metrics, CsvFormat) {
  const std::vector<EpochRecord> recs{{1, 2.5, 0.125, 2.25, 0.5, 0.0}, {2, 1.0 / 3.0, 1.0, 2.0, 0.75, 1.25}};
  std::ostringstream os;
  write_metrics_csv(os, recs);
  EXPECT_EQ(os.str(),
            "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n"
            "1,2.5,0.125,2.25,0.5,0.000\n"
            "2,0.333333333,1,2,0.75,1.250\n");
}
