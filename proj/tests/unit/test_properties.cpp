#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numeric>

#include "oracles.hpp"
#include "statekit/checkpoint.hpp"
#include "statekit/data.hpp"
#include "statekit/eval.hpp"
#include "statekit/layers.hpp"
#include "statekit/optim.hpp"

using namespace statekit;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  const auto n = element_count(s);
  return {std::move(s), oracle::random_values(n, seed, lo, hi)};
}

}  // namespace

TEST(TensorProperties, ReshapeRoundTrip) {
  const auto t = random_tensor({2, 3, 4}, 1);
  EXPECT_EQ(t.reshape({6, 4}).reshape({2, 3, 4}), t);
  EXPECT_EQ(t.reshape({24}).reshape({4, 3, 2}).reshape({2, 3, 4}), t);
}

TEST(TensorProperties, IdentityAndAssociativity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_tensor({8, 8}, seed), b = random_tensor({8, 8}, seed + 100),
               c = random_tensor({8, 8}, seed + 200);
    EXPECT_EQ(matmul(a, identity_matrix<double>(8)), a);
    const auto left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      num = std::max(num, std::abs(left[i] - right[i]));
      den = std::max(den, std::abs(left[i]));
    }
    EXPECT_LT(num / den, 1e-10);
  }
}

TEST(LayerProperties, SoftmaxRowsAreDistributions) {
  const auto logits = random_tensor({16, 11}, 3, -20, 20);
  const std::vector<std::size_t> labels(16, 0);
  const auto p = layers::softmax_xent(logits, labels).probs;
  for (std::size_t r = 0; r < 16; ++r) {
    double s = 0;
    for (std::size_t k = 0; k < 11; ++k) {
      const double v = p.at({r, k});
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(LayerProperties, PoolBackwardConservesGradientMass) {
  const auto x = random_tensor({2, 8, 4, 4}, 4);
  const auto fwd = layers::maxpool2x2_forward(x);
  const auto g = random_tensor({2, 8, 2, 2}, 5);
  const auto back = layers::maxpool2x2_backward(g, fwd.argmax, x.shape());
  EXPECT_NEAR(std::accumulate(back.values().begin(), back.values().end(), 0.0),
              std::accumulate(g.values().begin(), g.values().end(), 0.0), 1e-12);
}

TEST(LayerProperties, DropoutPreservesExpectation) {
  const auto x = random_tensor({1000, 1000}, 6, 0.5, 1.5);
  const double mean_in = std::accumulate(x.values().begin(), x.values().end(), 0.0) / 1e6;
  for (double rate : {0.1, 0.2, 0.3, 0.5}) {
    const auto out = layers::dropout_apply(x, rate, layers::Mode::train, 77).output;
    const double mean_out = std::accumulate(out.values().begin(), out.values().end(), 0.0) / 1e6;
    EXPECT_NEAR(mean_out / mean_in, 1.0, 0.01) << "rate " << rate;
  }
}

TEST(ModelProperties, HiddenWidthDifference) {
  const auto wide = count_parameters(make_architecture(Preset::modified_vgg19, 11, 1024, 0.0));
  const auto narrow = count_parameters(make_architecture(Preset::modified_vgg19, 11, 512, 0.0));
  // fc1 loses 25088*512 + 512 and the head loses 512*11.
  EXPECT_EQ(wide - narrow, 12845568u + 5632u);
  EXPECT_EQ(12845568u + 5632u, oracle::modified_vgg19_params(11, 1024) - oracle::modified_vgg19_params(11, 512));
}

TEST(OptimizerProperties, ZeroGradientMeansNoChange) {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.momentum = kind == OptimizerKind::sgd ? 0.9 : 0.0;
    cfg.learning_rate = 0.1;
    Optimizer<double> opt(cfg);
    auto w = random_tensor({5}, 7);
    const auto keep = w;
    const Tensor<double> g({5}, 0.0);
    const std::vector<ParameterRef<double>> refs{{&w, &g, false}};
    for (int i = 0; i < 10; ++i) opt.step(refs);
    EXPECT_EQ(w, keep);
  }
}

TEST(OptimizerProperties, QuadraticDecreasesMonotonically) {
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    Optimizer<double> opt(cfg);
    Tensor<double> w({4}, {0.5, -0.5, 0.5, -0.5}), g({4});  // |w0| = 1
    auto f = [&] {
      double s = 0;
      for (double v : w.values()) s += 0.5 * v * v;
      return s;
    };
    double prev = f();
    for (int t = 0; t < 100; ++t) {
      g = w;
      const std::vector<ParameterRef<double>> refs{{&w, &g, false}};
      opt.step(refs);
      ASSERT_LT(f(), prev) << "step " << t;
      prev = f();
    }
  }
}

TEST(OptimizerProperties, AdamFirstStepBiasCorrection) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::adam;
  for (double gv : {0.5, 0.25, 2.0}) {
    Optimizer<double> opt(cfg);
    Tensor<double> w({1}, 1.0), g({1}, gv);
    const std::vector<ParameterRef<double>> refs{{&w, &g, false}};
    opt.step(refs);
    EXPECT_EQ(opt.state().first[0][0] / (1.0 - cfg.beta1), gv);
  }
}

TEST(DataProperties, EveryEntryOncePerEpoch) {
  for (std::uint64_t epoch = 1; epoch <= 5; ++epoch) {
    std::vector<int> seen(1000, 0);
    for (const auto& b : make_batches(1000, 64, 3, epoch))
      for (auto i : b.indices) ++seen[i];
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST(DataProperties, NormalizeRoundTrip) {
  const auto img = random_tensor({3, 9, 7}, 8, 0, 255);
  PreprocessConfig cfg;
  const auto back = denormalize(normalize(img, cfg), cfg);
  EXPECT_LT(oracle::max_relative_error(back.values(), img.values(), 1.0), 1e-6);
}

// Set STATEKIT_DATASET_MANIFEST to the real dataset's manifest to run this.
TEST(DataProperties, RealDatasetSplitCounts) {
  const char* path = std::getenv("STATEKIT_DATASET_MANIFEST");
  if (!path) GTEST_SKIP() << "STATEKIT_DATASET_MANIFEST not set";
  const std::size_t expected[3][kNumClasses] = {
      {496, 511, 472, 543, 853, 701, 532, 499, 745, 491, 505},
      {110, 112, 108, 101, 215, 143, 116, 99, 167, 101, 105},
      {57, 48, 56, 42, 103, 65, 68, 55, 84, 60, 42}};
  const auto m = load_manifest_file(path);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < kNumClasses; ++c) EXPECT_EQ(m.counts[s][c], expected[s][c]) << s << "," << c;
}

TEST(EvalProperties, RowNormalizedSumsToOne) {
  std::mt19937_64 engine(9);
  std::vector<std::size_t> t, p;
  for (int i = 0; i < 500; ++i) {
    t.push_back(engine() % 10);  // class 10 stays empty
    p.push_back(engine() % 11);
  }
  const auto cm = confusion_matrix(t, p, class_names_for(11));
  EXPECT_EQ(cm.total(), 500u);
  const auto rows = cm.row_normalized();
  for (std::size_t r = 0; r < 11; ++r) {
    const double s = std::accumulate(rows[r].begin(), rows[r].end(), 0.0);
    EXPECT_NEAR(s, r == 10 ? 0.0 : 1.0, 1e-9);
  }
  const double acc = accuracies(cm).overall;
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(CheckpointProperties, RoundTripBothDtypes) {
  const auto d = random_tensor({3, 2, 3, 3}, 10, -1e30, 1e30);
  std::vector<float> fv;
  for (double v : oracle::random_values(40, 11)) fv.push_back(static_cast<float>(v));
  fv[3] = -0.0f;
  fv[4] = std::numeric_limits<float>::denorm_min();
  const Tensor<float> f({40}, fv);
  const std::vector<CheckpointEntry> entries{CheckpointEntry::from_tensor("d", d),
                                             CheckpointEntry::from_tensor("f", f)};
  const auto back = decode_checkpoint(encode_checkpoint(entries));
  EXPECT_EQ(back[0].dtype, DType::f64);
  EXPECT_EQ(back[0].to_tensor<double>(), d);
  EXPECT_EQ(back[1].to_tensor<float>(), f);
  EXPECT_TRUE(std::signbit(back[1].to_tensor<float>()[3]));
}
