// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failures (0 when everything holds).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>
#include <string>

#include "fixture_data.hpp"
#include "oracles.hpp"
#include "statekit/checkpoint.hpp"
#include "statekit/cli.hpp"
#include "statekit/eval.hpp"
#include "statekit/layers.hpp"
#include "statekit/optim.hpp"
#include "statekit/parallel.hpp"
#include "statekit/reference.hpp"
#include "statekit/training.hpp"

using namespace statekit;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, double budget_s, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (budget_s > 0 && secs >= budget_s) {
    o.pass = false;
    o.detail += " [over time budget " + std::to_string(budget_s) + " s]";
  }
  failures += !o.pass;
  std::printf("%s %-3s %-28s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<double> tensor_of(Shape s, const std::vector<double>& v) { return {std::move(s), v}; }

double dot(const Tensor<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// --- 1 -------------------------------------------------------------------
Outcome parameter_counts() {
  const auto dir = oracle::scratch_dir("acc_inspect");
  std::ofstream(dir / "modified.json") << R"({"preset": "modified_vgg19", "num_classes": 11, "fc_width": 1024})";
  std::ofstream(dir / "original.json") << R"({"preset": "original_vgg19", "num_classes": 1000})";
  auto total = [&](const char* file) -> std::uint64_t {
    std::ostringstream out, err;
    if (cli::cmd_inspect(dir / file, out, err) != 0) return 0;
    std::smatch m;
    const std::string text = out.str();
    if (!std::regex_search(text, m, std::regex("total parameters: ([0-9]+)"))) return 0;
    return std::stoull(m[1]);
  };
  const auto mod = total("modified.json"), orig = total("original.json");
  std::filesystem::remove_all(dir);
  const bool ok = mod == 45726795 && orig == 143667240 && mod == oracle::modified_vgg19_params(11, 1024) &&
                  orig == oracle::original_vgg19_params(1000);
  return {ok, "modified " + std::to_string(mod) + ", original " + std::to_string(orig)};
}

// --- 2 -------------------------------------------------------------------
Outcome gradient_suite() {
  using namespace layers;
  double worst = 0;
  auto track = [&](const Tensor<double>& analytic, const std::vector<double>& numeric) {
    worst = std::max(worst, oracle::max_relative_error(analytic.values(), numeric));
  };
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const std::uint64_t s = 100 * trial;
    {  // conv3x3: input [2,3,4,4], weights [4,3,3,3]
      const Shape xs{2, 3, 4, 4}, ws{4, 3, 3, 3};
      const auto x0 = oracle::random_values(96, s + 1), w0 = oracle::random_values(108, s + 2),
                 b0 = oracle::random_values(4, s + 3), r = oracle::random_values(128, s + 4);
      const auto g = conv3x3_backward(tensor_of(xs, x0), tensor_of(ws, w0), tensor_of({2, 4, 4, 4}, r));
      auto fwd = [&](const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& b) {
        return dot(conv3x3_forward(tensor_of(xs, x), tensor_of(ws, w), tensor_of({4}, b)), r);
      };
      track(g.input, oracle::numeric_gradient([&](const auto& x) { return fwd(x, w0, b0); }, x0));
      track(g.weights, oracle::numeric_gradient([&](const auto& w) { return fwd(x0, w, b0); }, w0));
      track(g.bias, oracle::numeric_gradient([&](const auto& b) { return fwd(x0, w0, b); }, b0));
    }
    {  // maxpool2x2 on [2,4,4,4]
      const Shape xs{2, 4, 4, 4};
      const auto x0 = oracle::distinct_values(128, s + 5), r = oracle::random_values(32, s + 6);
      const auto f = maxpool2x2_forward(tensor_of(xs, x0));
      track(maxpool2x2_backward(tensor_of({2, 4, 2, 2}, r), f.argmax, xs),
            oracle::numeric_gradient(
                [&](const auto& x) { return dot(maxpool2x2_forward(tensor_of(xs, x)).output, r); }, x0));
    }
    {  // dense [2,16] x [16,4]
      const Shape xs{2, 16}, ws{16, 4};
      const auto x0 = oracle::random_values(32, s + 7), w0 = oracle::random_values(64, s + 8),
                 b0 = oracle::random_values(4, s + 9), r = oracle::random_values(8, s + 10);
      const auto g = dense_backward(tensor_of(xs, x0), tensor_of(ws, w0), tensor_of({2, 4}, r));
      auto fwd = [&](const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& b) {
        return dot(dense_forward(tensor_of(xs, x), tensor_of(ws, w), tensor_of({4}, b)), r);
      };
      track(g.input, oracle::numeric_gradient([&](const auto& x) { return fwd(x, w0, b0); }, x0));
      track(g.weights, oracle::numeric_gradient([&](const auto& w) { return fwd(x0, w, b0); }, w0));
      track(g.bias, oracle::numeric_gradient([&](const auto& b) { return fwd(x0, w0, b); }, b0));
    }
    {  // dropout with a fixed mask on [2,4,4,4]
      const Shape xs{2, 4, 4, 4};
      const auto x0 = oracle::random_values(128, s + 11), r = oracle::random_values(128, s + 12);
      const auto mask = dropout_apply(tensor_of(xs, x0), 0.5, Mode::train, s + 13).mask;
      track(dropout_backward(tensor_of(xs, r), mask),
            oracle::numeric_gradient(
                [&](const auto& x) { return dot(dropout_apply(tensor_of(xs, x), 0.5, Mode::train, s + 13).output, r); },
                x0));
    }
    {  // softmax_xent on [4,4] logits
      const Shape ls{4, 4};
      const std::vector<std::size_t> labels{0, 3, 1, 1};
      const auto l0 = oracle::random_values(16, s + 14, -2, 2);
      const auto p = softmax_xent(tensor_of(ls, l0), labels).probs;
      track(softmax_xent_backward(p, labels),
            oracle::numeric_gradient([&](const auto& l) { return softmax_xent(tensor_of(ls, l), labels).loss; }, l0));
    }
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3e", worst)};
}

// --- 3 -------------------------------------------------------------------
Outcome conv_oracle() {
  parallel::ScopedMode mode(true);
  std::mt19937_64 engine(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(engine() % (hi - lo + 1));
  };
  std::size_t exact = 0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t n = pick(1, 2), cin = pick(1, 4), cout = pick(1, 4), h = pick(1, 8), w = pick(1, 8);
    const auto x = oracle::random_values(n * cin * h * w, engine());
    const auto k = oracle::random_values(cout * cin * 9, engine());
    const auto b = oracle::random_values(cout, engine());
    auto run = [&]<typename T>(T) {
      const Tensor<T> xt({n, cin, h, w}, std::vector<T>(x.begin(), x.end()));
      const Tensor<T> kt({cout, cin, 3, 3}, std::vector<T>(k.begin(), k.end()));
      const Tensor<T> bt({cout}, std::vector<T>(b.begin(), b.end()));
      return layers::conv3x3_forward(xt, kt, bt) == ref::conv3x3_forward(xt, kt, bt);
    };
    exact += run(0.0f) && run(0.0);
  }
  return {exact == 50, std::to_string(exact) + "/50 cases bit-identical (f32 and f64)"};
}

// --- 4 -------------------------------------------------------------------
Outcome full_shape_smoke() {
  parallel::ScopedMode mode(false);
  Network<float> net(make_architecture(Preset::modified_vgg19, 11, 1024, 0.0), 1);
  const auto xv = oracle::random_values(2 * 3 * 224 * 224, 3, -2, 2);
  const Tensor<float> x({2, 3, 224, 224}, std::vector<float>(xv.begin(), xv.end()));
  const auto logits = net.forward(x, layers::Mode::infer);
  const bool finite = std::all_of(logits.values().begin(), logits.values().end(),
                                  [](float v) { return std::isfinite(v); });
  return {logits.shape() == Shape{2, 11} && finite, "logits " + to_string(logits.shape()) +
                                                        (finite ? " all finite" : " NOT finite")};
}

// --- 5 -------------------------------------------------------------------
Outcome tiny_overfit() {
  const auto f = testdata::load_fixture("acc_overfit");
  TrainConfig cfg;
  cfg.optimizer.kind = OptimizerKind::sgd;
  cfg.optimizer.learning_rate = 0.01;
  cfg.batch_size = 16;
  cfg.max_epochs = 200;
  cfg.early_stop_patience = 200;  // watch the whole curve
  cfg.seed = 7;
  Network<float> net(make_architecture(Preset::tiny_test, 11, 32, 0.0), cfg.seed);
  const auto r = train(net, f.train, f.validation, cfg);
  std::filesystem::remove_all(f.dir);

  std::size_t first_fit = 0;
  for (const auto& rec : r.records) {
    if (rec.train_accuracy >= 0.99) {
      first_fit = rec.epoch;
      break;
    }
  }
  const auto& best = r.records[r.best_epoch - 1];
  const auto& last = r.records.back();
  // After the validation minimum the curves diverge: validation loss ends
  // clearly above its minimum while train loss keeps falling.
  const bool val_rises = last.val_loss > 1.05 * best.val_loss;
  const bool train_falls = last.train_loss < best.train_loss;
  const bool ok = f.train.size() == 176 && first_fit > 0 && val_rises && train_falls;
  return {ok, "train acc >= 0.99 at epoch " + std::to_string(first_fit) + "; val loss min " +
                  fmt("%.4f", best.val_loss) + " @" + std::to_string(r.best_epoch) + " -> " +
                  fmt("%.4f", last.val_loss) + "; train loss " + fmt("%.4f", best.train_loss) + " -> " +
                  fmt("%.5f", last.train_loss)};
}

// --- 6 -------------------------------------------------------------------
Outcome optimizer_oracle() {
  double worst_traj = 0, worst_single = 0;
  const double hand[] = {0.99995, 0.99990, 0.99968377};
  const OptimizerKind kinds[] = {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop};
  for (int i = 0; i < 3; ++i) {
    OptimizerConfig cfg;
    cfg.kind = kinds[i];
    {
      Optimizer<double> opt(cfg);
      Tensor<double> w({1}, 1.0), g({1}, 0.5);
      const std::vector<ParameterRef<double>> refs{{&w, &g, false}};
      opt.step(refs);
      worst_single = std::max(worst_single, std::abs(w[0] - hand[i]));
    }
    cfg.learning_rate = 0.01;
    oracle::ScalarHyper h;
    h.lr = cfg.learning_rate;
    Optimizer<double> opt(cfg);
    const std::vector<double> w0{1.0, -0.5, 2.0, 0.25};
    Tensor<double> w({4}, w0), g({4});
    std::vector<std::vector<double>> want;
    for (double s : w0) {
      want.push_back(i == 0 ? oracle::sgd_trajectory(s, 100, h)
                     : i == 1 ? oracle::adam_trajectory(s, 100, h)
                              : oracle::rmsprop_trajectory(s, 100, h));
    }
    for (std::size_t t = 0; t < 100; ++t) {
      g = w;
      const std::vector<ParameterRef<double>> refs{{&w, &g, false}};
      opt.step(refs);
      for (std::size_t j = 0; j < 4; ++j) worst_traj = std::max(worst_traj, std::abs(w[j] - want[j][t]));
    }
  }
  return {worst_traj < 1e-6 && worst_single < 1e-7,
          "trajectory max dev " + fmt("%.2e", worst_traj) + ", single-step max dev " + fmt("%.2e", worst_single)};
}

// --- 7 -------------------------------------------------------------------
Outcome early_stopping() {
  const std::vector<double> losses{1.0, 0.9, 0.85, 0.86, 0.87, 0.88, 0.89, 0.90};
  std::size_t stopped_after = 0;
  for (std::size_t e = 1; e <= losses.size() && !stopped_after; ++e) {
    if (early_stop_check(std::span(losses).first(e), 5, 0.0).stop) stopped_after = e;
  }
  const auto d = early_stop_check(losses, 5, 0.0);
  return {stopped_after == 8 && d.best_epoch == 3,
          "stop after epoch " + std::to_string(stopped_after) + ", best_epoch " + std::to_string(d.best_epoch)};
}

// --- 8 -------------------------------------------------------------------
Outcome crop_exactness() {
  auto image = [](std::size_t h, std::size_t w) {
    Tensor<float> t({3, h, w});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i % 256);
    return t;
  };
  auto matches = [&](std::size_t h, std::size_t w, std::size_t r0, std::size_t c0) {
    const auto win = center_crop_window(h, w, 224);
    if (win.row_offset != r0 || win.col_offset != c0) return false;
    const auto src = image(h, w);
    const auto out = center_crop(src, 224);
    if (out.shape() != Shape{3, 224, 224}) return false;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 224; ++y)
        for (std::size_t x = 0; x < 224; ++x)
          if (out.at({c, y, x}) != src.at({c, y + r0, x + c0})) return false;
    return true;
  };
  const bool a = matches(224, 224, 0, 0), b = matches(375, 500, 75, 138), c = matches(300, 224, 38, 0);
  return {a && b && c, std::string("identity ") + (a ? "ok" : "BAD") + ", 375x500 -> 75/138 " + (b ? "ok" : "BAD") +
                           ", 300x224 -> 38/0 " + (c ? "ok" : "BAD")};
}

// --- 9 -------------------------------------------------------------------
Outcome freezing_contract() {
  const auto f = testdata::load_fixture("acc_freeze");
  const auto spec = make_architecture(Preset::tiny_test, 11, 32, 0.0);
  Network<float> pretrained(spec, 101);
  const auto ckpt = f.dir / "pretrained.skpt";
  save_checkpoint(pretrained, ckpt);

  Network<float> net(spec, 202);
  load_checkpoint(net, ckpt, LoadMode::trunk_only);
  net.set_frozen(FreezeSelection::conv_trunk());
  const auto head_before = net.find_parameter("head.weight")->value;
  TrainConfig cfg;
  cfg.optimizer.kind = OptimizerKind::sgd;
  cfg.optimizer.learning_rate = 0.01;
  cfg.batch_size = 16;
  cfg.max_epochs = 10;
  cfg.early_stop_patience = 10;
  cfg.seed = 3;
  const auto r = train(net, f.train, f.validation, cfg);
  std::filesystem::remove_all(f.dir);

  std::size_t identical = 0, conv = 0;
  for (const auto& p : net.parameters()) {
    if (!p.name.starts_with("block")) continue;
    ++conv;
    identical += p.value == pretrained.find_parameter(p.name)->value &&
                 r.best.find_parameter(p.name)->value == p.value;
  }
  const bool head_moved = net.find_parameter("head.weight")->value != head_before;
  return {r.records.size() == 10 && conv == 8 && identical == conv && head_moved,
          std::to_string(identical) + "/" + std::to_string(conv) + " conv tensors bit-identical after " +
              std::to_string(r.records.size()) + " epochs; head " + (head_moved ? "updated" : "NOT updated")};
}

// --- 10 ------------------------------------------------------------------
Outcome determinism() {
  const auto dir = oracle::scratch_dir("acc_determinism");
  std::ostringstream sink, err;
  if (cli::cmd_make_fixture(dir, sink, err) != 0) return {false, "fixture: " + err.str()};
  nlohmann::json doc;
  std::ifstream(dir / "config.json") >> doc;
  doc["train"]["max_epochs"] = 4;
  doc["dropout_rate"] = 0.3;  // exercise the seeded masks too
  for (const char* run : {"run_a", "run_b"}) {
    doc["output_dir"] = run;
    std::ofstream(dir / (std::string(run) + ".json")) << doc.dump(2);
    if (cli::cmd_train(dir / (std::string(run) + ".json"), {}, sink, err) != 0) return {false, err.str()};
  }
  const bool metrics = oracle::slurp(dir / "run_a" / "metrics.csv") == oracle::slurp(dir / "run_b" / "metrics.csv");
  const bool ckpt = oracle::slurp(dir / "run_a" / "best.skpt") == oracle::slurp(dir / "run_b" / "best.skpt");
  const auto size = std::filesystem::file_size(dir / "run_a" / "best.skpt");
  std::filesystem::remove_all(dir);
  return {metrics && ckpt, std::string("metrics.csv ") + (metrics ? "identical" : "DIFFER") + ", best.skpt (" +
                               std::to_string(size) + " bytes) " + (ckpt ? "identical" : "DIFFER")};
}

// --- 11 ------------------------------------------------------------------
Outcome confusion_properties() {
  const auto f = testdata::load_fixture("acc_confusion");
  TrainConfig cfg;
  cfg.optimizer.kind = OptimizerKind::sgd;
  cfg.optimizer.learning_rate = 0.01;
  cfg.batch_size = 16;
  cfg.max_epochs = 5;
  cfg.seed = 5;
  Network<float> net(make_architecture(Preset::tiny_test, 11, 32, 0.0), 5);
  train(net, f.train, f.validation, cfg);
  const auto names = class_names_for(11);

  bool rows = true, trace = true;
  for (auto [split, data] : {std::pair{Split::validation, &f.validation}, std::pair{Split::test, &f.test}}) {
    const auto eval = evaluate_epoch(net, *data, 16);
    const auto cm = confusion_matrix(data->labels, eval.predictions, names);
    for (std::size_t c = 0; c < 11; ++c) rows &= cm.row_sum(c) == f.manifest.counts[static_cast<int>(split)][c];
    trace &= static_cast<double>(cm.trace()) / static_cast<double>(cm.total()) == eval.accuracy;
  }

  const auto eval = evaluate_epoch(net, f.validation, 16);
  const auto cm = confusion_matrix(f.validation.labels, eval.predictions, names);
  std::mt19937_64 engine(99);
  bool equivariant = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> perm(11);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), engine);
    std::vector<std::size_t> t, p;
    for (std::size_t i = 0; i < eval.predictions.size(); ++i) {
      t.push_back(perm[f.validation.labels[i]]);
      p.push_back(perm[eval.predictions[i]]);
    }
    const auto pcm = confusion_matrix(t, p, names);
    for (std::size_t i = 0; i < 11; ++i)
      for (std::size_t j = 0; j < 11; ++j) equivariant &= pcm.at(perm[i], perm[j]) == cm.at(i, j);
  }
  std::filesystem::remove_all(f.dir);
  return {rows && trace && equivariant, std::string("row sums ") + (rows ? "ok" : "BAD") + ", permutation equivariance " +
                                            (equivariant ? "ok" : "BAD") + ", trace/total == accuracy " +
                                            (trace ? "ok" : "BAD") + " (val acc " + fmt("%.4f", eval.accuracy) + ")"};
}

}  // namespace

int main() {
  std::printf("statekit acceptance suite\n");
  report("1", "parameter-count oracle", 1.0, parameter_counts);
  report("2", "gradient suite", 30.0, gradient_suite);
  report("3", "conv oracle equivalence", 10.0, conv_oracle);
  report("4", "full-shape smoke test", 60.0, full_shape_smoke);
  report("5", "tiny overfit reproduction", 300.0, tiny_overfit);
  report("6", "optimizer oracle", 0, optimizer_oracle);
  report("7", "early-stopping rule", 0, early_stopping);
  report("8", "crop bit-exactness", 0, crop_exactness);
  report("9", "freezing contract", 0, freezing_contract);
  report("10", "determinism", 0, determinism);
  report("11", "confusion-matrix properties", 0, confusion_properties);
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
