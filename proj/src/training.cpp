#include "statekit/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "statekit/error.hpp"
#include "statekit/parallel.hpp"
#include "statekit/random.hpp"

namespace statekit {

void validate(const TrainConfig& cfg) {
  if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  if (!(cfg.early_stop_min_delta >= 0.0)) throw ConfigError("early_stop_min_delta must be >= 0");
  validate(cfg.optimizer);
}

std::string_view to_string(StopReason reason) noexcept {
  return reason == StopReason::max_epochs ? "max_epochs" : "early_stop";
}

EarlyStopDecision early_stop_check(std::span<const double> val_losses, std::size_t patience,
                                   double min_delta) {
  double running_best = std::numeric_limits<double>::infinity();
  double lowest = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = val_losses.empty() ? 0 : 1;
  std::size_t since_improvement = 0;
  for (std::size_t i = 0; i < val_losses.size(); ++i) {
    const double loss = val_losses[i];
    if (loss < running_best - min_delta) {
      running_best = loss;
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    if (loss < lowest) {
      lowest = loss;
      best_epoch = i + 1;
    }
  }
  return {since_improvement >= patience, best_epoch};
}

template <typename T>
EvalResult evaluate_epoch(Network<T>& net, const Dataset<T>& data, std::size_t batch_size) {
  EvalResult r{0.0, 0.0, {}};
  if (data.size() == 0) throw DataError("cannot evaluate an empty split");
  r.predictions.reserve(data.size());
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& plan : sequential_batches(data.size(), batch_size)) {
    const auto batch = gather_batch(data, plan);
    const auto logits = net.forward(batch.images, layers::Mode::infer);
    const auto xent = layers::softmax_xent(logits, batch.labels);
    for (double l : xent.per_sample_loss) loss_sum += l;
    const auto pred = argmax_last(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      correct += pred[i] == batch.labels[i];
      r.predictions.push_back(pred[i]);
    }
  }
  const double n = static_cast<double>(data.size());
  r.loss = loss_sum / n;
  r.accuracy = static_cast<double>(correct) / n;
  return r;
}

template <typename T>
TrainResult<T> train(Network<T>& net, const Dataset<T>& train_data, const Dataset<T>& validation,
                     const TrainConfig& cfg, const TrainHooks<T>& hooks) {
  validate(cfg);
  if (train_data.size() == 0 || validation.size() == 0) {
    throw DataError("training needs non-empty train and validation splits");
  }
  parallel::ScopedMode mode(cfg.deterministic);
  Optimizer<T> optimizer(cfg.optimizer);

  TrainResult<T> result{net, {}, StopReason::max_epochs, 0};
  result.best.clear_caches();
  std::vector<double> val_losses;
  double best_loss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto plans = make_batches(train_data.size(), cfg.batch_size, cfg.seed, epoch);
    // Summed in dataset order afterwards, so the epoch loss does not depend on the shuffle.
    std::vector<double> sample_loss(train_data.size(), 0.0);
    std::size_t correct = 0;
    for (std::size_t b = 0; b < plans.size(); ++b) {
      const auto batch = gather_batch(train_data, plans[b]);
      const auto logits =
          net.forward(batch.images, layers::Mode::train, mix_seed(mix_seed(cfg.seed, epoch), b));
      const auto xent = layers::softmax_xent(logits, batch.labels);
      if (!std::isfinite(xent.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(b));
      }
      const auto pred = argmax_last(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        sample_loss[plans[b].indices[i]] = xent.per_sample_loss[i];
        correct += pred[i] == batch.labels[i];
      }
      net.backward(layers::softmax_xent_backward(xent.probs, batch.labels));
      optimizer.step(net);
    }

    const auto val = evaluate_epoch(net, validation, cfg.batch_size);
    if (!std::isfinite(val.loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double n = static_cast<double>(train_data.size());
    double loss_sum = 0.0;
    for (double l : sample_loss) loss_sum += l;
    const EpochRecord record{epoch,    loss_sum / n, static_cast<double>(correct) / n,
                             val.loss, val.accuracy, cfg.deterministic ? 0.0 : seconds};
    result.records.push_back(record);
    val_losses.push_back(val.loss);

    if (val.loss < best_loss) {
      best_loss = val.loss;
      result.best_epoch = epoch;
      auto& dst = result.best.parameters();
      const auto& src = net.parameters();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i].value = src[i].value;
      if (hooks.on_new_best) hooks.on_new_best(result.best, record);
    }
    if (hooks.on_epoch) hooks.on_epoch(record);

    if (early_stop_check(val_losses, cfg.early_stop_patience, cfg.early_stop_min_delta).stop) {
      result.stop_reason = StopReason::early_stop;
      break;
    }
  }
  return result;
}

std::string format_metrics_row(const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.3f", r.epoch, r.train_loss,
                r.train_accuracy, r.val_loss, r.val_accuracy, r.wall_seconds);
  return buf;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochRecord> records) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) out << format_metrics_row(r) << '\n';
}

template EvalResult evaluate_epoch(Network<float>&, const Dataset<float>&, std::size_t);
template EvalResult evaluate_epoch(Network<double>&, const Dataset<double>&, std::size_t);
template TrainResult<float> train(Network<float>&, const Dataset<float>&, const Dataset<float>&,
                                  const TrainConfig&, const TrainHooks<float>&);
template TrainResult<double> train(Network<double>&, const Dataset<double>&,
                                   const Dataset<double>&, const TrainConfig&,
                                   const TrainHooks<double>&);

}  // namespace statekit
