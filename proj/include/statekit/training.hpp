#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statekit/data.hpp"
#include "statekit/model.hpp"
#include "statekit/optim.hpp"

namespace statekit {

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  std::size_t early_stop_patience = 5;
  double early_stop_min_delta = 0.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch;  // 1-based
  double train_loss;
  double train_accuracy;
  double val_loss;
  double val_accuracy;
  double wall_seconds;

  bool operator==(const EpochRecord&) const = default;
};

struct EarlyStopDecision {
  bool stop;
  std::size_t best_epoch;  // 1-based
};

// An epoch improves when its loss is more than `min_delta` below the best so
// far. Stops once `patience` consecutive epochs fail to improve.
EarlyStopDecision early_stop_check(std::span<const double> val_losses, std::size_t patience,
                                   double min_delta);

enum class StopReason { max_epochs, early_stop };
std::string_view to_string(StopReason reason) noexcept;

struct EvalResult {
  double loss;
  double accuracy;
  std::vector<std::size_t> predictions;  // dataset order
};

// Inference-mode pass in dataset order.
template <typename T>
EvalResult evaluate_epoch(Network<T>& net, const Dataset<T>& data, std::size_t batch_size);

template <typename T>
struct TrainResult {
  Network<T> best;
  std::vector<EpochRecord> records;
  StopReason stop_reason;
  std::size_t best_epoch;  // 1-based
};

template <typename T>
struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const Network<T>&, const EpochRecord&)> on_new_best;
};

// Runs the epoch loop: shuffled mini-batch SGD-family updates on `train`, a
// full pass over `validation`, early stopping on validation loss. `net`
// ends in its last-epoch state; the result holds the best-validation snapshot.
// A non-finite batch loss throws NumericError naming the epoch and batch.
template <typename T>
TrainResult<T> train(Network<T>& net, const Dataset<T>& train_data, const Dataset<T>& validation,
                     const TrainConfig& cfg, const TrainHooks<T>& hooks = {});

// metrics.csv: header + one row per epoch.
inline constexpr const char* kMetricsHeader =
    "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds";
std::string format_metrics_row(const EpochRecord& record);
void write_metrics_csv(std::ostream& out, std::span<const EpochRecord> records);

}  // namespace statekit
