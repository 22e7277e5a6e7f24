#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statekit/model.hpp"
#include "statekit/tensor.hpp"

namespace statekit {

enum class OptimizerKind { sgd, adam, rmsprop };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer_kind(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 1e-4;
  double momentum = 0.0;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double rho = 0.9;  // rmsprop
  double epsilon = 1e-8;
};

// Throws ConfigError on a negative learning rate or any fraction outside [0,1).
// A learning rate of exactly zero is accepted so that no-op runs can be expressed.
void validate(const OptimizerConfig& cfg);

// What the optimizer needs to see of one parameter tensor.
template <typename T>
struct ParameterRef {
  Tensor<T>* value;
  const Tensor<T>* grad;
  bool frozen;
};

template <typename T>
struct OptimizerState {
  std::uint64_t step = 0;
  // first: sgd velocity or adam m. second: adam v or rmsprop mean square.
  std::vector<Tensor<T>> first;
  std::vector<Tensor<T>> second;
};

template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  const OptimizerState<T>& state() const noexcept { return state_; }

  // One update over every tensor. The parameter list must keep the same
  // order and shapes between calls. Frozen tensors are left untouched and
  // their accumulators do not advance.
  void step(std::span<const ParameterRef<T>> params);

  // Convenience overload over a network's parameters and frozen flags.
  void step(Network<T>& net);

 private:
  void lazy_init(std::span<const ParameterRef<T>> params);

  OptimizerConfig cfg_;
  OptimizerState<T> state_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace statekit
