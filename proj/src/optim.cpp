#include "statekit/optim.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "statekit/error.hpp"
#include "statekit/parallel.hpp"

namespace statekit {

std::string_view to_string(OptimizerKind kind) noexcept {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view text) {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::rmsprop}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

void validate(const OptimizerConfig& cfg) {
  auto fraction = [](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) {
      throw ConfigError(std::string(name) + " must be in [0,1), got " + std::to_string(v));
    }
  };
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0, got " +
                      std::to_string(cfg.learning_rate));
  }
  if (!(cfg.momentum >= 0.0) || !std::isfinite(cfg.momentum)) {
    throw ConfigError("momentum must be >= 0");
  }
  fraction(cfg.beta1, "beta1");
  fraction(cfg.beta2, "beta2");
  fraction(cfg.rho, "rho");
  if (!(cfg.epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  validate(cfg_);
}

template <typename T>
void Optimizer<T>::lazy_init(std::span<const ParameterRef<T>> params) {
  if (!state_.first.empty() || !state_.second.empty()) {
    const auto& reference = state_.first.empty() ? state_.second : state_.first;
    if (reference.size() != params.size()) {
      throw DimensionError("optimizer was initialised for " + std::to_string(reference.size()) +
                           " tensors, got " + std::to_string(params.size()));
    }
    return;
  }
  const bool wants_first = cfg_.kind == OptimizerKind::adam ||
                           (cfg_.kind == OptimizerKind::sgd && cfg_.momentum > 0.0);
  const bool wants_second = cfg_.kind != OptimizerKind::sgd;
  for (const auto& p : params) {
    if (wants_first) state_.first.emplace_back(p.value->shape());
    if (wants_second) state_.second.emplace_back(p.value->shape());
  }
}

template <typename T>
void Optimizer<T>::step(std::span<const ParameterRef<T>> params) {
  for (const auto& p : params) {
    if (p.value->shape() != p.grad->shape()) {
      throw DimensionError("parameter " + to_string(p.value->shape()) + " and gradient " +
                           to_string(p.grad->shape()) + " shapes differ");
    }
  }
  lazy_init(params);
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double lr = cfg_.learning_rate;
  const double eps = cfg_.epsilon;
  // Adam bias corrections.
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);

  const long long count = static_cast<long long>(params.size());
#pragma omp parallel for schedule(dynamic) if (parallel::enabled())
  for (long long idx = 0; idx < count; ++idx) {
    const auto& p = params[static_cast<std::size_t>(idx)];
    if (p.frozen) continue;
    auto w = p.value->data();
    const auto g = p.grad->data();
    switch (cfg_.kind) {
      case OptimizerKind::sgd:
        if (cfg_.momentum > 0.0) {
          auto v = state_.first[static_cast<std::size_t>(idx)].data();
          for (std::size_t i = 0; i < w.size(); ++i) {
            const double vi = cfg_.momentum * v[i] + static_cast<double>(g[i]);
            v[i] = static_cast<T>(vi);
            w[i] = static_cast<T>(w[i] - lr * vi);
          }
        } else {
          for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(w[i] - lr * g[i]);
        }
        break;
      case OptimizerKind::adam: {
        auto m = state_.first[static_cast<std::size_t>(idx)].data();
        auto v = state_.second[static_cast<std::size_t>(idx)].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = g[i];
          const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
          const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
          m[i] = static_cast<T>(mi);
          v[i] = static_cast<T>(vi);
          w[i] = static_cast<T>(w[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
        }
        break;
      }
      case OptimizerKind::rmsprop: {
        auto v = state_.second[static_cast<std::size_t>(idx)].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double gi = g[i];
          const double vi = cfg_.rho * v[i] + (1.0 - cfg_.rho) * gi * gi;
          v[i] = static_cast<T>(vi);
          w[i] = static_cast<T>(w[i] - lr * gi / (std::sqrt(vi) + eps));
        }
        break;
      }
    }
  }
}

template <typename T>
void Optimizer<T>::step(Network<T>& net) {
  std::vector<ParameterRef<T>> refs;
  refs.reserve(net.parameters().size());
  for (auto& p : net.parameters()) refs.push_back({&p.value, &p.grad, net.is_frozen(p.layer)});
  step(refs);
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace statekit
