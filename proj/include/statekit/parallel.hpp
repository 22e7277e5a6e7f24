#pragma once

namespace statekit::parallel {

// Deterministic mode runs every kernel single-threaded. The kernels only
// parallelize over independent output elements, so throughput mode yields the
// same bits today, but callers must not rely on that.
void set_deterministic(bool on) noexcept;
bool deterministic() noexcept;

// True when kernels may fan out across OpenMP threads.
bool enabled() noexcept;

// Applies STATEKIT_THREADS (if set) as an upper bound on the worker count.
void configure_from_env();

void set_max_threads(int n);
int max_threads() noexcept;

// RAII toggle used by tests and the CLI.
class ScopedMode {
 public:
  explicit ScopedMode(bool deterministic_mode) noexcept : previous_(deterministic()) {
    set_deterministic(deterministic_mode);
  }
  ~ScopedMode() { set_deterministic(previous_); }
  ScopedMode(const ScopedMode&) = delete;
  ScopedMode& operator=(const ScopedMode&) = delete;

 private:
  bool previous_;
};

}  // namespace statekit::parallel
