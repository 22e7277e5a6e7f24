#include "statekit/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "statekit/error.hpp"

namespace statekit::parallel {
namespace {
std::atomic<bool> g_deterministic{true};
}

void set_deterministic(bool on) noexcept { g_deterministic.store(on); }
bool deterministic() noexcept { return g_deterministic.load(); }

bool enabled() noexcept { return !deterministic() && max_threads() > 1; }

void set_max_threads(int n) {
  if (n < 1) throw ConfigError("thread count must be >= 1, got " + std::to_string(n));
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_from_env() {
  const char* raw = std::getenv("STATEKIT_THREADS");
  if (raw == nullptr || *raw == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(raw, &end, 10);
  if (*end != '\0' || n < 1) {
    throw ConfigError(std::string("STATEKIT_THREADS must be a positive integer, got '") + raw + "'");
  }
  const int cap = static_cast<int>(n);
  if (cap < max_threads()) set_max_threads(cap);
}

}  // namespace statekit::parallel
