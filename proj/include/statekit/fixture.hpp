#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "statekit/data.hpp"

namespace statekit {

// Synthetic stand-in for the cooking-state dataset: one colour/texture
// family per class, with per-image jitter and pixel noise. Neighbouring
// classes share a palette entry and differ only in stripe orientation, so a
// small network memorizes the training split well before it generalizes.
struct FixtureOptions {
  std::size_t train_per_class = 16;
  std::size_t validation_per_class = 8;
  std::size_t test_per_class = 8;
  std::size_t min_side = 32;
  std::size_t max_side = 44;
  double noise_stddev = 48.0;
  std::uint64_t seed = 20190101;
};

Image8 synthetic_image(std::size_t label, std::size_t height, std::size_t width, double noise_stddev,
                       std::uint64_t seed);

// Writes images under `dir/images/<split>/` plus `dir/manifest.csv`.
// Returns the manifest that was written (paths relative to `dir`).
Manifest make_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

}  // namespace statekit
