#include "statekit/fixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "statekit/error.hpp"
#include "statekit/random.hpp"

namespace statekit {
namespace {

struct Rgb {
  double r, g, b;
};

// Six palette entries shared by class pairs (the last class has its own).
constexpr std::array<Rgb, 6> kPalette = {{{200, 60, 50},
                                          {60, 170, 70},
                                          {60, 80, 200},
                                          {210, 190, 60},
                                          {170, 70, 180},
                                          {80, 190, 200}}};

double gaussian(Engine& engine) {
  // Box-Muller on the portable uniform source.
  const double u1 = std::max(uniform01(engine), 1e-12);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint8_t clamp_pixel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string slug(std::string_view name) {
  std::string s;
  for (char c : name) s += c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Image8 synthetic_image(std::size_t label, std::size_t height, std::size_t width, double noise_stddev,
                       std::uint64_t seed) {
  if (label >= kNumClasses) throw DataError("synthetic label out of range");
  Engine engine(mix_seed(seed, label));
  // Each image borrows part of its colour from a random other class, so the
  // class families overlap and only the training split can be fitted exactly.
  const std::size_t other = (label + 1 + uniform_below(engine, kNumClasses - 1)) % kNumClasses;
  const double blend = 0.55 * uniform01(engine);
  const Rgb own = kPalette[label / 2];
  const Rgb mix = kPalette[other / 2];
  const Rgb base{own.r + blend * (mix.r - own.r), own.g + blend * (mix.g - own.g),
                 own.b + blend * (mix.b - own.b)};
  const bool vertical = label % 2 == 1;
  const double brightness = 0.7 + 0.6 * uniform01(engine);
  const double phase = 2.0 * std::numbers::pi * uniform01(engine);
  const double period = 5.0 + 3.0 * uniform01(engine);
  const double amplitude = 15.0 + 20.0 * uniform01(engine);

  Image8 img{height, width, std::vector<std::uint8_t>(3 * height * width)};
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double coord = static_cast<double>(vertical ? x : y);
      const double stripe = amplitude * std::sin(2.0 * std::numbers::pi * coord / period + phase);
      const std::size_t p = 3 * (y * width + x);
      img.rgb[p + 0] = clamp_pixel(base.r * brightness + stripe + noise_stddev * gaussian(engine));
      img.rgb[p + 1] = clamp_pixel(base.g * brightness + stripe + noise_stddev * gaussian(engine));
      img.rgb[p + 2] = clamp_pixel(base.b * brightness + stripe + noise_stddev * gaussian(engine));
    }
  }
  return img;
}

Manifest make_fixture(const std::filesystem::path& dir, const FixtureOptions& options) {
  if (options.min_side < 1 || options.max_side < options.min_side) {
    throw ConfigError("fixture image sides must satisfy 1 <= min_side <= max_side");
  }
  std::vector<ManifestEntry> entries;
  const std::array<std::pair<Split, std::size_t>, kNumSplits> plan = {
      {{Split::train, options.train_per_class},
       {Split::validation, options.validation_per_class},
       {Split::test, options.test_per_class}}};
  Engine sizes(mix_seed(options.seed, 0xF1));
  std::uint64_t serial = 0;
  for (const auto& [split, per_class] : plan) {
    const auto sub = std::filesystem::path("images") / std::string(to_string(split));
    std::error_code ec;
    std::filesystem::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create '" + (dir / sub).string() + "'");
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t label = 0; label < kNumClasses; ++label) {
        const std::size_t span = options.max_side - options.min_side + 1;
        const std::size_t h = options.min_side + uniform_below(sizes, span);
        const std::size_t w = options.min_side + uniform_below(sizes, span);
        const auto img = synthetic_image(label, h, w, options.noise_stddev,
                                         mix_seed(options.seed, ++serial));
        const auto rel = sub / (slug(kClassNames[label]) + "_" + std::to_string(i) + ".ppm");
        write_image(dir / rel, img);
        entries.push_back({rel.generic_string(), split, label, std::string(kClassNames[label])});
      }
    }
  }
  const std::string text = write_manifest(entries);
  std::ofstream out(dir / "manifest.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + (dir / "manifest.csv").string() + "'");
  out << text;
  return load_manifest(text);
}

}  // namespace statekit
