#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "statekit/checkpoint.hpp"
#include "statekit/data.hpp"
#include "statekit/error.hpp"
#include "statekit/model.hpp"
#include "statekit/training.hpp"

namespace statekit::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericAbort = 4, kIoError = 5 };

int exit_code_for(ErrorKind kind) noexcept;

// Aggregated run configuration document. Relative paths are resolved against
// the directory holding the config file.
struct RunConfig {
  Preset preset = Preset::tiny_test;
  std::size_t num_classes = 11;
  std::size_t fc_width = 32;
  double dropout_rate = 0.0;
  FreezeSelection freeze;
  TrainConfig train;  // seed, deterministic and optimizer live here too
  PreprocessConfig preprocess;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> init_checkpoint;
  LoadMode init_mode = LoadMode::trunk_only;
  std::filesystem::path best_checkpoint;  // default: <output_dir>/best.skpt
  std::filesystem::path output_dir = "out";

  ArchitectureSpec architecture() const;
};

// Default hidden width of each preset (1024, 4096, 32).
std::size_t default_fc_width(Preset preset) noexcept;

// Unknown keys raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
};

int cmd_train(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err);
// Generates the synthetic fixture plus a ready-to-run config.json in `dir`.
int cmd_make_fixture(const std::filesystem::path& dir, std::ostream& out, std::ostream& err);
int cmd_evaluate(const std::filesystem::path& config_path, const std::filesystem::path& checkpoint,
                 const std::string& split, std::ostream& out, std::ostream& err);
int cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                const std::optional<std::filesystem::path>& config_path, std::ostream& out,
                std::ostream& err);
int cmd_inspect(const std::filesystem::path& target, std::ostream& out, std::ostream& err);

// Full command-line entry point (argv[0] included).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace statekit::cli
