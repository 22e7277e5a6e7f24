#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "statekit/model.hpp"
#include "statekit/tensor.hpp"

namespace statekit {

// Layout, all little-endian:
//   "SKPT" | u32 format_version | u32 entry_count |
//   entry_count x { u16 name_len | name | u8 dtype | u8 rank | u64 dims[rank] | values }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f32;
  Shape dims;
  std::vector<std::uint8_t> payload;  // raw little-endian values

  template <typename T>
  static CheckpointEntry from_tensor(std::string name, const Tensor<T>& tensor);

  // Converts to T when the stored dtype differs.
  template <typename T>
  Tensor<T> to_tensor() const;

  bool operator==(const CheckpointEntry&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointEntry> entries);
// Strict parse: bad magic, unknown version/dtype, duplicate names, short or
// trailing bytes all raise FormatError.
std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes);

std::vector<CheckpointEntry> read_checkpoint_file(const std::filesystem::path& path);
void write_checkpoint_file(const std::filesystem::path& path,
                           std::span<const CheckpointEntry> entries);

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path);

enum class LoadMode { strict, trunk_only };

struct LoadReport {
  std::vector<std::string> loaded;   // parameter names replaced
  std::vector<std::string> skipped;  // network parameters left as they were
  std::vector<std::string> ignored;  // file entries not used
};

// strict: every network parameter must be present with a matching shape and
// the file may hold nothing else. trunk_only: every conv parameter must be
// present; dense entries are ignored so the head keeps its initialization.
template <typename T>
LoadReport load_checkpoint(Network<T>& net, std::span<const CheckpointEntry> entries,
                           LoadMode mode);

template <typename T>
LoadReport load_checkpoint(Network<T>& net, const std::filesystem::path& path, LoadMode mode);

// Rebuilds a layer list from canonical parameter names and shapes alone.
ArchitectureSpec infer_architecture(std::span<const CheckpointEntry> entries);

}  // namespace statekit
