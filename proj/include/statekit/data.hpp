#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statekit/tensor.hpp"

namespace statekit {

inline constexpr std::size_t kNumClasses = 11;

// Canonical label order. Confusion-matrix axes and manifest labels use it.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "Floured", "Diced",  "Jullienne", "Peeled", "Sliced",      "Other",
    "Grated",  "Mixed",  "Whole",     "Juiced", "Creamy Paste"};

// Returns the label index of a class name, or throws DataError.
std::size_t class_index(std::string_view name);

// Names for a K-way head: the canonical names when K == 11, else "class_<k>".
std::vector<std::string> class_names_for(std::size_t num_classes);

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };
inline constexpr std::size_t kNumSplits = 3;

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

struct ManifestEntry {
  std::string path;
  Split split = Split::train;
  std::size_t label = 0;
  std::string class_name;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  // counts[split][label]
  std::array<std::array<std::size_t, kNumClasses>, kNumSplits> counts{};

  std::size_t split_total(Split split) const noexcept;
  std::vector<ManifestEntry> split(Split split) const;
};

// Parses CSV text with header `path,split,class_name`. Errors carry the
// 1-based line number.
Manifest load_manifest(std::string_view document);
Manifest load_manifest_file(const std::filesystem::path& path);
std::string write_manifest(std::span<const ManifestEntry> entries);

// 8-bit RGB image, interleaved, row-major.
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  bool operator==(const Image8&) const = default;
};

// PPM P6 (maxval 255) or RAWIMG1, chosen by magic bytes.
Image8 decode_image(std::span<const std::uint8_t> bytes);
Image8 read_image(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Image8& image);
std::vector<std::uint8_t> encode_rawimg(const Image8& image);
void write_image(const std::filesystem::path& path, const Image8& image);

// [3,H,W] with the raw 0..255 values.
template <typename T>
Tensor<T> to_tensor(const Image8& image);

struct CropWindow {
  std::size_t row_offset;
  std::size_t col_offset;
};

// Offsets used when no resize is needed: floor((H-target)/2), floor((W-target)/2).
CropWindow center_crop_window(std::size_t height, std::size_t width, std::size_t target);

// [3,H,W] -> [3,target,target]. When the shorter side is below `target` the
// image is first resized bilinearly so that side equals `target`.
template <typename T>
Tensor<T> center_crop(const Tensor<T>& image, std::size_t target);

// Half-pixel-centred bilinear resize of a [3,H,W] image.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& image, std::size_t height, std::size_t width);

struct PreprocessConfig {
  std::size_t target_size = 224;
  std::array<double, 3> channel_means{0.485, 0.456, 0.406};
  std::array<double, 3> channel_stds{0.229, 0.224, 0.225};
};

void validate(const PreprocessConfig& cfg);

// Per channel: (x/255 - mean) / std.
template <typename T>
Tensor<T> normalize(const Tensor<T>& image, const PreprocessConfig& cfg);

template <typename T>
Tensor<T> denormalize(const Tensor<T>& image, const PreprocessConfig& cfg);

// crop + normalize for one decoded image.
template <typename T>
Tensor<T> preprocess(const Image8& image, const PreprocessConfig& cfg);

// Preprocessed images of one split, kept in manifest order.
template <typename T>
struct Dataset {
  Tensor<T> images;  // [N,3,S,S]
  std::vector<std::size_t> labels;
  std::vector<std::string> paths;

  std::size_t size() const noexcept { return labels.size(); }
};

// Loads and preprocesses entries; relative paths resolve against `root`.
template <typename T>
Dataset<T> load_dataset(std::span<const ManifestEntry> entries, const std::filesystem::path& root,
                        const PreprocessConfig& cfg);

// One mini-batch worth of dataset row indices.
struct BatchPlan {
  std::vector<std::size_t> indices;
};

// Seeded per-epoch shuffle of [0, count) cut into batches; the last batch may
// be short. Identical (seed, epoch) always produce the same plan.
std::vector<BatchPlan> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                    std::uint64_t epoch);

// Unshuffled batches in index order, used for evaluation.
std::vector<BatchPlan> sequential_batches(std::size_t count, std::size_t batch_size);

template <typename T>
struct Batch {
  Tensor<T> images;
  std::vector<std::size_t> labels;
};

template <typename T>
Batch<T> gather_batch(const Dataset<T>& data, const BatchPlan& plan);

}  // namespace statekit
