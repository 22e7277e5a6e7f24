#include "statekit/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "statekit/error.hpp"
#include "statekit/random.hpp"

namespace statekit {

std::size_t class_index(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return i;
  }
  throw DataError("unknown class name '" + std::string(name) + "'");
}

std::vector<std::string> class_names_for(std::size_t num_classes) {
  std::vector<std::string> names;
  names.reserve(num_classes);
  for (std::size_t i = 0; i < num_classes; ++i) {
    names.push_back(num_classes == kNumClasses ? std::string(kClassNames[i])
                                               : "class_" + std::to_string(i));
  }
  return names;
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view text) {
  for (auto s : {Split::train, Split::validation, Split::test}) {
    if (to_string(s) == text) return s;
  }
  throw DataError("unknown split '" + std::string(text) + "'");
}

std::size_t Manifest::split_total(Split s) const noexcept {
  const auto& row = counts[static_cast<std::size_t>(s)];
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::vector<ManifestEntry> Manifest::split(Split s) const {
  std::vector<ManifestEntry> out;
  std::ranges::copy_if(entries, std::back_inserter(out),
                       [s](const ManifestEntry& e) { return e.split == s; });
  return out;
}

namespace {

// Comma-separated fields; a field may be double-quoted, with "" for a quote.
std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch != '"') {
        fields.back() += ch;
      } else if (i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else {
        quoted = false;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  return fields;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

constexpr std::string_view kRawMagic = "RAWIMG1";

Image8 decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 2;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&](const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > (1u << 24)) throw FormatError(std::string("PPM ") + what + " too large");
      ++pos;
      ++digits;
    }
    if (digits == 0) throw FormatError(std::string("PPM header is missing the ") + what);
    return value;
  };
  Image8 img;
  img.width = read_number("width");
  img.height = read_number("height");
  const std::size_t maxval = read_number("maxval");
  if (maxval != 255) throw FormatError("PPM maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("PPM header must end with one whitespace byte");
  }
  ++pos;
  if (img.width == 0 || img.height == 0) throw FormatError("PPM image has a zero extent");
  const std::size_t payload = 3 * img.width * img.height;
  if (bytes.size() - pos != payload) {
    throw FormatError("PPM payload is " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(payload));
  }
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

std::uint32_t read_u32le(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

Image8 decode_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kRawMagic.size() + 8) throw FormatError("RAWIMG1 header truncated");
  Image8 img;
  img.height = read_u32le(bytes, 7);
  img.width = read_u32le(bytes, 11);
  if (img.width == 0 || img.height == 0) throw FormatError("RAWIMG1 image has a zero extent");
  const std::size_t payload = 3 * img.width * img.height;
  if (bytes.size() - 15 != payload) {
    throw FormatError("RAWIMG1 payload is " + std::to_string(bytes.size() - 15) +
                      " bytes, expected " + std::to_string(payload));
  }
  img.rgb.assign(bytes.begin() + 15, bytes.end());
  return img;
}

}  // namespace

Manifest load_manifest(std::string_view document) {
  Manifest m;
  std::set<std::pair<std::size_t, std::string>> seen;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t start = 0;
  while (start <= document.size()) {
    auto end = document.find('\n', start);
    if (end == std::string_view::npos) end = document.size();
    std::string_view line = document.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (start > document.size()) break;
      continue;
    }
    if (!header_seen) {
      if (line != "path,split,class_name") {
        throw DataError("manifest line " + std::to_string(line_no) +
                        ": expected header 'path,split,class_name'");
      }
      header_seen = true;
      continue;
    }
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    std::vector<std::string> fields;
    try {
      fields = split_fields(line);
    } catch (const DataError& err) {
      throw DataError(where + err.what());
    }
    if (fields.size() != 3) {
      throw DataError(where + "expected 3 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw DataError(where + "empty path");
    ManifestEntry e;
    e.path = std::string(fields[0]);
    try {
      e.split = parse_split(fields[1]);
      e.label = class_index(fields[2]);
    } catch (const DataError& err) {
      throw DataError(where + err.what());
    }
    e.class_name = std::string(fields[2]);
    if (!seen.emplace(static_cast<std::size_t>(e.split), e.path).second) {
      throw DataError(where + "duplicate path '" + e.path + "' in split " +
                      std::string(to_string(e.split)));
    }
    ++m.counts[static_cast<std::size_t>(e.split)][e.label];
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw DataError("manifest is empty (no header line)");
  return m;
}

Manifest load_manifest_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return load_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string write_manifest(std::span<const ManifestEntry> entries) {
  std::ostringstream os;
  os << "path,split,class_name\n";
  for (const auto& e : entries) {
    os << csv_field(e.path) << ',' << to_string(e.split) << ',' << csv_field(e.class_name) << '\n';
  }
  return os.str();
}

Image8 decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  if (bytes.size() >= kRawMagic.size() &&
      std::equal(kRawMagic.begin(), kRawMagic.end(), bytes.begin())) {
    return decode_raw(bytes);
  }
  throw FormatError("unrecognised image container (expected PPM P6 or RAWIMG1)");
}

Image8 read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode_image(bytes);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Image8& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

std::vector<std::uint8_t> encode_rawimg(const Image8& image) {
  std::vector<std::uint8_t> out(kRawMagic.begin(), kRawMagic.end());
  put_u32le(out, static_cast<std::uint32_t>(image.height));
  put_u32le(out, static_cast<std::uint32_t>(image.width));
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

void write_image(const std::filesystem::path& path, const Image8& image) {
  const bool raw = path.extension() == ".raw" || path.extension() == ".rawimg";
  write_bytes(path, raw ? encode_rawimg(image) : encode_ppm(image));
}

template <typename T>
Tensor<T> to_tensor(const Image8& image) {
  if (image.rgb.size() != 3 * image.height * image.width) {
    throw DimensionError("image buffer does not match its extents");
  }
  const std::size_t plane = image.height * image.width;
  Tensor<T> t({3, image.height, image.width});
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + i] = static_cast<T>(image.rgb[3 * i + c]);
  }
  return t;
}

CropWindow center_crop_window(std::size_t height, std::size_t width, std::size_t target) {
  if (target < 1) throw ConfigError("crop target must be >= 1");
  if (height < target || width < target) {
    throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " is smaller than crop " + std::to_string(target));
  }
  return {(height - target) / 2, (width - target) / 2};
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) {
    throw DimensionError("resize expects [C,H,W], got " + to_string(image.shape()));
  }
  const std::size_t c = image.dim(0), ih = image.dim(1), iw = image.dim(2);
  Tensor<T> out({c, height, width});
  const double sy = static_cast<double>(ih) / static_cast<double>(height);
  const double sx = static_cast<double>(iw) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ih - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(iw - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = image.data().data() + ch * ih * iw;
        const double top = p[y0 * iw + x0] * (1 - wx) + p[y0 * iw + x1] * wx;
        const double bottom = p[y1 * iw + x0] * (1 - wx) + p[y1 * iw + x1] * wx;
        out[(ch * height + y) * width + x] = static_cast<T>(top * (1 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> center_crop(const Tensor<T>& image, std::size_t target) {
  if (target < 1) throw ConfigError("crop target must be >= 1");
  if (image.rank() != 3) {
    throw DimensionError("center_crop expects [C,H,W], got " + to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (std::min(h, w) < target) {
    // Upscale so the shorter side equals the target, keeping the aspect ratio.
    std::size_t nh = target, nw = target;
    if (h < w) {
      nw = std::max(target, static_cast<std::size_t>(std::lround(
                                static_cast<double>(w) * target / static_cast<double>(h))));
    } else if (w < h) {
      nh = std::max(target, static_cast<std::size_t>(std::lround(
                                static_cast<double>(h) * target / static_cast<double>(w))));
    }
    return center_crop(resize_bilinear(image, nh, nw), target);
  }
  const auto win = center_crop_window(h, w, target);
  const std::size_t c = image.dim(0);
  Tensor<T> out({c, target, target});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < target; ++y) {
      const T* src = image.data().data() + (ch * h + y + win.row_offset) * w + win.col_offset;
      std::copy(src, src + target, out.data().data() + (ch * target + y) * target);
    }
  }
  return out;
}

void validate(const PreprocessConfig& cfg) {
  if (cfg.target_size < 1) throw ConfigError("target_size must be >= 1");
  for (double s : cfg.channel_stds) {
    if (!(s > 0.0)) throw ConfigError("channel_stds must be > 0, got " + std::to_string(s));
  }
  for (double m : cfg.channel_means) {
    if (!std::isfinite(m)) throw ConfigError("channel_means must be finite");
  }
}

template <typename T>
Tensor<T> normalize(const Tensor<T>& image, const PreprocessConfig& cfg) {
  validate(cfg);
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("normalize expects [3,H,W], got " + to_string(image.shape()));
  }
  const std::size_t plane = image.dim(1) * image.dim(2);
  Tensor<T> out(image.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double x = image[c * plane + i];
      out[c * plane + i] =
          static_cast<T>((x / 255.0 - cfg.channel_means[c]) / cfg.channel_stds[c]);
    }
  }
  return out;
}

template <typename T>
Tensor<T> denormalize(const Tensor<T>& image, const PreprocessConfig& cfg) {
  validate(cfg);
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("denormalize expects [3,H,W], got " + to_string(image.shape()));
  }
  const std::size_t plane = image.dim(1) * image.dim(2);
  Tensor<T> out(image.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double y = image[c * plane + i];
      out[c * plane + i] = static_cast<T>((y * cfg.channel_stds[c] + cfg.channel_means[c]) * 255.0);
    }
  }
  return out;
}

template <typename T>
Tensor<T> preprocess(const Image8& image, const PreprocessConfig& cfg) {
  return normalize(center_crop(to_tensor<T>(image), cfg.target_size), cfg);
}

template <typename T>
Dataset<T> load_dataset(std::span<const ManifestEntry> entries, const std::filesystem::path& root,
                        const PreprocessConfig& cfg) {
  validate(cfg);
  if (entries.empty()) throw DataError("cannot build a dataset from zero entries");
  const std::size_t s = cfg.target_size;
  const std::size_t per_image = 3 * s * s;
  Dataset<T> ds{Tensor<T>({entries.size(), 3, s, s}), {}, {}};
  ds.labels.reserve(entries.size());
  ds.paths.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    std::filesystem::path p(e.path);
    if (p.is_relative()) p = root / p;
    const Tensor<T> img = preprocess<T>(read_image(p), cfg);
    std::ranges::copy(img.data(), ds.images.data().begin() + static_cast<std::ptrdiff_t>(i * per_image));
    ds.labels.push_back(e.label);
    ds.paths.push_back(e.path);
  }
  return ds;
}

std::vector<BatchPlan> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                    std::uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (count == 0) throw DataError("cannot batch an empty entry list");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Engine engine(mix_seed(seed, epoch));
  for (std::size_t i = count - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_below(engine, i + 1)]);
  }
  std::vector<BatchPlan> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.push_back({std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end))});
  }
  return batches;
}

std::vector<BatchPlan> sequential_batches(std::size_t count, std::size_t batch_size) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<BatchPlan> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    BatchPlan plan;
    for (std::size_t i = start; i < std::min(count, start + batch_size); ++i) plan.indices.push_back(i);
    batches.push_back(std::move(plan));
  }
  return batches;
}

template <typename T>
Batch<T> gather_batch(const Dataset<T>& data, const BatchPlan& plan) {
  if (plan.indices.empty()) throw DataError("empty batch plan");
  Shape shape = data.images.shape();
  const std::size_t per_image = data.images.size() / shape[0];
  shape[0] = plan.indices.size();
  Batch<T> b{Tensor<T>(shape), {}};
  b.labels.reserve(plan.indices.size());
  for (std::size_t i = 0; i < plan.indices.size(); ++i) {
    const std::size_t src = plan.indices[i];
    if (src >= data.size()) throw DataError("batch index " + std::to_string(src) + " out of range");
    const auto from = data.images.data().subspan(src * per_image, per_image);
    std::ranges::copy(from, b.images.data().begin() + static_cast<std::ptrdiff_t>(i * per_image));
    b.labels.push_back(data.labels[src]);
  }
  return b;
}

#define STATEKIT_INSTANTIATE(T)                                                                  \
  template Tensor<T> to_tensor<T>(const Image8&);                                                \
  template Tensor<T> center_crop<T>(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, std::size_t, std::size_t);             \
  template Tensor<T> normalize<T>(const Tensor<T>&, const PreprocessConfig&);                    \
  template Tensor<T> denormalize<T>(const Tensor<T>&, const PreprocessConfig&);                  \
  template Tensor<T> preprocess<T>(const Image8&, const PreprocessConfig&);                      \
  template Dataset<T> load_dataset<T>(std::span<const ManifestEntry>,                            \
                                      const std::filesystem::path&, const PreprocessConfig&);   \
  template Batch<T> gather_batch<T>(const Dataset<T>&, const BatchPlan&);

STATEKIT_INSTANTIATE(float)
STATEKIT_INSTANTIATE(double)
#undef STATEKIT_INSTANTIATE

}  // namespace statekit
