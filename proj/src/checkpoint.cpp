#include "statekit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <set>

#include "statekit/error.hpp"

namespace statekit {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

constexpr char kMagic[4] = {'S', 'K', 'P', 'T'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Payload bytes are little-endian on disk; swap element-wise on big-endian hosts.
template <typename T>
void copy_le(const T* src, std::size_t count, std::uint8_t* dst) {
  std::memcpy(dst, src, count * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) std::reverse(dst + i * sizeof(T), dst + (i + 1) * sizeof(T));
  }
}

template <typename T>
void read_le(const std::uint8_t* src, std::size_t count, T* dst) {
  std::memcpy(dst, src, count * sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<std::uint8_t*>(dst);
    for (std::size_t i = 0; i < count; ++i) std::reverse(bytes + i * sizeof(T), bytes + (i + 1) * sizeof(T));
  }
}

}  // namespace

template <typename T>
CheckpointEntry CheckpointEntry::from_tensor(std::string name, const Tensor<T>& tensor) {
  CheckpointEntry e;
  e.name = std::move(name);
  e.dtype = dtype_of<T>;
  e.dims = tensor.shape();
  e.payload.resize(tensor.size() * sizeof(T));
  copy_le(tensor.data().data(), tensor.size(), e.payload.data());
  return e;
}

template <typename T>
Tensor<T> CheckpointEntry::to_tensor() const {
  const std::size_t count = element_count(dims);
  if (payload.size() != count * dtype_size(dtype)) {
    throw FormatError("entry '" + name + "' payload does not match dims " + statekit::to_string(dims));
  }
  std::vector<T> values(count);
  if (dtype == dtype_of<T>) {
    read_le(payload.data(), count, values.data());
  } else if (dtype == DType::f32) {
    std::vector<float> tmp(count);
    read_le(payload.data(), count, tmp.data());
    std::ranges::transform(tmp, values.begin(), [](float v) { return static_cast<T>(v); });
  } else {
    std::vector<double> tmp(count);
    read_le(payload.data(), count, tmp.data());
    std::ranges::transform(tmp, values.begin(), [](double v) { return static_cast<T>(v); });
  }
  return Tensor<T>(dims, std::move(values));
}

std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointEntry> entries) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  std::set<std::string_view> names;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > UINT16_MAX) {
      throw FormatError("checkpoint entry name must be 1..65535 bytes");
    }
    if (!names.insert(e.name).second) throw FormatError("duplicate checkpoint entry '" + e.name + "'");
    if (e.dims.empty() || e.dims.size() > 255) throw FormatError("entry '" + e.name + "' has bad rank");
    if (e.payload.size() != element_count(e.dims) * dtype_size(e.dtype)) {
      throw FormatError("entry '" + e.name + "' payload does not match its dims");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    out.push_back(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) put_le<std::uint64_t>(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError("bad checkpoint magic (expected SKPT)");
  }
  const auto version = r.le<std::uint32_t>("format_version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint format_version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>("entry_count");
  std::vector<CheckpointEntry> entries;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name_len = r.le<std::uint16_t>("name_len");
    const auto name = r.take(name_len, "entry name");
    e.name.assign(name.begin(), name.end());
    if (e.name.empty()) throw FormatError("checkpoint entry " + std::to_string(i) + " has an empty name");
    if (!names.insert(e.name).second) throw FormatError("duplicate checkpoint entry '" + e.name + "'");
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype > 1) throw FormatError("entry '" + e.name + "' has unknown dtype " + std::to_string(dtype));
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.le<std::uint8_t>("rank");
    if (rank == 0) throw FormatError("entry '" + e.name + "' has rank 0");
    std::uint64_t count_elems = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto extent = r.le<std::uint64_t>("dims");
      if (extent == 0) throw FormatError("entry '" + e.name + "' has a zero extent");
      if (count_elems > (UINT64_MAX / 8) / extent) throw FormatError("entry '" + e.name + "' is too large");
      count_elems *= extent;
      e.dims.push_back(static_cast<std::size_t>(extent));
    }
    const std::uint64_t payload = count_elems * dtype_size(e.dtype);
    if (payload > r.remaining()) {
      throw FormatError("entry '" + e.name + "' declares " + std::to_string(payload) +
                        " payload bytes but only " + std::to_string(r.remaining()) + " remain");
    }
    const auto values = r.take(static_cast<std::size_t>(payload), "payload");
    e.payload.assign(values.begin(), values.end());
    entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return entries;
}

std::vector<CheckpointEntry> read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

void write_checkpoint_file(const std::filesystem::path& path,
                           std::span<const CheckpointEntry> entries) {
  const auto bytes = encode_checkpoint(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to checkpoint '" + path.string() + "'");
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path) {
  std::vector<CheckpointEntry> entries;
  entries.reserve(net.parameters().size());
  for (const auto& p : net.parameters()) entries.push_back(CheckpointEntry::from_tensor(p.name, p.value));
  write_checkpoint_file(path, entries);
}

template <typename T>
LoadReport load_checkpoint(Network<T>& net, std::span<const CheckpointEntry> entries,
                           LoadMode mode) {
  std::map<std::string_view, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);

  LoadReport report;
  std::vector<std::pair<Parameter<T>*, const CheckpointEntry*>> plan;
  std::set<std::string_view> used;
  for (auto& p : net.parameters()) {
    const bool required = mode == LoadMode::strict ||
                          net.layers()[p.layer].kind == LayerKind::conv3x3;
    if (!required) {
      report.skipped.push_back(p.name);
      continue;
    }
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing entry '" + p.name + "'");
    if (it->second->dims != p.value.shape()) {
      throw FormatError("checkpoint entry '" + p.name + "' has shape " + to_string(it->second->dims) +
                        ", network expects " + to_string(p.value.shape()));
    }
    plan.emplace_back(&p, it->second);
    used.insert(it->first);
  }
  for (const auto& e : entries) {
    if (used.contains(e.name)) continue;
    if (mode == LoadMode::strict) {
      throw FormatError("checkpoint entry '" + e.name + "' does not belong to network '" +
                        net.spec().name + "'");
    }
    report.ignored.push_back(e.name);
  }
  // Decode everything before touching the network so a bad entry leaves it intact.
  std::vector<Tensor<T>> decoded;
  decoded.reserve(plan.size());
  for (const auto& [param, entry] : plan) decoded.push_back(entry->template to_tensor<T>());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    plan[i].first->value = std::move(decoded[i]);
    report.loaded.push_back(plan[i].first->name);
  }
  return report;
}

template <typename T>
LoadReport load_checkpoint(Network<T>& net, const std::filesystem::path& path, LoadMode mode) {
  const auto entries = read_checkpoint_file(path);
  try {
    return load_checkpoint(net, std::span<const CheckpointEntry>(entries), mode);
  } catch (const FormatError& e) {
    throw FormatError("'" + path.string() + "': " + e.what());
  }
}

ArchitectureSpec infer_architecture(std::span<const CheckpointEntry> entries) {
  static const std::regex conv_re(R"(block(\d+)\.conv(\d+)\.weight)");
  static const std::regex fc_re(R"(fc(\d+)\.weight)");
  std::map<std::pair<int, int>, const CheckpointEntry*> convs;
  std::map<int, const CheckpointEntry*> fcs;
  const CheckpointEntry* head = nullptr;
  std::smatch m;
  for (const auto& e : entries) {
    if (std::regex_match(e.name, m, conv_re)) {
      if (e.dims.size() != 4 || e.dims[2] != 3 || e.dims[3] != 3) {
        throw FormatError("entry '" + e.name + "' is not a [Cout,Cin,3,3] kernel");
      }
      convs[{std::stoi(m[1]), std::stoi(m[2])}] = &e;
    } else if (std::regex_match(e.name, m, fc_re)) {
      if (e.dims.size() != 2) throw FormatError("entry '" + e.name + "' is not a [in,out] matrix");
      fcs[std::stoi(m[1])] = &e;
    } else if (e.name == "head.weight") {
      if (e.dims.size() != 2) throw FormatError("entry 'head.weight' is not a [in,out] matrix");
      head = &e;
    }
  }
  if (convs.empty() || head == nullptr) {
    throw FormatError("checkpoint lacks the conv trunk or head needed to infer an architecture");
  }

  ArchitectureSpec spec;
  spec.name = "checkpoint";
  std::size_t channels = convs.begin()->second->dims[1];
  std::size_t blocks = 0;
  int current_block = -1;
  auto close_block = [&] {
    spec.layers.push_back({LayerKind::maxpool2x2, "block" + std::to_string(current_block) + ".pool"});
  };
  const std::size_t input_channels = channels;
  for (const auto& [key, e] : convs) {
    if (key.first != current_block) {
      if (current_block != -1) close_block();
      current_block = key.first;
      ++blocks;
    }
    const std::string name = "block" + std::to_string(key.first) + ".conv" + std::to_string(key.second);
    spec.layers.push_back({LayerKind::conv3x3, name, e->dims[1], e->dims[0]});
    spec.layers.push_back({LayerKind::relu, name + ".relu"});
    channels = e->dims[0];
  }
  close_block();
  spec.layers.push_back({LayerKind::flatten, "flatten"});

  const std::size_t first_in = fcs.empty() ? head->dims[0] : fcs.begin()->second->dims[0];
  const std::size_t cells = first_in / channels;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cells))));
  if (side == 0 || side * side * channels != first_in) {
    throw FormatError("cannot infer the input size: first dense layer takes " +
                      std::to_string(first_in) + " features from " + std::to_string(channels) + " channels");
  }
  const std::size_t input_side = side << blocks;
  spec.input_shape = {input_channels, input_side, input_side};
  for (const auto& [index, e] : fcs) {
    const std::string name = "fc" + std::to_string(index);
    spec.layers.push_back({LayerKind::dense, name, e->dims[0], e->dims[1]});
    spec.layers.push_back({LayerKind::relu, name + ".relu"});
    spec.layers.push_back({LayerKind::dropout, name + ".dropout"});
  }
  spec.layers.push_back({LayerKind::dense, "head", head->dims[0], head->dims[1]});
  spec.layers.push_back({LayerKind::softmax_xent, "loss"});
  spec.num_classes = head->dims[1];
  spec.fc_width = fcs.empty() ? head->dims[0] : fcs.begin()->second->dims[1];

  // Name it after the preset it reproduces, if any.
  for (auto preset : {Preset::modified_vgg19, Preset::original_vgg19, Preset::tiny_test}) {
    try {
      auto candidate = make_architecture(preset, spec.num_classes, spec.fc_width, 0.0);
      candidate.name = spec.name;
      if (candidate == spec) {
        spec.name = std::string(to_string(preset));
        break;
      }
    } catch (const Error&) {
    }
  }
  validate_architecture(spec);
  return spec;
}

#define STATEKIT_INSTANTIATE(T)                                                                  \
  template CheckpointEntry CheckpointEntry::from_tensor<T>(std::string, const Tensor<T>&);       \
  template Tensor<T> CheckpointEntry::to_tensor<T>() const;                                      \
  template void save_checkpoint<T>(const Network<T>&, const std::filesystem::path&);             \
  template LoadReport load_checkpoint<T>(Network<T>&, std::span<const CheckpointEntry>, LoadMode); \
  template LoadReport load_checkpoint<T>(Network<T>&, const std::filesystem::path&, LoadMode);

STATEKIT_INSTANTIATE(float)
STATEKIT_INSTANTIATE(double)
#undef STATEKIT_INSTANTIATE

}  // namespace statekit
