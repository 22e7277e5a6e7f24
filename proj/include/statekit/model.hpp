#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "statekit/layers.hpp"
#include "statekit/tensor.hpp"

namespace statekit {

enum class LayerKind { conv3x3, maxpool2x2, dense, relu, flatten, dropout, softmax_xent };

std::string_view to_string(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view text);

struct LayerDescriptor {
  LayerKind kind = LayerKind::relu;
  std::string name;
  // in/out channels for conv3x3, in/out features for dense; unused otherwise.
  std::size_t in_extent = 0;
  std::size_t out_extent = 0;
  double dropout_rate = 0.0;
  bool frozen = false;

  bool has_parameters() const noexcept {
    return kind == LayerKind::conv3x3 || kind == LayerKind::dense;
  }
  bool operator==(const LayerDescriptor&) const = default;
};

struct ArchitectureSpec {
  std::string name;
  std::array<std::size_t, 3> input_shape{3, 224, 224};  // C,H,W
  std::vector<LayerDescriptor> layers;
  std::size_t num_classes = 11;
  std::size_t fc_width = 1024;

  bool operator==(const ArchitectureSpec&) const = default;
};

enum class Preset { modified_vgg19, original_vgg19, tiny_test };

std::string_view to_string(Preset preset) noexcept;
Preset parse_preset(std::string_view text);

// Layer list for a named preset. Nothing is allocated; see Network for that.
ArchitectureSpec make_architecture(Preset preset, std::size_t num_classes, std::size_t fc_width,
                                   double dropout_rate);

// Checks that the layer extents chain from input to logits and that the list
// ends with dense(num_classes) + softmax_xent. Returns the per-sample output shape
// of every layer. Throws DimensionError or ConfigError.
std::vector<Shape> validate_architecture(const ArchitectureSpec& spec);

std::uint64_t layer_parameter_count(const LayerDescriptor& layer) noexcept;
std::uint64_t count_parameters(const ArchitectureSpec& spec) noexcept;
std::size_t weight_layer_count(const ArchitectureSpec& spec) noexcept;

nlohmann::json to_json(const ArchitectureSpec& spec);
ArchitectureSpec architecture_from_json(const nlohmann::json& doc);

struct FreezeSelection {
  enum class Kind { none, all, conv_trunk, by_name };
  Kind kind = Kind::none;
  std::vector<std::string> names;  // by_name only

  static FreezeSelection none() { return {Kind::none, {}}; }
  static FreezeSelection all() { return {Kind::all, {}}; }
  static FreezeSelection conv_trunk() { return {Kind::conv_trunk, {}}; }
  static FreezeSelection by_name(std::vector<std::string> names) {
    return {Kind::by_name, std::move(names)};
  }
};

// Flags weight layers as frozen. by_name freezes exactly the listed layers and
// unfreezes the rest. Unknown names raise ConfigError.
void set_frozen(ArchitectureSpec& spec, const FreezeSelection& selection);

template <typename T>
struct Parameter {
  std::string name;  // e.g. "block1.conv1.weight"
  std::size_t layer;
  Tensor<T> value;
  Tensor<T> grad;
};

// A sequential stack with owned parameters, gradients and per-layer caches.
template <typename T>
class Network {
 public:
  // Allocates parameters: He-uniform weights, zero biases.
  explicit Network(ArchitectureSpec spec, std::uint64_t init_seed = 0);

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  std::span<const LayerDescriptor> layers() const noexcept { return spec_.layers; }

  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  Parameter<T>* find_parameter(std::string_view name) noexcept;
  const Parameter<T>* find_parameter(std::string_view name) const noexcept;

  bool is_frozen(std::size_t layer) const { return spec_.layers.at(layer).frozen; }
  void set_frozen(const FreezeSelection& selection);

  // input [N,C,H,W] -> logits [N,num_classes]. Train mode keeps the caches
  // backward() needs; `dropout_seed` keys the dropout masks.
  Tensor<T> forward(const Tensor<T>& input, layers::Mode mode, std::uint64_t dropout_seed = 0);

  // Back-propagates d(loss)/d(logits) from the last train-mode forward and
  // overwrites every parameter gradient. Frozen layers get zero gradients
  // but still pass gradients to the layers below.
  void backward(const Tensor<T>& grad_logits);

  void zero_grad() noexcept;
  void clear_caches() noexcept;

 private:
  struct LayerCache {
    std::optional<Tensor<T>> input;
    std::vector<std::size_t> argmax;
    std::optional<Tensor<T>> mask;
  };

  ArchitectureSpec spec_;
  std::vector<Shape> output_shapes_;
  std::vector<Parameter<T>> params_;
  // Index into params_ of each layer's weight (bias follows), or npos.
  std::vector<std::size_t> param_index_;
  std::vector<LayerCache> caches_;
  bool has_train_cache_ = false;
};

template <typename T>
std::uint64_t count_parameters(const Network<T>& net) noexcept;

extern template class Network<float>;
extern template class Network<double>;

}  // namespace statekit
