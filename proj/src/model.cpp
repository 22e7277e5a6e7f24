#include "statekit/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "json.hpp"

#include "statekit/error.hpp"
#include "statekit/random.hpp"

namespace statekit {

using layers::Mode;
using nlohmann::json;

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax_xent: return "softmax_xent";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto kind : {LayerKind::conv3x3, LayerKind::maxpool2x2, LayerKind::dense, LayerKind::relu,
                    LayerKind::flatten, LayerKind::dropout, LayerKind::softmax_xent}) {
    if (to_string(kind) == text) return kind;
  }
  throw ConfigError("unknown layer kind '" + std::string(text) + "'");
}

std::string_view to_string(Preset preset) noexcept {
  switch (preset) {
    case Preset::modified_vgg19: return "modified_vgg19";
    case Preset::original_vgg19: return "original_vgg19";
    case Preset::tiny_test: return "tiny_test";
  }
  return "unknown";
}

Preset parse_preset(std::string_view text) {
  for (auto p : {Preset::modified_vgg19, Preset::original_vgg19, Preset::tiny_test}) {
    if (to_string(p) == text) return p;
  }
  throw ConfigError("unknown preset '" + std::string(text) + "'");
}

namespace {

LayerDescriptor simple(LayerKind kind, std::string name) {
  LayerDescriptor d;
  d.kind = kind;
  d.name = std::move(name);
  return d;
}

LayerDescriptor weighted(LayerKind kind, std::string name, std::size_t in, std::size_t out) {
  LayerDescriptor d = simple(kind, std::move(name));
  d.in_extent = in;
  d.out_extent = out;
  return d;
}

// Appends conv blocks; each block is N x (conv3x3 + relu) then a 2x2 max pool.
std::size_t add_conv_trunk(std::vector<LayerDescriptor>& layers, std::size_t in_channels,
                           std::initializer_list<std::pair<std::size_t, std::size_t>> blocks) {
  std::size_t channels = in_channels;
  std::size_t block = 1;
  for (auto [width, repeat] : blocks) {
    for (std::size_t j = 1; j <= repeat; ++j) {
      const std::string prefix = "block" + std::to_string(block) + ".conv" + std::to_string(j);
      layers.push_back(weighted(LayerKind::conv3x3, prefix, channels, width));
      layers.push_back(simple(LayerKind::relu, prefix + ".relu"));
      channels = width;
    }
    layers.push_back(simple(LayerKind::maxpool2x2, "block" + std::to_string(block) + ".pool"));
    ++block;
  }
  return channels;
}

void add_hidden_dense(std::vector<LayerDescriptor>& layers, const std::string& name,
                      std::size_t in, std::size_t out, double dropout_rate) {
  layers.push_back(weighted(LayerKind::dense, name, in, out));
  layers.push_back(simple(LayerKind::relu, name + ".relu"));
  LayerDescriptor drop = simple(LayerKind::dropout, name + ".dropout");
  drop.dropout_rate = dropout_rate;
  layers.push_back(drop);
}

}  // namespace

ArchitectureSpec make_architecture(Preset preset, std::size_t num_classes, std::size_t fc_width,
                                   double dropout_rate) {
  if (num_classes < 2) {
    throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
  }
  if (fc_width < 1) throw ConfigError("fc_width must be >= 1");
  layers::validate_dropout_rate(dropout_rate);

  ArchitectureSpec spec;
  spec.name = std::string(to_string(preset));
  spec.num_classes = num_classes;
  spec.fc_width = fc_width;
  auto& ls = spec.layers;

  switch (preset) {
    case Preset::modified_vgg19:
    case Preset::original_vgg19: {
      spec.input_shape = {3, 224, 224};
      const std::size_t c = add_conv_trunk(ls, 3, {{64, 2}, {128, 2}, {256, 4}, {512, 4}, {512, 4}});
      ls.push_back(simple(LayerKind::flatten, "flatten"));
      const std::size_t features = c * 7 * 7;
      if (preset == Preset::modified_vgg19) {
        add_hidden_dense(ls, "fc1", features, fc_width, dropout_rate);
        ls.push_back(weighted(LayerKind::dense, "head", fc_width, num_classes));
      } else {
        add_hidden_dense(ls, "fc1", features, fc_width, dropout_rate);
        add_hidden_dense(ls, "fc2", fc_width, fc_width, dropout_rate);
        ls.push_back(weighted(LayerKind::dense, "head", fc_width, num_classes));
      }
      break;
    }
    case Preset::tiny_test: {
      spec.input_shape = {3, 32, 32};
      const std::size_t c = add_conv_trunk(ls, 3, {{8, 2}, {16, 2}});
      ls.push_back(simple(LayerKind::flatten, "flatten"));
      add_hidden_dense(ls, "fc1", c * 8 * 8, fc_width, dropout_rate);
      ls.push_back(weighted(LayerKind::dense, "head", fc_width, num_classes));
      break;
    }
  }
  ls.push_back(simple(LayerKind::softmax_xent, "loss"));
  validate_architecture(spec);
  return spec;
}

std::vector<Shape> validate_architecture(const ArchitectureSpec& spec) {
  const auto& ls = spec.layers;
  if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (ls.size() < 2 || ls.back().kind != LayerKind::softmax_xent) {
    throw ConfigError("architecture '" + spec.name + "' must end with softmax_xent");
  }
  const auto& head = ls[ls.size() - 2];
  if (head.kind != LayerKind::dense || head.out_extent != spec.num_classes) {
    throw ConfigError("architecture '" + spec.name + "' must end with dense(" +
                      std::to_string(spec.num_classes) + ") before softmax_xent");
  }

  Shape shape(spec.input_shape.begin(), spec.input_shape.end());
  validate_shape(shape);
  std::vector<Shape> out;
  out.reserve(ls.size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto& l = ls[i];
    const std::string where = "layer " + std::to_string(i) + " '" + l.name + "'";
    if (l.name.empty()) throw ConfigError(where + " has no name");
    if (!names.insert(l.name).second) throw ConfigError("duplicate layer name '" + l.name + "'");
    if (l.has_parameters() && (l.in_extent == 0 || l.out_extent == 0)) {
      throw ConfigError(where + " needs positive extents");
    }
    switch (l.kind) {
      case LayerKind::conv3x3:
        if (shape.size() != 3 || shape[0] != l.in_extent) {
          throw DimensionError(where + " expects " + std::to_string(l.in_extent) +
                               " channels, input is " + to_string(shape));
        }
        shape[0] = l.out_extent;
        break;
      case LayerKind::maxpool2x2:
        if (shape.size() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0) {
          throw DimensionError(where + " needs even spatial extents, input is " + to_string(shape));
        }
        shape[1] /= 2;
        shape[2] /= 2;
        break;
      case LayerKind::flatten:
        shape = {element_count(shape)};
        break;
      case LayerKind::dense:
        if (shape.size() != 1 || shape[0] != l.in_extent) {
          throw DimensionError(where + " expects " + std::to_string(l.in_extent) +
                               " features, input is " + to_string(shape));
        }
        shape[0] = l.out_extent;
        break;
      case LayerKind::dropout:
        layers::validate_dropout_rate(l.dropout_rate);
        break;
      case LayerKind::relu:
        break;
      case LayerKind::softmax_xent:
        if (i + 1 != ls.size()) throw ConfigError(where + ": softmax_xent must be last");
        break;
    }
    out.push_back(shape);
  }
  return out;
}

std::uint64_t layer_parameter_count(const LayerDescriptor& layer) noexcept {
  const std::uint64_t in = layer.in_extent, out = layer.out_extent;
  switch (layer.kind) {
    case LayerKind::conv3x3: return 9 * in * out + out;
    case LayerKind::dense: return in * out + out;
    default: return 0;
  }
}

std::uint64_t count_parameters(const ArchitectureSpec& spec) noexcept {
  std::uint64_t total = 0;
  for (const auto& l : spec.layers) total += layer_parameter_count(l);
  return total;
}

std::size_t weight_layer_count(const ArchitectureSpec& spec) noexcept {
  return static_cast<std::size_t>(
      std::ranges::count_if(spec.layers, [](const auto& l) { return l.has_parameters(); }));
}

json to_json(const ArchitectureSpec& spec) {
  json layers_doc = json::array();
  for (const auto& l : spec.layers) {
    json d = {{"kind", to_string(l.kind)}, {"name", l.name}};
    if (l.has_parameters()) {
      d["in"] = l.in_extent;
      d["out"] = l.out_extent;
      d["frozen"] = l.frozen;
    }
    if (l.kind == LayerKind::dropout) d["rate"] = l.dropout_rate;
    layers_doc.push_back(std::move(d));
  }
  return {{"name", spec.name},
          {"input_shape", spec.input_shape},
          {"num_classes", spec.num_classes},
          {"fc_width", spec.fc_width},
          {"layers", std::move(layers_doc)}};
}

ArchitectureSpec architecture_from_json(const json& doc) {
  try {
    ArchitectureSpec spec;
    spec.name = doc.at("name").get<std::string>();
    spec.input_shape = doc.at("input_shape").get<std::array<std::size_t, 3>>();
    spec.num_classes = doc.at("num_classes").get<std::size_t>();
    spec.fc_width = doc.at("fc_width").get<std::size_t>();
    for (const auto& d : doc.at("layers")) {
      LayerDescriptor l;
      l.kind = parse_layer_kind(d.at("kind").get<std::string>());
      l.name = d.at("name").get<std::string>();
      if (l.has_parameters()) {
        l.in_extent = d.at("in").get<std::size_t>();
        l.out_extent = d.at("out").get<std::size_t>();
        l.frozen = d.value("frozen", false);
      }
      if (l.kind == LayerKind::dropout) l.dropout_rate = d.value("rate", 0.0);
      spec.layers.push_back(std::move(l));
    }
    validate_architecture(spec);
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed architecture document: ") + e.what());
  }
}

void set_frozen(ArchitectureSpec& spec, const FreezeSelection& selection) {
  using Kind = FreezeSelection::Kind;
  if (selection.kind == Kind::by_name) {
    for (const auto& name : selection.names) {
      auto it = std::ranges::find(spec.layers, name, &LayerDescriptor::name);
      if (it == spec.layers.end()) throw ConfigError("unknown layer name '" + name + "'");
      if (!it->has_parameters()) {
        throw ConfigError("layer '" + name + "' has no parameters to freeze");
      }
    }
  }
  for (auto& l : spec.layers) {
    if (!l.has_parameters()) continue;
    switch (selection.kind) {
      case Kind::none: l.frozen = false; break;
      case Kind::all: l.frozen = true; break;
      case Kind::conv_trunk: l.frozen = l.kind == LayerKind::conv3x3; break;
      case Kind::by_name: l.frozen = std::ranges::find(selection.names, l.name) != selection.names.end(); break;
    }
  }
}

template <typename T>
Network<T>::Network(ArchitectureSpec spec, std::uint64_t init_seed)
    : spec_(std::move(spec)), output_shapes_(validate_architecture(spec_)) {
  param_index_.assign(spec_.layers.size(), static_cast<std::size_t>(-1));
  caches_.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (!l.has_parameters()) continue;
    Shape wshape;
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::conv3x3) {
      wshape = {l.out_extent, l.in_extent, 3, 3};
      fan_in = l.in_extent * 9;
    } else {
      wshape = {l.in_extent, l.out_extent};
      fan_in = l.in_extent;
    }
    Tensor<T> weight(wshape);
    // He-uniform: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    Engine engine(mix_seed(init_seed, i));
    for (auto& v : weight.data()) v = static_cast<T>((2.0 * uniform01(engine) - 1.0) * limit);

    param_index_[i] = params_.size();
    Tensor<T> zero_w(wshape);
    params_.push_back({l.name + ".weight", i, std::move(weight), std::move(zero_w)});
    params_.push_back({l.name + ".bias", i, Tensor<T>({l.out_extent}), Tensor<T>({l.out_extent})});
  }
}

template <typename T>
Parameter<T>* Network<T>::find_parameter(std::string_view name) noexcept {
  auto it = std::ranges::find(params_, name, &Parameter<T>::name);
  return it == params_.end() ? nullptr : &*it;
}

template <typename T>
const Parameter<T>* Network<T>::find_parameter(std::string_view name) const noexcept {
  auto it = std::ranges::find(params_, name, &Parameter<T>::name);
  return it == params_.end() ? nullptr : &*it;
}

template <typename T>
void Network<T>::set_frozen(const FreezeSelection& selection) {
  statekit::set_frozen(spec_, selection);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed) {
  const auto& in_shape = spec_.input_shape;
  if (input.rank() != 4 || input.dim(1) != in_shape[0] || input.dim(2) != in_shape[1] ||
      input.dim(3) != in_shape[2]) {
    throw DimensionError("network '" + spec_.name + "' expects input [N," +
                         std::to_string(in_shape[0]) + "," + std::to_string(in_shape[1]) + "," +
                         std::to_string(in_shape[2]) + "], got " + to_string(input.shape()));
  }
  const bool training = mode == Mode::train;
  clear_caches();

  Tensor<T> x = input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    auto& cache = caches_[i];
    const std::size_t p = param_index_[i];
    switch (l.kind) {
      case LayerKind::conv3x3:
      case LayerKind::dense: {
        const auto& w = params_[p].value;
        const auto& b = params_[p + 1].value;
        if (training) {
          cache.input = std::move(x);
          x = l.kind == LayerKind::conv3x3 ? layers::conv3x3_forward(*cache.input, w, b)
                                           : layers::dense_forward(*cache.input, w, b);
        } else {
          x = l.kind == LayerKind::conv3x3 ? layers::conv3x3_forward(x, w, b)
                                           : layers::dense_forward(x, w, b);
        }
        break;
      }
      case LayerKind::relu:
        if (training) {
          cache.input = std::move(x);
          x = layers::relu_forward(*cache.input);
        } else {
          for (auto& v : x.data()) v = v > T{0} ? v : T{0};
        }
        break;
      case LayerKind::maxpool2x2: {
        auto r = layers::maxpool2x2_forward(x);
        if (training) cache.argmax = std::move(r.argmax);
        x = std::move(r.output);
        break;
      }
      case LayerKind::flatten:
        x = layers::flatten(std::move(x));
        break;
      case LayerKind::dropout: {
        if (!training || l.dropout_rate == 0.0) break;
        auto r = layers::dropout_apply(x, l.dropout_rate, mode, mix_seed(dropout_seed, i));
        cache.mask = std::move(r.mask);
        x = std::move(r.output);
        break;
      }
      case LayerKind::softmax_xent:
        break;  // the loss head is applied by the caller
    }
  }
  has_train_cache_ = training;
  return x;
}

template <typename T>
void Network<T>::backward(const Tensor<T>& grad_logits) {
  if (!has_train_cache_) {
    throw ConfigError("backward() needs a preceding train-mode forward()");
  }
  // Nothing below the lowest trainable layer consumes a gradient.
  std::size_t lowest_trainable = spec_.layers.size();
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (spec_.layers[i].has_parameters() && !spec_.layers[i].frozen) {
      lowest_trainable = i;
      break;
    }
  }
  for (auto& p : params_) p.grad.fill(T{0});

  const std::size_t batch = grad_logits.dim(0);
  auto input_shape_of = [&](std::size_t i) {
    Shape s{batch};
    if (i == 0) {
      s.insert(s.end(), spec_.input_shape.begin(), spec_.input_shape.end());
    } else {
      s.insert(s.end(), output_shapes_[i - 1].begin(), output_shapes_[i - 1].end());
    }
    return s;
  };

  Tensor<T> g = grad_logits;
  for (std::size_t i = spec_.layers.size(); i-- > lowest_trainable;) {
    const auto& l = spec_.layers[i];
    auto& cache = caches_[i];
    const bool need_input = i > lowest_trainable;
    switch (l.kind) {
      case LayerKind::conv3x3:
      case LayerKind::dense: {
        const std::size_t p = param_index_[i];
        const layers::BackwardNeeds needs{need_input, !l.frozen};
        auto grads = l.kind == LayerKind::conv3x3
                         ? layers::conv3x3_backward(*cache.input, params_[p].value, g, needs)
                         : layers::dense_backward(*cache.input, params_[p].value, g, needs);
        if (!l.frozen) {
          params_[p].grad = std::move(grads.weights);
          params_[p + 1].grad = std::move(grads.bias);
        }
        g = std::move(grads.input);
        break;
      }
      case LayerKind::relu:
        g = layers::relu_backward(*cache.input, g);
        break;
      case LayerKind::maxpool2x2:
        g = layers::maxpool2x2_backward(g, cache.argmax, input_shape_of(i));
        break;
      case LayerKind::flatten:
        g = std::move(g).reshape(input_shape_of(i));
        break;
      case LayerKind::dropout:
        if (cache.mask) g = layers::dropout_backward(g, *cache.mask);
        break;
      case LayerKind::softmax_xent:
        break;
    }
  }
  clear_caches();
}

template <typename T>
void Network<T>::zero_grad() noexcept {
  for (auto& p : params_) p.grad.fill(T{0});
}

template <typename T>
void Network<T>::clear_caches() noexcept {
  for (auto& c : caches_) c = LayerCache{};
  has_train_cache_ = false;
}

template <typename T>
std::uint64_t count_parameters(const Network<T>& net) noexcept {
  std::uint64_t total = 0;
  for (const auto& p : net.parameters()) total += p.value.size();
  return total;
}

template class Network<float>;
template class Network<double>;
template std::uint64_t count_parameters(const Network<float>&) noexcept;
template std::uint64_t count_parameters(const Network<double>&) noexcept;

}  // namespace statekit
