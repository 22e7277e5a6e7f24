#include "statekit/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "statekit/error.hpp"
#include "statekit/kernels.hpp"
#include "statekit/random.hpp"

namespace statekit::layers {

using kernels::Transpose;

namespace {

void check_conv_shapes(const Shape& input, const Shape& weights, std::size_t bias) {
  if (input.size() != 4) {
    throw DimensionError("conv3x3 expects input [N,C,H,W], got " + to_string(input));
  }
  if (weights.size() != 4 || weights[2] != 3 || weights[3] != 3) {
    throw DimensionError("conv3x3 expects weights [Cout,Cin,3,3], got " + to_string(weights));
  }
  if (weights[1] != input[1]) {
    throw DimensionError("conv3x3 channel mismatch: input " + to_string(input) + " weights " +
                         to_string(weights));
  }
  if (bias != weights[0]) {
    throw DimensionError("conv3x3 bias has " + std::to_string(bias) + " entries, weights " +
                         to_string(weights));
  }
}

void check_dense_shapes(const Shape& input, const Shape& weights, std::size_t bias) {
  if (input.size() != 2 || weights.size() != 2 || input[1] != weights[0] || bias != weights[1]) {
    throw DimensionError("dense shape mismatch: input " + to_string(input) + " weights " +
                         to_string(weights) + " bias [" + std::to_string(bias) + "]");
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  check_conv_shapes(input.shape(), weights.shape(), bias.size());
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weights.dim(0), plane = h * w, patch = cin * 9;

  Tensor<T> out({batch, cout, h, w});
  std::vector<T> columns(patch * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    kernels::im2col_3x3<T>(input.data().subspan(n * cin * plane, cin * plane), cin, h, w,
                           columns);
    auto out_n = out.data().subspan(n * cout * plane, cout * plane);
    kernels::gemm<T>(Transpose::no, Transpose::no, cout, plane, patch, weights.data(), columns,
                     out_n);
    for (std::size_t co = 0; co < cout; ++co) {
      const T b = bias[co];
      T* row = out_n.data() + co * plane;
      for (std::size_t i = 0; i < plane; ++i) row[i] += b;
    }
  }
  return out;
}

template <typename T>
ConvGradients<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>& grad_output, BackwardNeeds needs) {
  check_conv_shapes(input.shape(), weights.shape(), weights.dim(0));
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weights.dim(0), plane = h * w, patch = cin * 9;
  if (grad_output.shape() != Shape{batch, cout, h, w}) {
    throw DimensionError("conv3x3 backward: grad_output " + to_string(grad_output.shape()) +
                         " does not match output [" + std::to_string(batch) + "," +
                         std::to_string(cout) + "," + std::to_string(h) + "," +
                         std::to_string(w) + "]");
  }

  ConvGradients<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({cout})};
  std::vector<T> columns(patch * plane);
  for (std::size_t n = 0; n < batch; ++n) {
    auto go = grad_output.data().subspan(n * cout * plane, cout * plane);
    if (needs.parameters) {
      kernels::im2col_3x3<T>(input.data().subspan(n * cin * plane, cin * plane), cin, h, w,
                             columns);
      kernels::gemm<T>(Transpose::no, Transpose::yes, cout, patch, plane, go, columns,
                       g.weights.data(), n > 0);
      for (std::size_t co = 0; co < cout; ++co) {
        T acc = g.bias[co];
        const T* row = go.data() + co * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += row[i];
        g.bias[co] = acc;
      }
    }
    if (needs.input) {
      kernels::gemm<T>(Transpose::yes, Transpose::no, patch, plane, cout, weights.data(), go,
                       columns);
      kernels::col2im_3x3<T>(columns, cin, h, w, g.input.data().subspan(n * cin * plane, cin * plane));
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& input) {
  if (input.rank() != 4) {
    throw DimensionError("maxpool2x2 expects [N,C,H,W], got " + to_string(input.shape()));
  }
  const std::size_t batch = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("maxpool2x2 needs even spatial extents, got " + to_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{Tensor<T>({batch, c, oh, ow}), std::vector<std::size_t>(batch * c * oh * ow)};
  const auto in = input.data();
  auto out = r.output.data();
  for (std::size_t plane = 0; plane < batch * c; ++plane) {
    const std::size_t in_base = plane * h * w;
    const std::size_t out_base = plane * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t top = in_base + (2 * y) * w + 2 * x;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (std::size_t i = 1; i < 4; ++i) {
          if (in[window[i]] > in[best] || (std::isnan(in[window[i]]) && !std::isnan(in[best]))) {
            best = window[i];
          }
        }
        out[out_base + y * ow + x] = in[best];
        r.argmax[out_base + y * ow + x] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_output, std::span<const std::size_t> argmax,
                              const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) {
    throw DimensionError("maxpool2x2 backward: " + std::to_string(argmax.size()) +
                         " cached indices for grad " + to_string(grad_output.shape()));
  }
  Tensor<T> grad(input_shape);
  const auto go = grad_output.data();
  for (std::size_t i = 0; i < go.size(); ++i) grad[argmax[i]] += go[i];
  return grad;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  check_dense_shapes(input.shape(), weights.shape(), bias.size());
  const std::size_t n = input.dim(0), f = input.dim(1), g = weights.dim(1);
  Tensor<T> out({n, g});
  kernels::gemm<T>(Transpose::no, Transpose::no, n, g, f, input.data(), weights.data(),
                   out.data());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < g; ++j) out[r * g + j] += bias[j];
  }
  return out;
}

template <typename T>
DenseGradients<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                 const Tensor<T>& grad_output, BackwardNeeds needs) {
  check_dense_shapes(input.shape(), weights.shape(), weights.dim(1));
  const std::size_t n = input.dim(0), f = input.dim(1), g = weights.dim(1);
  if (grad_output.shape() != Shape{n, g}) {
    throw DimensionError("dense backward: grad_output " + to_string(grad_output.shape()) +
                         " expected [" + std::to_string(n) + "," + std::to_string(g) + "]");
  }
  DenseGradients<T> r{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({g})};
  if (needs.parameters) {
    kernels::gemm<T>(Transpose::yes, Transpose::no, f, g, n, input.data(), grad_output.data(),
                     r.weights.data());
    for (std::size_t row = 0; row < n; ++row) {
      for (std::size_t j = 0; j < g; ++j) r.bias[j] += grad_output[row * g + j];
    }
  }
  if (needs.input) {
    kernels::gemm<T>(Transpose::no, Transpose::yes, n, f, g, grad_output.data(), weights.data(),
                     r.input.data());
  }
  return r;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  // NaN passes through so a diverged activation still reaches the loss check.
  for (auto& v : out.data()) v = v <= T{0} ? T{0} : v;
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  if (input.shape() != grad_output.shape()) {
    throw DimensionError("relu backward shape mismatch: " + to_string(input.shape()) + " vs " +
                         to_string(grad_output.shape()));
  }
  Tensor<T> grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(input[i] > T{0})) grad[i] = T{0};
  }
  return grad;
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& input) {
  const std::size_t n = input.dim(0);
  return input.reshape({n, input.size() / n});
}

void validate_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
}

template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double rate, std::uint64_t seed) {
  validate_dropout_rate(rate);
  Tensor<T> mask(shape, T{1});
  if (rate == 0.0) return mask;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Engine engine(mix_seed(seed));
  for (auto& m : mask.data()) m = uniform01(engine) < rate ? T{0} : keep_scale;
  return mask;
}

template <typename T>
DropoutResult<T> dropout_apply(const Tensor<T>& input, double rate, Mode mode, std::uint64_t seed) {
  validate_dropout_rate(rate);
  if (mode == Mode::infer || rate == 0.0) return {input, Tensor<T>(input.shape(), T{1})};
  DropoutResult<T> r{input, dropout_mask<T>(input.shape(), rate, seed)};
  for (std::size_t i = 0; i < r.output.size(); ++i) r.output[i] *= r.mask[i];
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const Tensor<T>& mask) {
  if (grad_output.shape() != mask.shape()) {
    throw DimensionError("dropout backward shape mismatch: " + to_string(grad_output.shape()) +
                         " vs mask " + to_string(mask.shape()));
  }
  Tensor<T> grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
  return grad;
}

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("softmax_xent expects logits [N,K], got " + to_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  XentResult<T> r{0.0, Tensor<T>(logits.shape()), std::vector<double>(n)};
  std::vector<double> exps(k);
  double total = 0.0;
  for (std::size_t row = 0; row < n; ++row) {
    if (labels[row] >= k) {
      throw DataError("label " + std::to_string(labels[row]) + " out of range [0," +
                      std::to_string(k) + ") at row " + std::to_string(row));
    }
    const T* z = logits.data().data() + row * k;
    double max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) max = std::max(max, static_cast<double>(z[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      exps[j] = std::exp(static_cast<double>(z[j]) - max);
      sum += exps[j];
    }
    for (std::size_t j = 0; j < k; ++j) r.probs[row * k + j] = static_cast<T>(exps[j] / sum);
    const double loss = std::log(sum) - (static_cast<double>(z[labels[row]]) - max);
    r.per_sample_loss[row] = loss;
    total += loss;
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& probs, std::span<const std::size_t> labels) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_xent backward: label count mismatch");
  }
  Tensor<T> grad = probs;
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));
  for (std::size_t row = 0; row < n; ++row) {
    if (labels[row] >= k) {
      throw DataError("label " + std::to_string(labels[row]) + " out of range at row " +
                      std::to_string(row));
    }
    grad[row * k + labels[row]] -= T{1};
    for (std::size_t j = 0; j < k; ++j) grad[row * k + j] *= inv_n;
  }
  return grad;
}

#define STATEKIT_INSTANTIATE(T)                                                                 \
  template Tensor<T> conv3x3_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template ConvGradients<T> conv3x3_backward<T>(const Tensor<T>&, const Tensor<T>&,             \
                                                const Tensor<T>&, BackwardNeeds);               \
  template PoolResult<T> maxpool2x2_forward<T>(const Tensor<T>&);                               \
  template Tensor<T> maxpool2x2_backward<T>(const Tensor<T>&, std::span<const std::size_t>,     \
                                            const Shape&);                                      \
  template Tensor<T> dense_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template DenseGradients<T> dense_backward<T>(const Tensor<T>&, const Tensor<T>&,              \
                                               const Tensor<T>&, BackwardNeeds);                \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                         \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> flatten<T>(const Tensor<T>&);                                              \
  template Tensor<T> dropout_mask<T>(const Shape&, double, std::uint64_t);                      \
  template DropoutResult<T> dropout_apply<T>(const Tensor<T>&, double, Mode, std::uint64_t);    \
  template Tensor<T> dropout_backward<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template XentResult<T> softmax_xent<T>(const Tensor<T>&, std::span<const std::size_t>);       \
  template Tensor<T> softmax_xent_backward<T>(const Tensor<T>&, std::span<const std::size_t>);

STATEKIT_INSTANTIATE(float)
STATEKIT_INSTANTIATE(double)
#undef STATEKIT_INSTANTIATE

}  // namespace statekit::layers
