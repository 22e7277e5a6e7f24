#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "statekit/tensor.hpp"

namespace statekit::layers {

enum class Mode { train, infer };

template <typename T>
struct ConvGradients {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
using DenseGradients = ConvGradients<T>;

// Lets callers skip work nobody consumes: the first layer needs no input
// gradient and frozen layers need no parameter gradients. Skipped parts come
// back as zeros.
struct BackwardNeeds {
  bool input = true;
  bool parameters = true;
};

// 3x3 kernel, stride 1, zero padding 1. input [N,Cin,H,W], weights
// [Cout,Cin,3,3], bias [Cout] -> [N,Cout,H,W]. Computed through im2col + gemm.
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
ConvGradients<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>& grad_output, BackwardNeeds needs = {});

template <typename T>
struct PoolResult {
  Tensor<T> output;
  // Flat input offset of the element that won each output cell.
  std::vector<std::size_t> argmax;
};

// 2x2 window, stride 2. H and W must be even. Ties pick the first element in
// row-major window order.
template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_output, std::span<const std::size_t> argmax,
                              const Shape& input_shape);

// input [N,F], weights [F,G], bias [G] -> [N,G].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
DenseGradients<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                 const Tensor<T>& grad_output, BackwardNeeds needs = {});

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

// Passes the gradient where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

// [N, ...] -> [N, prod(...)] in C,H,W row-major order.
template <typename T>
Tensor<T> flatten(const Tensor<T>& input);

// Inverted dropout mask: each entry is 0 with probability `rate`, otherwise
// 1/(1-rate). The same (shape, rate, seed) always gives the same mask.
template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double rate, std::uint64_t seed);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // all ones in infer mode
};

template <typename T>
DropoutResult<T> dropout_apply(const Tensor<T>& input, double rate, Mode mode, std::uint64_t seed);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const Tensor<T>& mask);

void validate_dropout_rate(double rate);

template <typename T>
struct XentResult {
  double loss;  // mean over the batch
  Tensor<T> probs;
  std::vector<double> per_sample_loss;
};

// Row-wise softmax (max-subtracted) fused with mean cross-entropy.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const std::size_t> labels);

// d(mean loss)/d(logits) = (probs - onehot) / N.
template <typename T>
Tensor<T> softmax_xent_backward(const Tensor<T>& probs, std::span<const std::size_t> labels);

}  // namespace statekit::layers
