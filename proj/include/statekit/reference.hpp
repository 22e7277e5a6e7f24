#pragma once

// Serial reference implementations. These are the in-repo oracles for the
// parallel kernels and are not used on any production path.

#include <cstddef>
#include <span>

#include "statekit/kernels.hpp"
#include "statekit/layers.hpp"
#include "statekit/tensor.hpp"

namespace statekit::ref {

template <typename T>
void gemm(kernels::Transpose trans_a, kernels::Transpose trans_b, std::size_t m, std::size_t n,
          std::size_t k, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate = false);

// Direct zero-padded 3x3 cross-correlation, one accumulator per output
// element, summed over (cin, kh, kw) then biased.
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
layers::ConvGradients<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>& grad_output);

}  // namespace statekit::ref
