#pragma once

#include <cstddef>
#include <span>

namespace statekit::kernels {

enum class Transpose { no, yes };

// C[m,n] = op(A)[m,k] * op(B)[k,n], or C += ... when `accumulate` is set.
// A is stored [m,k] (or [k,m] when transposed), B is [k,n] (or [n,k]).
// Every C element sums its k products left to right, so the result is
// bit-identical to gemm_reference regardless of thread count.
template <typename T>
void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate = false);

// Unfolds one [C,H,W] image into a [C*9, H*W] column matrix for a 3x3 kernel,
// stride 1, zero padding 1. Row index is c*9 + kh*3 + kw.
template <typename T>
void im2col_3x3(std::span<const T> image, std::size_t channels, std::size_t height,
                std::size_t width, std::span<T> columns);

// Adjoint of im2col_3x3: scatters column gradients back onto the image and
// adds them to `image_grad`.
template <typename T>
void col2im_3x3(std::span<const T> columns, std::size_t channels, std::size_t height,
                std::size_t width, std::span<T> image_grad);

}  // namespace statekit::kernels
