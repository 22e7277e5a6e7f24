#include "statekit/kernels.hpp"

#include <algorithm>
#include <vector>

#include "statekit/error.hpp"
#include "statekit/parallel.hpp"

namespace statekit::kernels {
namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kPanelBytes = 512 * 1024;

// Column tile so that a k x tile panel of B stays resident in L2.
template <typename T>
std::size_t column_tile(std::size_t k, std::size_t n) {
  std::size_t tile = kPanelBytes / (std::max<std::size_t>(k, 1) * sizeof(T));
  tile = std::clamp<std::size_t>(tile / 16 * 16, 16, 512);
  return std::min(tile, n);
}

template <typename T>
void check_extents(std::size_t m, std::size_t n, std::size_t k, std::size_t a, std::size_t b,
                   std::size_t c) {
  if (a < m * k || b < k * n || c < m * n) {
    throw DimensionError("gemm buffers too small for m=" + std::to_string(m) +
                         " n=" + std::to_string(n) + " k=" + std::to_string(k));
  }
}

template <typename T>
std::vector<T> transposed(const T* src, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  }
  return out;
}

// C[i0:i1, j0:j1] (+)= A[i0:i1, :] * B[:, j0:j1]; A is [m,k], B is [k,n].
template <typename T>
void gemm_tile(std::size_t n, std::size_t k, const T* __restrict a, const T* __restrict b,
               T* __restrict c, std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1,
               bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = i0; i < i1; ++i) std::fill(c + i * n + j0, c + i * n + j1, T{0});
  }
  if (i1 - i0 == kRowBlock) {
    T* __restrict c0 = c + i0 * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    const T* a0 = a + i0 * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) {
        const T bv = brow[j];
        c0[j] += x0 * bv;
        c1[j] += x1 * bv;
        c2[j] += x2 * bv;
        c3[j] += x3 * bv;
      }
    }
    return;
  }
  for (std::size_t i = i0; i < i1; ++i) {
    T* __restrict crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T x = a[i * k + p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += x * brow[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  check_extents<T>(m, n, k, a.size(), b.size(), c.size());
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c.begin(), c.begin() + m * n, T{0});
    return;
  }

  std::vector<T> a_buf, b_buf;
  const T* a_ptr = a.data();
  const T* b_ptr = b.data();
  if (trans_a == Transpose::yes) {
    a_buf = transposed(a.data(), k, m);
    a_ptr = a_buf.data();
  }
  if (trans_b == Transpose::yes) {
    b_buf = transposed(b.data(), n, k);
    b_ptr = b_buf.data();
  }

  const std::size_t col_tile = column_tile<T>(k, n);
  const std::size_t col_blocks = (n + col_tile - 1) / col_tile;
  const std::size_t row_blocks = (m + kRowBlock - 1) / kRowBlock;
  const long long tiles = static_cast<long long>(col_blocks * row_blocks);
  T* c_ptr = c.data();

  // Column-block major so each B panel is reused by every row block.
#pragma omp parallel for schedule(static) if (parallel::enabled())
  for (long long t = 0; t < tiles; ++t) {
    const std::size_t jb = static_cast<std::size_t>(t) / row_blocks;
    const std::size_t ib = static_cast<std::size_t>(t) % row_blocks;
    const std::size_t i0 = ib * kRowBlock, i1 = std::min(m, i0 + kRowBlock);
    const std::size_t j0 = jb * col_tile, j1 = std::min(n, j0 + col_tile);
    gemm_tile(n, k, a_ptr, b_ptr, c_ptr, i0, i1, j0, j1, accumulate);
  }
}

template <typename T>
void im2col_3x3(std::span<const T> image, std::size_t channels, std::size_t height,
                std::size_t width, std::span<T> columns) {
  const std::size_t plane = height * width;
  if (image.size() < channels * plane || columns.size() < channels * 9 * plane) {
    throw DimensionError("im2col buffers too small");
  }
  const long long cc = static_cast<long long>(channels);
#pragma omp parallel for schedule(static) if (parallel::enabled())
  for (long long c = 0; c < cc; ++c) {
    const T* src = image.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        T* dst = columns.data() + (static_cast<std::size_t>(c) * 9 + kh * 3 + kw) * plane;
        for (std::size_t y = 0; y < height; ++y) {
          T* out = dst + y * width;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + kh) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(out, out + width, T{0});
            continue;
          }
          const T* row = src + static_cast<std::size_t>(iy) * width;
          for (std::size_t x = 0; x < width; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kw) - 1;
            out[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width))
                         ? T{0}
                         : row[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_3x3(std::span<const T> columns, std::size_t channels, std::size_t height,
                std::size_t width, std::span<T> image_grad) {
  const std::size_t plane = height * width;
  if (image_grad.size() < channels * plane || columns.size() < channels * 9 * plane) {
    throw DimensionError("col2im buffers too small");
  }
  const long long cc = static_cast<long long>(channels);
#pragma omp parallel for schedule(static) if (parallel::enabled())
  for (long long c = 0; c < cc; ++c) {
    T* dst = image_grad.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t kh = 0; kh < 3; ++kh) {
      for (std::size_t kw = 0; kw < 3; ++kw) {
        const T* src = columns.data() + (static_cast<std::size_t>(c) * 9 + kh * 3 + kw) * plane;
        for (std::size_t y = 0; y < height; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + kh) - 1;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          T* row = dst + static_cast<std::size_t>(iy) * width;
          const T* in = src + y * width;
          for (std::size_t x = 0; x < width; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + kw) - 1;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(width)) {
              row[static_cast<std::size_t>(ix)] += in[x];
            }
          }
        }
      }
    }
  }
}

#define STATEKIT_INSTANTIATE(T)                                                               \
  template void gemm<T>(Transpose, Transpose, std::size_t, std::size_t, std::size_t,          \
                        std::span<const T>, std::span<const T>, std::span<T>, bool);          \
  template void im2col_3x3<T>(std::span<const T>, std::size_t, std::size_t, std::size_t,      \
                              std::span<T>);                                                  \
  template void col2im_3x3<T>(std::span<const T>, std::size_t, std::size_t, std::size_t,      \
                              std::span<T>);

STATEKIT_INSTANTIATE(float)
STATEKIT_INSTANTIATE(double)
#undef STATEKIT_INSTANTIATE

}  // namespace statekit::kernels
