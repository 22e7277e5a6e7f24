#include "statekit/reference.hpp"

#include "statekit/error.hpp"

namespace statekit::ref {

using kernels::Transpose;

template <typename T>
void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  if (a.size() < m * k || b.size() < k * n || c.size() < m * n) {
    throw DimensionError("reference gemm buffers too small");
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) {
        const T x = trans_a == Transpose::yes ? a[p * m + i] : a[i * k + p];
        const T y = trans_b == Transpose::yes ? b[j * k + p] : b[p * n + j];
        acc += x * y;
      }
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (input.rank() != 4 || weights.rank() != 4 || weights.dim(1) != input.dim(1) ||
      weights.dim(2) != 3 || weights.dim(3) != 3 || bias.size() != weights.dim(0)) {
    throw DimensionError("reference conv3x3 shape mismatch: input " + to_string(input.shape()) +
                         " weights " + to_string(weights.shape()));
  }
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weights.dim(0);
  Tensor<T> out({batch, cout, h, w});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          T acc{0};
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t kh = 0; kh < 3; ++kh) {
              for (std::size_t kw = 0; kw < 3; ++kw) {
                const auto iy = static_cast<std::ptrdiff_t>(y + kh) - 1;
                const auto ix = static_cast<std::ptrdiff_t>(x + kw) - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                    ix >= static_cast<std::ptrdiff_t>(w)) {
                  continue;
                }
                acc += weights.at({co, ci, kh, kw}) *
                       input.at({n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
            }
          }
          out.at({n, co, y, x}) = acc + bias[co];
        }
      }
    }
  }
  return out;
}

template <typename T>
layers::ConvGradients<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                          const Tensor<T>& grad_output) {
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weights.dim(0);
  layers::ConvGradients<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()),
                             Tensor<T>({cout})};
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const T go = grad_output.at({n, co, y, x});
          g.bias[co] += go;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t kh = 0; kh < 3; ++kh) {
              for (std::size_t kw = 0; kw < 3; ++kw) {
                const auto iy = static_cast<std::ptrdiff_t>(y + kh) - 1;
                const auto ix = static_cast<std::ptrdiff_t>(x + kw) - 1;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                    ix >= static_cast<std::ptrdiff_t>(w)) {
                  continue;
                }
                const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                g.weights.at({co, ci, kh, kw}) += go * input.at({n, ci, uy, ux});
                g.input.at({n, ci, uy, ux}) += go * weights.at({co, ci, kh, kw});
              }
            }
          }
        }
      }
    }
  }
  return g;
}

#define STATEKIT_INSTANTIATE(T)                                                                \
  template void gemm<T>(Transpose, Transpose, std::size_t, std::size_t, std::size_t,           \
                        std::span<const T>, std::span<const T>, std::span<T>, bool);           \
  template Tensor<T> conv3x3_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template layers::ConvGradients<T> conv3x3_backward<T>(const Tensor<T>&, const Tensor<T>&,    \
                                                        const Tensor<T>&);

STATEKIT_INSTANTIATE(float)
STATEKIT_INSTANTIATE(double)
#undef STATEKIT_INSTANTIATE

}  // namespace statekit::ref
