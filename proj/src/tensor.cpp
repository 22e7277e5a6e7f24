#include "statekit/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "statekit/error.hpp"
#include "statekit/kernels.hpp"

namespace statekit {

std::size_t dtype_size(DType dtype) noexcept { return dtype == DType::f32 ? 4 : 8; }

std::size_t element_count(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank) {
    throw DimensionError("tensor rank must be in [1,4], got shape " + to_string(shape));
  }
  if (std::ranges::any_of(shape, [](std::size_t e) { return e == 0; })) {
    throw DimensionError("tensor extents must be >= 1, got shape " + to_string(shape));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  validate_shape(shape_);
  if (data_.size() != element_count(shape_)) {
    throw DimensionError("shape " + to_string(shape_) + " needs " +
                         std::to_string(element_count(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

template <typename T>
std::size_t Tensor<T>::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index of rank " + std::to_string(index.size()) + " into shape " +
                         to_string(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) {
      throw DimensionError("index " + std::to_string(i) + " out of range on axis " +
                           std::to_string(axis) + " of shape " + to_string(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(index)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(index)];
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape shape) const& {
  return Tensor(*this).reshape(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape shape) && {
  validate_shape(shape);
  if (element_count(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + to_string(shape_) + " into " + to_string(shape));
  }
  return Tensor(std::move(shape), std::move(data_));
}

template <typename T>
void Tensor<T>::fill(T value) noexcept {
  std::ranges::fill(data_, value);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c({m, n});
  kernels::gemm<T>(kernels::Transpose::no, kernels::Transpose::no, m, n, k, a.data(), b.data(),
                   c.data());
  return c;
}

template <typename T>
std::vector<std::size_t> argmax_last(const Tensor<T>& t) {
  const std::size_t inner = t.shape().back();
  const std::size_t outer = t.size() / inner;
  std::vector<std::size_t> out(outer);
  const auto values = t.data();
  for (std::size_t r = 0; r < outer; ++r) {
    const T* row = values.data() + r * inner;
    std::size_t best = 0;
    for (std::size_t j = 1; j < inner; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[r] = best;
  }
  return out;
}

template <typename T>
Tensor<T> identity_matrix(std::size_t n) {
  Tensor<T> eye({n, n});
  for (std::size_t i = 0; i < n; ++i) eye[i * n + i] = T{1};
  return eye;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template std::vector<std::size_t> argmax_last(const Tensor<float>&);
template std::vector<std::size_t> argmax_last(const Tensor<double>&);
template Tensor<float> identity_matrix<float>(std::size_t);
template Tensor<double> identity_matrix<double>(std::size_t);

}  // namespace statekit
