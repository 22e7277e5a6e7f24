#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace statekit {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
inline constexpr DType dtype_of = std::is_same_v<T, float> ? DType::f32 : DType::f64;

std::size_t dtype_size(DType dtype) noexcept;

// Row-major extents, outermost first. Images and activations use N,C,H,W.
using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 4;

std::size_t element_count(const Shape& shape) noexcept;
std::string to_string(const Shape& shape);

// Throws DimensionError unless 1 <= rank <= 4 and every extent is >= 1.
void validate_shape(const Shape& shape);

template <typename T>
class Tensor {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                "Tensor supports f32 and f64 only");

 public:
  using value_type = T;

  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);
  Tensor(Shape shape, std::initializer_list<T> values)
      : Tensor(std::move(shape), std::vector<T>(values)) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  static constexpr DType dtype() noexcept { return dtype_of<T>; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Multi-index access; rank of the index must match the tensor rank.
  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;

  // Same elements in the same order under a new shape.
  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;

  void fill(T value) noexcept;

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<T> data_;
};

// Plain matrix product of rank-2 tensors [m,k]x[k,n]. Each output element is
// accumulated over k from left to right.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Index of the maximum along the last axis for every leading slice; ties go to
// the lowest index.
template <typename T>
std::vector<std::size_t> argmax_last(const Tensor<T>& t);

template <typename T>
Tensor<T> identity_matrix(std::size_t n);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace statekit
