#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pbcnn/error.hpp"

namespace pbcnn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major array. Rank-4 tensors are laid out NCHW.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_dims();
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("Tensor", "numel", shape_numel(shape_), data_.size());
    }
  }

  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const BasicTensor& other) const noexcept { return shape_ == other.shape_; }

  /// Same data, new shape with an equal element count.
  BasicTensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
      throw ShapeError("reshape", "numel", data_.size(), shape_numel(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

 private:
  void check_dims() const {
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) throw ShapeError("Tensor", "dim" + std::to_string(i), 1, 0);
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Shape and byte-for-byte payload equality (distinguishes -0 from +0, NaN payloads).
template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename T>
double max_abs(const BasicTensor<T>& t) {
  double m = 0.0;
  for (T v : t.values()) m = std::max(m, static_cast<double>(v < T(0) ? -v : v));
  return m;
}

template <typename T>
bool all_finite(const BasicTensor<T>& t);

}  // namespace pbcnn
