#pragma once

// Dense rank-3 (height, width, channels) tensor. Storage is row-major with
// channels innermost, so all channels of one pixel are contiguous.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "triseg/error.hpp"

namespace triseg {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  /// Throws ShapeError on a zero extent or when the element count overflows.
  std::size_t element_count() const;
  bool valid() const { return height > 0 && width > 0 && channels > 0; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));

  /// Adopts `data`; its length must equal the shape's element count and every
  /// value must be finite.
  static BasicTensor from_data(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t offset(std::size_t y, std::size_t x, std::size_t c) const {
    return (y * shape_.width + x) * shape_.channels + c;
  }

  /// Bounds-checked read.
  T get(std::size_t y, std::size_t x, std::size_t c) const;
  /// Bounds-checked write; rejects non-finite values.
  void set(std::size_t y, std::size_t x, std::size_t c, T value);

  // Unchecked access for the layer kernels.
  T& operator()(std::size_t y, std::size_t x, std::size_t c) { return data_[offset(y, x, c)]; }
  T operator()(std::size_t y, std::size_t x, std::size_t c) const { return data_[offset(y, x, c)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  bool all_finite() const;
  void fill(T value);

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    auto dst = out.values();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Elementwise f(x). Throws NumericError if f produces a non-finite value.
template <typename T>
BasicTensor<T> map(const BasicTensor<T>& t, const std::function<T(T)>& f);

/// Elementwise f(a, b) over equal shapes.
template <typename T>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b,
                   const std::function<T(T, T)>& f);

/// Stacks parts along the channel axis, preserving order.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

/// Copies channels [first, first + count).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t first, std::size_t count);

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
double sum(const BasicTensor<T>& t);

}  // namespace triseg
