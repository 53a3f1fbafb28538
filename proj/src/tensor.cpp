#include "triseg/tensor.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace triseg {

std::size_t Shape::element_count() const {
  if (!valid()) throw ShapeError("shape has a zero extent: " + str());
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  if (height > kMax / width || height * width > kMax / channels)
    throw ShapeError("shape element count overflows: " + str());
  return height * width * channels;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << height << "x" << width << "x" << channels;
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
  if (!std::isfinite(fill)) throw NumericError("non-finite fill value");
  data_.assign(shape.element_count(), fill);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_data(Shape shape, std::vector<T> data) {
  if (data.size() != shape.element_count())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape.str());
  BasicTensor t;
  t.shape_ = shape;
  t.data_ = std::move(data);
  if (!t.all_finite()) throw NumericError("non-finite value in tensor data");
  return t;
}

template <typename T>
T BasicTensor<T>::get(std::size_t y, std::size_t x, std::size_t c) const {
  if (y >= shape_.height || x >= shape_.width || c >= shape_.channels) {
    std::ostringstream os;
    os << "index (" << y << "," << x << "," << c << ") out of bounds for " << shape_.str();
    throw IndexError(os.str());
  }
  return data_[offset(y, x, c)];
}

template <typename T>
void BasicTensor<T>::set(std::size_t y, std::size_t x, std::size_t c, T value) {
  if (y >= shape_.height || x >= shape_.width || c >= shape_.channels) {
    std::ostringstream os;
    os << "index (" << y << "," << x << "," << c << ") out of bounds for " << shape_.str();
    throw IndexError(os.str());
  }
  if (!std::isfinite(value)) throw NumericError("non-finite value written to tensor");
  data_[offset(y, x, c)] = value;
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  if (!std::isfinite(value)) throw NumericError("non-finite fill value");
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> map(const BasicTensor<T>& t, const std::function<T(T)>& f) {
  BasicTensor<T> out(t.shape());
  auto src = t.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const T v = f(src[i]);
    if (!std::isfinite(v)) throw NumericError("map produced a non-finite value");
    dst[i] = v;
  }
  return out;
}

template <typename T>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b,
                   const std::function<T(T, T)>& f) {
  if (a.shape() != b.shape())
    throw ShapeError("zip shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  BasicTensor<T> out(a.shape());
  auto sa = a.values();
  auto sb = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const T v = f(sa[i], sb[i]);
    if (!std::isfinite(v)) throw NumericError("zip produced a non-finite value");
    dst[i] = v;
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: empty list");
  const std::size_t h = parts[0].height();
  const std::size_t w = parts[0].width();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.height() != h || p.width() != w)
      throw ShapeError("concat_channels: spatial mismatch " + parts[0].shape().str() + " vs " +
                       p.shape().str());
    total += p.channels();
  }
  BasicTensor<T> out(Shape{h, w, total});
  T* dst = out.data();
  for (std::size_t px = 0; px < h * w; ++px) {
    for (const auto& p : parts) {
      const std::size_t c = p.channels();
      std::copy_n(p.data() + px * c, c, dst);
      dst += c;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t first, std::size_t count) {
  if (count == 0 || first + count > t.channels())
    throw ShapeError("slice_channels: range [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") outside " + t.shape().str());
  BasicTensor<T> out(Shape{t.height(), t.width(), count});
  const std::size_t c = t.channels();
  for (std::size_t px = 0; px < t.height() * t.width(); ++px)
    std::copy_n(t.data() + px * c + first, count, out.data() + px * count);
  return out;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("dot shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a.data()[i]) * static_cast<double>(b.data()[i]);
  return acc;
}

template <typename T>
double sum(const BasicTensor<T>& t) {
  double acc = 0.0;
  for (T v : t.values()) acc += v;
  return acc;
}

#define TRISEG_INSTANTIATE(T)                                                                  \
  template class BasicTensor<T>;                                                               \
  template BasicTensor<T> map(const BasicTensor<T>&, const std::function<T(T)>&);              \
  template BasicTensor<T> zip(const BasicTensor<T>&, const BasicTensor<T>&,                    \
                              const std::function<T(T, T)>&);                                  \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);                    \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);     \
  template double dot(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template double sum(const BasicTensor<T>&);

TRISEG_INSTANTIATE(float)
TRISEG_INSTANTIATE(double)

#undef TRISEG_INSTANTIATE

}  // namespace triseg
