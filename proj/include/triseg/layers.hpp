#pragma once

// Layer primitives with forward and backward passes. Every convolution is
// stride 1. conv2d uses same-padding (even kernels get the extra zero row and
// column on the bottom/right); conv2d_transpose is its exact adjoint followed
// by a centred crop (or zero pad) to the requested spatial size.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "triseg/rng.hpp"
#include "triseg/tensor.hpp"

namespace triseg {

/// Filter bank laid out as (filters, kernel_h, kernel_w, in_channels) plus one
/// bias per filter. The same type carries parameter gradients.
template <typename T>
struct ConvParams {
  std::size_t filters = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t in_channels = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  static ConvParams zeros(std::size_t filters, std::size_t kernel_h, std::size_t kernel_w,
                          std::size_t in_channels);

  std::size_t kernel_volume() const { return kernel_h * kernel_w * in_channels; }
  std::size_t weight_count() const { return filters * kernel_volume(); }
  std::size_t parameter_count() const { return weight_count() + filters; }

  std::size_t index(std::size_t f, std::size_t dy, std::size_t dx, std::size_t c) const {
    return ((f * kernel_h + dy) * kernel_w + dx) * in_channels + c;
  }
  T& w(std::size_t f, std::size_t dy, std::size_t dx, std::size_t c) { return weights[index(f, dy, dx, c)]; }
  T w(std::size_t f, std::size_t dy, std::size_t dx, std::size_t c) const { return weights[index(f, dy, dx, c)]; }

  /// Throws ShapeError if buffer lengths disagree with the geometry.
  void validate() const;
  bool same_geometry(const ConvParams& o) const {
    return filters == o.filters && kernel_h == o.kernel_h && kernel_w == o.kernel_w &&
           in_channels == o.in_channels;
  }

  template <typename U>
  ConvParams<U> cast() const {
    ConvParams<U> out{filters, kernel_h, kernel_w, in_channels, {}, {}};
    out.weights.assign(weights.begin(), weights.end());
    out.bias.assign(bias.begin(), bias.end());
    return out;
  }

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

/// Fan-balanced uniform init: weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
template <typename T>
void init_fan_uniform(ConvParams<T>& p, Rng& rng);

/// Argmax routing for a 2x2/stride-2 max pool. `argmax[i]` is the input
/// coordinate chosen for output element i (row-major over the pooled shape).
struct PoolIndices {
  struct Coord {
    std::uint32_t y = 0;
    std::uint32_t x = 0;
    friend bool operator==(const Coord&, const Coord&) = default;
  };
  Shape input_shape{};
  Shape output_shape{};
  std::vector<Coord> argmax;
};

/// Per-layer cache filled by forward and consumed by backward.
template <typename T>
struct LayerIO {
  std::optional<BasicTensor<T>> input;
  std::optional<BasicTensor<T>> output;
  std::optional<PoolIndices> pool;
  Shape output_shape{};

  void clear() {
    input.reset();
    output.reset();
    pool.reset();
    output_shape = Shape{};
  }
};

template <typename T>
struct ConvGradients {
  BasicTensor<T> grad_input;
  ConvParams<T> grad_params;
};

enum class Activation { relu, sigmoid };

// --- convolution --------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p);
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p, LayerIO<T>& io);
template <typename T>
ConvGradients<T> conv2d_backward(const LayerIO<T>& io, const ConvParams<T>& p,
                                 const BasicTensor<T>& grad_out);

// --- transposed convolution ---------------------------------------------

template <typename T>
BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>& input, const ConvParams<T>& p,
                                        std::size_t target_h, std::size_t target_w);
template <typename T>
BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>& input, const ConvParams<T>& p,
                                        std::size_t target_h, std::size_t target_w,
                                        LayerIO<T>& io);
template <typename T>
ConvGradients<T> conv2d_transpose_backward(const LayerIO<T>& io, const ConvParams<T>& p,
                                           const BasicTensor<T>& grad_out);

// --- pooling / upsampling -----------------------------------------------

/// Ties resolve to the first maximum in row-major window order.
template <typename T>
std::pair<BasicTensor<T>, PoolIndices> maxpool2x2_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> maxpool2x2_forward(const BasicTensor<T>& input, LayerIO<T>& io);
template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolIndices& indices, const BasicTensor<T>& grad_out);

/// Places each value at (y*factor, x*factor); every other position is zero.
template <typename T>
BasicTensor<T> zero_upsample(const BasicTensor<T>& input, std::size_t factor);
template <typename T>
BasicTensor<T> zero_upsample_backward(const BasicTensor<T>& grad_out, std::size_t factor);

// --- activations --------------------------------------------------------

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& t, Activation kind);
template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& t, Activation kind, LayerIO<T>& io);
/// Derivative taken from the cached forward output.
template <typename T>
BasicTensor<T> activation_backward(const LayerIO<T>& io, Activation kind,
                                   const BasicTensor<T>& grad_out);

template <typename T>
T sigmoid(T z);

}  // namespace triseg
