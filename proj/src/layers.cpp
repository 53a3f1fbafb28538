#include "triseg/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace triseg {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMat<T>>;

// Upper bound on im2col tile size (elements). Keeps the patch matrix in L2/L3.
constexpr std::size_t kTileElements = std::size_t{1} << 18;

// Cross-correlation geometry: out(oy, ox, f) = bias[f] +
//   sum_{dy,dx,c} w[f,dy,dx,c] * in(oy - pad_top + dy, ox - pad_left + dx, c)
// with out-of-range input reading as zero.
struct Correlation {
  std::size_t in_h, in_w, in_c;
  std::size_t out_h, out_w;
  std::size_t kh, kw, filters;
  std::ptrdiff_t pad_top, pad_left;

  std::size_t k() const { return kh * kw * in_c; }
  std::size_t rows_per_tile() const {
    const std::size_t per_row = std::max<std::size_t>(1, out_w * k());
    return std::clamp<std::size_t>(kTileElements / per_row, 1, out_h);
  }
};

// Fills patch rows for output rows [row0, row0 + rows).
template <typename T>
void im2col(const Correlation& g, const T* in, std::size_t row0, std::size_t rows, T* patches) {
  const std::size_t k = g.k();
  const std::size_t run = g.kw * g.in_c;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(row0 + r);
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      T* dst = patches + (r * g.out_w + ox) * k;
      const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox) - g.pad_left;
      const std::ptrdiff_t dx_lo = std::max<std::ptrdiff_t>(0, -ix0);
      const std::ptrdiff_t dx_hi =
          std::min<std::ptrdiff_t>(g.kw, static_cast<std::ptrdiff_t>(g.in_w) - ix0);
      for (std::size_t dy = 0; dy < g.kh; ++dy, dst += run) {
        const std::ptrdiff_t iy = oy - g.pad_top + static_cast<std::ptrdiff_t>(dy);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) || dx_lo >= dx_hi) {
          std::fill_n(dst, run, T(0));
          continue;
        }
        std::fill_n(dst, dx_lo * g.in_c, T(0));
        const T* src = in + (static_cast<std::size_t>(iy) * g.in_w + (ix0 + dx_lo)) * g.in_c;
        std::memcpy(dst + dx_lo * g.in_c, src, (dx_hi - dx_lo) * g.in_c * sizeof(T));
        std::fill(dst + dx_hi * g.in_c, dst + run, T(0));
      }
    }
  }
}

// Adjoint of im2col: accumulates patch rows back into the input gradient.
template <typename T>
void col2im_add(const Correlation& g, const T* patches, std::size_t row0, std::size_t rows,
                T* grad_in) {
  const std::size_t k = g.k();
  const std::size_t run = g.kw * g.in_c;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(row0 + r);
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      const T* src = patches + (r * g.out_w + ox) * k;
      const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox) - g.pad_left;
      const std::ptrdiff_t dx_lo = std::max<std::ptrdiff_t>(0, -ix0);
      const std::ptrdiff_t dx_hi =
          std::min<std::ptrdiff_t>(g.kw, static_cast<std::ptrdiff_t>(g.in_w) - ix0);
      for (std::size_t dy = 0; dy < g.kh; ++dy, src += run) {
        const std::ptrdiff_t iy = oy - g.pad_top + static_cast<std::ptrdiff_t>(dy);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) || dx_lo >= dx_hi) continue;
        T* dst = grad_in + (static_cast<std::size_t>(iy) * g.in_w + (ix0 + dx_lo)) * g.in_c;
        const T* s = src + dx_lo * g.in_c;
        const std::size_t n = (dx_hi - dx_lo) * g.in_c;
        for (std::size_t i = 0; i < n; ++i) dst[i] += s[i];
      }
    }
  }
}

template <typename T>
void correlate_forward(const Correlation& g, const T* in, const T* weights, const T* bias, T* out) {
  const std::size_t k = g.k();
  const std::size_t tile_rows = g.rows_per_tile();
  std::vector<T> patches(tile_rows * g.out_w * k);
  ConstRowMap<T> w(weights, g.filters, k);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias, g.filters);
  for (std::size_t row0 = 0; row0 < g.out_h; row0 += tile_rows) {
    const std::size_t rows = std::min(tile_rows, g.out_h - row0);
    const std::size_t p = rows * g.out_w;
    im2col(g, in, row0, rows, patches.data());
    ConstRowMap<T> x(patches.data(), p, k);
    RowMap<T> o(out + row0 * g.out_w * g.filters, p, g.filters);
    o.noalias() = x * w.transpose();
    o.rowwise() += b;
  }
}

// grad_in must be zero-initialised by the caller; grad_w and grad_b are overwritten.
template <typename T>
void correlate_backward(const Correlation& g, const T* in, const T* weights, const T* grad_out,
                        T* grad_in, T* grad_w, T* grad_b) {
  const std::size_t k = g.k();
  const std::size_t tile_rows = g.rows_per_tile();
  std::vector<T> patches(tile_rows * g.out_w * k);
  ConstRowMap<T> w(weights, g.filters, k);
  RowMap<T> gw(grad_w, g.filters, k);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(grad_b, g.filters);
  gw.setZero();
  gb.setZero();
  for (std::size_t row0 = 0; row0 < g.out_h; row0 += tile_rows) {
    const std::size_t rows = std::min(tile_rows, g.out_h - row0);
    const std::size_t p = rows * g.out_w;
    ConstRowMap<T> go(grad_out + row0 * g.out_w * g.filters, p, g.filters);
    im2col(g, in, row0, rows, patches.data());
    RowMap<T> x(patches.data(), p, k);
    gw.noalias() += go.transpose() * x;
    // Row by row in a fixed order; Eigen's colwise().sum() changes its
    // summation order with the buffer's alignment.
    for (std::size_t r = 0; r < p; ++r) gb += go.row(r);
    x.noalias() = go * w;
    col2im_add(g, patches.data(), row0, rows, grad_in);
  }
}

template <typename T>
std::vector<T> flip_spatial(const ConvParams<T>& p) {
  std::vector<T> out(p.weights.size());
  for (std::size_t f = 0; f < p.filters; ++f)
    for (std::size_t dy = 0; dy < p.kernel_h; ++dy)
      for (std::size_t dx = 0; dx < p.kernel_w; ++dx)
        for (std::size_t c = 0; c < p.in_channels; ++c)
          out[p.index(f, dy, dx, c)] =
              p.weights[p.index(f, p.kernel_h - 1 - dy, p.kernel_w - 1 - dx, c)];
  return out;
}

std::ptrdiff_t floor_div2(std::ptrdiff_t v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); }

template <typename T>
Correlation same_geometry(const BasicTensor<T>& input, const ConvParams<T>& p) {
  return Correlation{input.height(),
                     input.width(),
                     input.channels(),
                     input.height(),
                     input.width(),
                     p.kernel_h,
                     p.kernel_w,
                     p.filters,
                     static_cast<std::ptrdiff_t>((p.kernel_h - 1) / 2),
                     static_cast<std::ptrdiff_t>((p.kernel_w - 1) / 2)};
}

// Transposed convolution as a correlation with the spatially flipped kernel.
// The full scatter has size in + k - 1; the kept window starts at
// floor((full - target) / 2).
template <typename T>
Correlation transpose_geometry(std::size_t in_h, std::size_t in_w, std::size_t in_c,
                               const ConvParams<T>& p, std::size_t target_h,
                               std::size_t target_w) {
  const auto full_h = static_cast<std::ptrdiff_t>(in_h + p.kernel_h - 1);
  const auto full_w = static_cast<std::ptrdiff_t>(in_w + p.kernel_w - 1);
  const std::ptrdiff_t off_y = floor_div2(full_h - static_cast<std::ptrdiff_t>(target_h));
  const std::ptrdiff_t off_x = floor_div2(full_w - static_cast<std::ptrdiff_t>(target_w));
  return Correlation{in_h,
                     in_w,
                     in_c,
                     target_h,
                     target_w,
                     p.kernel_h,
                     p.kernel_w,
                     p.filters,
                     static_cast<std::ptrdiff_t>(p.kernel_h) - 1 - off_y,
                     static_cast<std::ptrdiff_t>(p.kernel_w) - 1 - off_x};
}

template <typename T>
void check_channels(const BasicTensor<T>& input, const ConvParams<T>& p, const char* what) {
  p.validate();
  if (input.empty()) throw ShapeError(std::string(what) + ": empty input");
  if (input.channels() != p.in_channels)
    throw ShapeError(std::string(what) + ": input has " + std::to_string(input.channels()) +
                     " channels, filters expect " + std::to_string(p.in_channels));
}

template <typename T>
const BasicTensor<T>& cached_input(const LayerIO<T>& io, const char* what) {
  if (!io.input) throw StateError(std::string(what) + ": backward called before forward");
  return *io.input;
}

}  // namespace

// --- ConvParams -----------------------------------------------------------

template <typename T>
ConvParams<T> ConvParams<T>::zeros(std::size_t filters, std::size_t kernel_h, std::size_t kernel_w,
                                   std::size_t in_channels) {
  if (filters == 0 || kernel_h == 0 || kernel_w == 0 || in_channels == 0)
    throw ShapeError("ConvParams: zero extent");
  ConvParams p{filters, kernel_h, kernel_w, in_channels, {}, {}};
  p.weights.assign(p.weight_count(), T(0));
  p.bias.assign(filters, T(0));
  return p;
}

template <typename T>
void ConvParams<T>::validate() const {
  if (filters == 0 || kernel_h == 0 || kernel_w == 0 || in_channels == 0)
    throw ShapeError("ConvParams: zero extent");
  if (weights.size() != weight_count() || bias.size() != filters)
    throw ShapeError("ConvParams: buffer lengths do not match geometry");
}

template <typename T>
void init_fan_uniform(ConvParams<T>& p, Rng& rng) {
  p.validate();
  const double fan_in = static_cast<double>(p.kernel_h * p.kernel_w * p.in_channels);
  const double fan_out = static_cast<double>(p.kernel_h * p.kernel_w * p.filters);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& w : p.weights) w = static_cast<T>(rng.uniform(-limit, limit));
  std::fill(p.bias.begin(), p.bias.end(), T(0));
}

// --- convolution ----------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p) {
  check_channels(input, p, "conv2d_forward");
  const Correlation g = same_geometry(input, p);
  BasicTensor<T> out(Shape{input.height(), input.width(), p.filters});
  correlate_forward(g, input.data(), p.weights.data(), p.bias.data(), out.data());
  return out;
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p, LayerIO<T>& io) {
  auto out = conv2d_forward(input, p);
  io.clear();
  io.input = input;
  io.output_shape = out.shape();
  return out;
}

template <typename T>
ConvGradients<T> conv2d_backward(const LayerIO<T>& io, const ConvParams<T>& p,
                                 const BasicTensor<T>& grad_out) {
  const auto& input = cached_input(io, "conv2d_backward");
  check_channels(input, p, "conv2d_backward");
  const Shape expected{input.height(), input.width(), p.filters};
  if (grad_out.shape() != expected)
    throw ShapeError("conv2d_backward: grad_out " + grad_out.shape().str() + ", expected " +
                     expected.str());
  const Correlation g = same_geometry(input, p);
  ConvGradients<T> r{BasicTensor<T>(input.shape()),
                     ConvParams<T>::zeros(p.filters, p.kernel_h, p.kernel_w, p.in_channels)};
  correlate_backward(g, input.data(), p.weights.data(), grad_out.data(), r.grad_input.data(),
                     r.grad_params.weights.data(), r.grad_params.bias.data());
  return r;
}

// --- transposed convolution -----------------------------------------------

template <typename T>
BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>& input, const ConvParams<T>& p,
                                        std::size_t target_h, std::size_t target_w) {
  check_channels(input, p, "conv2d_transpose_forward");
  if (target_h == 0 || target_w == 0)
    throw ShapeError("conv2d_transpose_forward: target smaller than 1x1");
  const Correlation g =
      transpose_geometry(input.height(), input.width(), input.channels(), p, target_h, target_w);
  const auto flipped = flip_spatial(p);
  BasicTensor<T> out(Shape{target_h, target_w, p.filters});
  correlate_forward(g, input.data(), flipped.data(), p.bias.data(), out.data());
  return out;
}

template <typename T>
BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>& input, const ConvParams<T>& p,
                                        std::size_t target_h, std::size_t target_w,
                                        LayerIO<T>& io) {
  auto out = conv2d_transpose_forward(input, p, target_h, target_w);
  io.clear();
  io.input = input;
  io.output_shape = out.shape();
  return out;
}

template <typename T>
ConvGradients<T> conv2d_transpose_backward(const LayerIO<T>& io, const ConvParams<T>& p,
                                           const BasicTensor<T>& grad_out) {
  const auto& input = cached_input(io, "conv2d_transpose_backward");
  check_channels(input, p, "conv2d_transpose_backward");
  const Shape expected{io.output_shape.height, io.output_shape.width, p.filters};
  if (grad_out.shape() != expected)
    throw ShapeError("conv2d_transpose_backward: grad_out " + grad_out.shape().str() +
                     ", expected " + expected.str());
  const Correlation g = transpose_geometry(input.height(), input.width(), input.channels(), p,
                                           expected.height, expected.width);
  const auto flipped = flip_spatial(p);
  ConvGradients<T> r{BasicTensor<T>(input.shape()),
                     ConvParams<T>::zeros(p.filters, p.kernel_h, p.kernel_w, p.in_channels)};
  ConvParams<T> flipped_grad = r.grad_params;
  correlate_backward(g, input.data(), flipped.data(), grad_out.data(), r.grad_input.data(),
                     flipped_grad.weights.data(), r.grad_params.bias.data());
  r.grad_params.weights = flip_spatial(flipped_grad);
  return r;
}

// --- pooling / upsampling ---------------------------------------------------

template <typename T>
std::pair<BasicTensor<T>, PoolIndices> maxpool2x2_forward(const BasicTensor<T>& input) {
  if (input.empty()) throw ShapeError("maxpool2x2_forward: empty input");
  if (input.height() % 2 != 0 || input.width() % 2 != 0)
    throw ShapeError("maxpool2x2_forward: odd spatial dimension " + input.shape().str());
  const Shape os{input.height() / 2, input.width() / 2, input.channels()};
  BasicTensor<T> out(os);
  PoolIndices idx{input.shape(), os, std::vector<PoolIndices::Coord>(out.size())};
  for (std::size_t y = 0; y < os.height; ++y)
    for (std::size_t x = 0; x < os.width; ++x)
      for (std::size_t c = 0; c < os.channels; ++c) {
        std::size_t by = 2 * y, bx = 2 * x;
        T best = input(by, bx, c);
        for (std::size_t wy = 0; wy < 2; ++wy)
          for (std::size_t wx = 0; wx < 2; ++wx) {
            const T v = input(2 * y + wy, 2 * x + wx, c);
            if (v > best) {
              best = v;
              by = 2 * y + wy;
              bx = 2 * x + wx;
            }
          }
        out(y, x, c) = best;
        idx.argmax[out.offset(y, x, c)] = {static_cast<std::uint32_t>(by),
                                           static_cast<std::uint32_t>(bx)};
      }
  return {std::move(out), std::move(idx)};
}

template <typename T>
BasicTensor<T> maxpool2x2_forward(const BasicTensor<T>& input, LayerIO<T>& io) {
  auto [out, idx] = maxpool2x2_forward(input);
  io.clear();
  io.output_shape = out.shape();
  io.pool = std::move(idx);
  return out;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolIndices& indices, const BasicTensor<T>& grad_out) {
  if (grad_out.shape() != indices.output_shape)
    throw ShapeError("maxpool2x2_backward: grad_out " + grad_out.shape().str() + ", expected " +
                     indices.output_shape.str());
  BasicTensor<T> grad_in(indices.input_shape);
  const std::size_t ch = grad_out.channels();
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const auto& a = indices.argmax[i];
    grad_in(a.y, a.x, i % ch) += grad_out.data()[i];
  }
  return grad_in;
}

template <typename T>
BasicTensor<T> zero_upsample(const BasicTensor<T>& input, std::size_t factor) {
  if (factor != 2 && factor != 4)
    throw ShapeError("zero_upsample: unsupported factor " + std::to_string(factor));
  if (input.empty()) throw ShapeError("zero_upsample: empty input");
  BasicTensor<T> out(Shape{input.height() * factor, input.width() * factor, input.channels()});
  const std::size_t ch = input.channels();
  for (std::size_t y = 0; y < input.height(); ++y)
    for (std::size_t x = 0; x < input.width(); ++x)
      std::copy_n(&input.data()[input.offset(y, x, 0)], ch,
                  &out.data()[out.offset(y * factor, x * factor, 0)]);
  return out;
}

template <typename T>
BasicTensor<T> zero_upsample_backward(const BasicTensor<T>& grad_out, std::size_t factor) {
  if (factor != 2 && factor != 4)
    throw ShapeError("zero_upsample_backward: unsupported factor " + std::to_string(factor));
  if (grad_out.empty() || grad_out.height() % factor != 0 || grad_out.width() % factor != 0)
    throw ShapeError("zero_upsample_backward: " + grad_out.shape().str() +
                     " not divisible by factor " + std::to_string(factor));
  BasicTensor<T> grad_in(
      Shape{grad_out.height() / factor, grad_out.width() / factor, grad_out.channels()});
  const std::size_t ch = grad_out.channels();
  for (std::size_t y = 0; y < grad_in.height(); ++y)
    for (std::size_t x = 0; x < grad_in.width(); ++x)
      std::copy_n(&grad_out.data()[grad_out.offset(y * factor, x * factor, 0)], ch,
                  &grad_in.data()[grad_in.offset(y, x, 0)]);
  return grad_in;
}

// --- activations ------------------------------------------------------------

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& t, Activation kind) {
  if (!t.all_finite()) throw NumericError("activation_forward: non-finite input");
  BasicTensor<T> out(t.shape());
  auto src = t.values();
  auto dst = out.values();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  }
  return out;
}

template <typename T>
BasicTensor<T> activation_forward(const BasicTensor<T>& t, Activation kind, LayerIO<T>& io) {
  auto out = activation_forward(t, kind);
  io.clear();
  io.output_shape = out.shape();
  io.output = out;
  return out;
}

template <typename T>
BasicTensor<T> activation_backward(const LayerIO<T>& io, Activation kind,
                                   const BasicTensor<T>& grad_out) {
  if (!io.output) throw StateError("activation_backward: backward called before forward");
  const auto& y = *io.output;
  if (grad_out.shape() != y.shape())
    throw ShapeError("activation_backward: grad_out " + grad_out.shape().str() + ", expected " +
                     y.shape().str());
  BasicTensor<T> grad_in(y.shape());
  auto g = grad_out.values();
  auto out = y.values();
  auto dst = grad_in.values();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] = out[i] > T(0) ? g[i] : T(0);
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] = g[i] * out[i] * (T(1) - out[i]);
  }
  return grad_in;
}

#define TRISEG_INSTANTIATE(T)                                                                    \
  template struct ConvParams<T>;                                                                 \
  template void init_fan_uniform(ConvParams<T>&, Rng&);                                          \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&);           \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&,            \
                                         LayerIO<T>&);                                           \
  template ConvGradients<T> conv2d_backward(const LayerIO<T>&, const ConvParams<T>&,             \
                                            const BasicTensor<T>&);                              \
  template BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>&, const ConvParams<T>&,  \
                                                   std::size_t, std::size_t);                    \
  template BasicTensor<T> conv2d_transpose_forward(const BasicTensor<T>&, const ConvParams<T>&,  \
                                                   std::size_t, std::size_t, LayerIO<T>&);       \
  template ConvGradients<T> conv2d_transpose_backward(const LayerIO<T>&, const ConvParams<T>&,   \
                                                      const BasicTensor<T>&);                    \
  template std::pair<BasicTensor<T>, PoolIndices> maxpool2x2_forward(const BasicTensor<T>&);     \
  template BasicTensor<T> maxpool2x2_forward(const BasicTensor<T>&, LayerIO<T>&);                \
  template BasicTensor<T> maxpool2x2_backward(const PoolIndices&, const BasicTensor<T>&);        \
  template BasicTensor<T> zero_upsample(const BasicTensor<T>&, std::size_t);                     \
  template BasicTensor<T> zero_upsample_backward(const BasicTensor<T>&, std::size_t);            \
  template BasicTensor<T> activation_forward(const BasicTensor<T>&, Activation);                 \
  template BasicTensor<T> activation_forward(const BasicTensor<T>&, Activation, LayerIO<T>&);    \
  template BasicTensor<T> activation_backward(const LayerIO<T>&, Activation,                     \
                                              const BasicTensor<T>&);                            \
  template T sigmoid(T);

TRISEG_INSTANTIATE(float)
TRISEG_INSTANTIATE(double)

#undef TRISEG_INSTANTIATE

}  // namespace triseg
