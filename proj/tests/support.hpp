#pragma once

// Test-only oracles and generators. Nothing here calls the correlation engine
// in src/layers.cpp; the convolution oracles are direct loops.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "triseg/layers.hpp"
#include "triseg/model.hpp"
#include "triseg/rng.hpp"
#include "triseg/tensor.hpp"

namespace triseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    Rng rng(reinterpret_cast<std::uintptr_t>(this) ^ ++counter);
    path_ = std::filesystem::temp_directory_path() /
            ("triseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(rng.next() % 1000000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T = double>
BasicTensor<T> random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T = double>
ConvParams<T> random_params(Rng& rng, std::size_t filters, std::size_t kh, std::size_t kw, std::size_t in_c) {
  auto p = ConvParams<T>::zeros(filters, kh, kw, in_c);
  for (auto& w : p.weights) w = static_cast<T>(rng.uniform(-1.0, 1.0));
  for (auto& b : p.bias) b = static_cast<T>(rng.uniform(-0.5, 0.5));
  return p;
}

inline std::size_t rand_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.index(hi - lo + 1));
}

/// Same-padded stride-1 convolution by direct summation.
inline TensorD brute_conv_same(const TensorD& in, const ConvParams<double>& p) {
  TensorD out(Shape{in.height(), in.width(), p.filters});
  const auto ph = static_cast<long>((p.kernel_h - 1) / 2);
  const auto pw = static_cast<long>((p.kernel_w - 1) / 2);
  for (std::size_t y = 0; y < in.height(); ++y)
    for (std::size_t x = 0; x < in.width(); ++x)
      for (std::size_t f = 0; f < p.filters; ++f) {
        double acc = p.bias[f];
        for (std::size_t dy = 0; dy < p.kernel_h; ++dy)
          for (std::size_t dx = 0; dx < p.kernel_w; ++dx)
            for (std::size_t c = 0; c < p.in_channels; ++c) {
              const long iy = static_cast<long>(y + dy) - ph;
              const long ix = static_cast<long>(x + dx) - pw;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(in.height()) || ix >= static_cast<long>(in.width()))
                continue;
              acc += p.w(f, dy, dx, c) * in(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), c);
            }
        out(y, x, f) = acc;
      }
  return out;
}

/// Transposed convolution by explicit scatter into the full output, then a
/// centred crop (offset floor((full - target) / 2)).
inline TensorD brute_conv_transpose(const TensorD& in, const ConvParams<double>& p, std::size_t th,
                                    std::size_t tw) {
  const std::size_t fh = in.height() + p.kernel_h - 1;
  const std::size_t fw = in.width() + p.kernel_w - 1;
  std::vector<double> full(fh * fw * p.filters, 0.0);
  for (std::size_t y = 0; y < in.height(); ++y)
    for (std::size_t x = 0; x < in.width(); ++x)
      for (std::size_t c = 0; c < p.in_channels; ++c)
        for (std::size_t f = 0; f < p.filters; ++f)
          for (std::size_t dy = 0; dy < p.kernel_h; ++dy)
            for (std::size_t dx = 0; dx < p.kernel_w; ++dx)
              full[((y + dy) * fw + (x + dx)) * p.filters + f] += in(y, x, c) * p.w(f, dy, dx, c);
  auto floor_half = [](long v) { return v >= 0 ? v / 2 : -((-v + 1) / 2); };
  const long oy = floor_half(static_cast<long>(fh) - static_cast<long>(th));
  const long ox = floor_half(static_cast<long>(fw) - static_cast<long>(tw));
  TensorD out(Shape{th, tw, p.filters});
  for (std::size_t y = 0; y < th; ++y)
    for (std::size_t x = 0; x < tw; ++x)
      for (std::size_t f = 0; f < p.filters; ++f) {
        const long sy = static_cast<long>(y) + oy, sx = static_cast<long>(x) + ox;
        double v = p.bias[f];
        if (sy >= 0 && sx >= 0 && sy < static_cast<long>(fh) && sx < static_cast<long>(fw))
          v += full[(static_cast<std::size_t>(sy) * fw + static_cast<std::size_t>(sx)) * p.filters + f];
        out(y, x, f) = v;
      }
  return out;
}

/// Filter bank with the roles of filters and input channels swapped, so that
/// conv with `p` and conv-transpose with `swap_roles(p)` are adjoint.
inline ConvParams<double> swap_roles(const ConvParams<double>& p) {
  auto q = ConvParams<double>::zeros(p.in_channels, p.kernel_h, p.kernel_w, p.filters);
  for (std::size_t f = 0; f < p.filters; ++f)
    for (std::size_t dy = 0; dy < p.kernel_h; ++dy)
      for (std::size_t dx = 0; dx < p.kernel_w; ++dx)
        for (std::size_t c = 0; c < p.in_channels; ++c) q.w(c, dy, dx, f) = p.w(f, dy, dx, c);
  return q;
}

inline constexpr double kFdStep = 1e-5;

/// Relative error with a floor on the denominator so that gradients that are
/// zero up to round-off compare in absolute terms.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central difference of `f` with respect to `x` (restored afterwards).
template <typename Real>
double central_difference(Real& x, const std::function<double()>& f, double h = kFdStep) {
  const Real saved = x;
  x = static_cast<Real>(saved + h);
  const double up = f();
  x = static_cast<Real>(saved - h);
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Which side of every ReLU kink and which pooling argmax a forward pass took.
inline std::vector<std::uint32_t> activation_signature(const ForwardTrace<double>& t) {
  std::vector<std::uint32_t> sig;
  auto relu = [&](const LayerIO<double>& io) {
    for (double v : io.output->values()) sig.push_back(v > 0.0 ? 1u : 0u);
  };
  auto pool = [&](const LayerIO<double>& io) {
    for (const auto& c : io.pool->argmax) {
      sig.push_back(c.y);
      sig.push_back(c.x);
    }
  };
  relu(t.b1_act);
  relu(t.b2_act_a);
  pool(t.b2_pool);
  relu(t.b2_act_b);
  relu(t.b3_act_a);
  pool(t.b3_pool_a);
  relu(t.b3_act_b);
  pool(t.b3_pool_b);
  relu(t.b3_act_c);
  relu(t.dec_act1);
  relu(t.dec_act2);
  return sig;
}

struct GradCheckStats {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a kink or pooling tie
  double max_rel = 0.0;
};

/// Whole-network finite-difference check on a reduced geometry. Objective:
/// sum(weights * output). Checks every bias plus `per_layer` random weights per
/// layer and `input_entries` random input pixels.
inline GradCheckStats whole_net_gradcheck(std::uint64_t seed, std::size_t size, std::size_t per_layer,
                                          std::size_t input_entries) {
  Rng rng(seed);
  auto net = TriChannelNet<double>::build(seed, size);
  // Small positive biases keep most ReLUs active so every pathway carries gradient.
  for (auto& p : net.mutable_params())
    for (auto& b : p.bias) b = rng.uniform(0.0, 0.1);
  auto image = random_tensor<double>(rng, Shape{size, size, 1}, 0.0, 1.0);
  const auto weights = random_tensor<double>(rng, Shape{size, size, 1});

  ForwardTrace<double> trace;
  net.forward(image, trace);
  const auto [grads, grad_image] = net.backward_with_input(
      trace, activation_backward(trace.out_act, Activation::sigmoid, weights));

  GradCheckStats st;
  auto probe = [&](double& x, double analytic) {
    const double saved = x;
    ForwardTrace<double> t_up, t_dn;
    x = saved + kFdStep;
    const double up = dot(net.forward(image, t_up), weights);
    x = saved - kFdStep;
    const double dn = dot(net.forward(image, t_dn), weights);
    x = saved;
    if (activation_signature(t_up) != activation_signature(t_dn)) {
      ++st.skipped;
      return;
    }
    ++st.checked;
    st.max_rel = std::max(st.max_rel, rel_error(analytic, (up - dn) / (2 * kFdStep)));
  };

  auto& params = net.mutable_params();
  for (std::size_t l = 0; l < kParamLayerCount; ++l) {
    for (std::size_t j = 0; j < params[l].bias.size(); ++j)
      probe(params[l].bias[j], grads[l].bias[j]);
    for (std::size_t k = 0; k < per_layer; ++k) {
      const std::size_t j = rng.index(params[l].weights.size());
      probe(params[l].weights[j], grads[l].weights[j]);
    }
  }
  for (std::size_t k = 0; k < input_entries; ++k) {
    const std::size_t j = rng.index(image.size());
    probe(image.data()[j], grad_image.data()[j]);
  }
  return st;
}

// Expected geometry, written out independently of the model source.
inline const std::vector<std::pair<std::string, Shape>> kExpectedCheckpoints = {
    {"branch1.conv", {100, 100, 25}},    {"branch2.conv_a", {100, 100, 45}},
    {"branch2.pool", {50, 50, 45}},      {"branch2.conv_b", {50, 50, 35}},
    {"branch2.upsample", {100, 100, 35}}, {"branch3.conv_a", {100, 100, 35}},
    {"branch3.pool_a", {50, 50, 35}},    {"branch3.conv_b", {50, 50, 50}},
    {"branch3.pool_b", {25, 25, 50}},    {"branch3.conv_c", {25, 25, 35}},
    {"branch3.upsample", {100, 100, 35}}, {"concat", {100, 100, 95}},
    {"decoder.t1", {100, 100, 5}},       {"decoder.t2", {100, 100, 7}},
    {"output.conv", {100, 100, 1}},      {"output.sigmoid", {100, 100, 1}},
};

}  // namespace triseg::testing
