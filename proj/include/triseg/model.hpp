#pragma once

// Three-branch multi-resolution segmentation network.
//
//   branch 1: conv 25 x 9x9                                        -> H x W x 25
//   branch 2: conv 45 x 4x4, pool, conv 35 x 3x3, zero-upsample x2  -> H x W x 35
//   branch 3: conv 35 x 2x2, pool, conv 50 x 2x2, pool,
//             conv 35 x 2x2, zero-upsample x4                      -> H x W x 35
//   concat (1, 2, 3)                                               -> H x W x 95
//   decoder:  convT 5 x 7x7, convT 7 x 7x7, conv 1 x 5x5, sigmoid  -> H x W x 1
//
// ReLU follows every convolution except the last. Production input is
// 100x100x1; smaller multiples of 4 exist for gradient checking.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "triseg/layers.hpp"

namespace triseg {

inline constexpr std::size_t kInputSize = 100;

enum class LayerKind : std::uint8_t {
  conv = 1,
  conv_transpose = 2,
  maxpool2x2 = 3,
  zero_upsample = 4,
  concat = 5,
  relu = 6,
  sigmoid = 7,
};

/// One entry of the architecture fingerprint.
struct LayerSpec {
  LayerKind kind{};
  std::uint32_t filters = 0;
  std::uint32_t kernel_h = 0;
  std::uint32_t kernel_w = 0;
  std::uint32_t in_channels = 0;
  std::uint32_t factor = 0;  // upsample factor; 0 otherwise

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Fingerprint {
  std::uint32_t input_size = 0;
  std::vector<LayerSpec> layers;

  std::string str() const;
  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

/// Learnable layers in fixed storage order.
enum ParamLayer : std::size_t {
  kBranch1Conv = 0,
  kBranch2ConvA,
  kBranch2ConvB,
  kBranch3ConvA,
  kBranch3ConvB,
  kBranch3ConvC,
  kDecoderT1,
  kDecoderT2,
  kOutputConv,
  kParamLayerCount,
};

template <typename T>
using ParamSet = std::array<ConvParams<T>, kParamLayerCount>;

/// Per-sample forward caches plus the shape recorded at each junction.
template <typename T>
struct ForwardTrace {
  std::uint64_t net_id = 0;
  std::uint64_t net_version = 0;

  LayerIO<T> b1_conv, b1_act;
  LayerIO<T> b2_conv_a, b2_act_a, b2_pool, b2_conv_b, b2_act_b;
  LayerIO<T> b3_conv_a, b3_act_a, b3_pool_a, b3_conv_b, b3_act_b, b3_pool_b, b3_conv_c, b3_act_c;
  LayerIO<T> dec_t1, dec_act1, dec_t2, dec_act2, out_conv, out_act;
  std::array<std::size_t, 3> branch_channels{};

  BasicTensor<T> logits;
  std::vector<std::pair<std::string, Shape>> checkpoints;

  bool valid() const { return net_id != 0; }
};

template <typename T>
class TriChannelNet {
 public:
  /// Seeded fan-uniform initialisation.
  static TriChannelNet build(std::uint64_t seed, std::size_t input_size = kInputSize);
  /// All weights and biases zero.
  static TriChannelNet zeros(std::size_t input_size = kInputSize);

  std::size_t input_size() const { return input_size_; }
  Fingerprint fingerprint() const;
  std::size_t parameter_count() const;

  const ParamSet<T>& params() const { return params_; }
  /// Mutable access bumps the version, invalidating outstanding traces.
  ParamSet<T>& mutable_params() {
    ++version_;
    return params_;
  }
  const ConvParams<T>& layer(ParamLayer i) const { return params_[i]; }

  /// Probability map (H x W x 1). Fills `trace` for a later backward.
  BasicTensor<T> forward(const BasicTensor<T>& image, ForwardTrace<T>& trace) const;
  BasicTensor<T> forward(const BasicTensor<T>& image) const;

  /// Gradients of sum(grad_prob * output) with respect to every parameter.
  ParamSet<T> backward(const ForwardTrace<T>& trace, const BasicTensor<T>& grad_prob) const;
  /// Same, starting from the gradient with respect to the pre-sigmoid logits.
  ParamSet<T> backward_from_logits(const ForwardTrace<T>& trace,
                                   const BasicTensor<T>& grad_logits) const;
  /// Also returns the input-image gradient.
  std::pair<ParamSet<T>, BasicTensor<T>> backward_with_input(const ForwardTrace<T>& trace,
                                                             const BasicTensor<T>& grad_logits) const;

  template <typename U>
  TriChannelNet<U> cast() const;

  friend bool operator==(const TriChannelNet& a, const TriChannelNet& b) {
    return a.input_size_ == b.input_size_ && a.params_ == b.params_;
  }

 private:
  template <typename>
  friend class TriChannelNet;

  explicit TriChannelNet(std::size_t input_size);

  std::size_t input_size_ = kInputSize;
  ParamSet<T> params_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

/// Zero-filled gradient buffers matching `like`.
template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& like);

/// dst += src (same geometry).
template <typename T>
void accumulate(ParamSet<T>& dst, const ParamSet<T>& src);

template <typename T>
void scale(ParamSet<T>& p, T factor);

}  // namespace triseg
