#include "triseg/model.hpp"

#include <atomic>
#include <sstream>

namespace triseg {

namespace {

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

struct ConvGeometry {
  std::size_t filters, kernel_h, kernel_w, in_channels;
};

// Storage order matches ParamLayer.
constexpr std::array<ConvGeometry, kParamLayerCount> kRoster{{
    {25, 9, 9, 1},   // branch 1
    {45, 4, 4, 1},   // branch 2
    {35, 3, 3, 45},  //
    {35, 2, 2, 1},   // branch 3
    {50, 2, 2, 35},  //
    {35, 2, 2, 50},  //
    {5, 7, 7, 95},   // decoder, transposed
    {7, 7, 7, 5},    // decoder, transposed
    {1, 5, 5, 7},    // output
}};

template <typename T>
void record(ForwardTrace<T>& trace, const char* name, const BasicTensor<T>& t) {
  trace.checkpoints.emplace_back(name, t.shape());
}

LayerSpec conv_spec(LayerKind kind, const ConvGeometry& g) {
  return LayerSpec{kind,
                   static_cast<std::uint32_t>(g.filters),
                   static_cast<std::uint32_t>(g.kernel_h),
                   static_cast<std::uint32_t>(g.kernel_w),
                   static_cast<std::uint32_t>(g.in_channels),
                   0};
}

LayerSpec simple_spec(LayerKind kind, std::uint32_t factor = 0) {
  return LayerSpec{kind, 0, 0, 0, 0, factor};
}

}  // namespace

std::string Fingerprint::str() const {
  std::ostringstream os;
  os << "input=" << input_size;
  for (const auto& l : layers) {
    os << ";" << static_cast<int>(l.kind);
    if (l.filters) os << ":" << l.filters << "x" << l.kernel_h << "x" << l.kernel_w << "x" << l.in_channels;
    if (l.factor) os << ":x" << l.factor;
  }
  return os.str();
}

template <typename T>
TriChannelNet<T>::TriChannelNet(std::size_t input_size) : input_size_(input_size), id_(next_net_id()) {
  if (input_size == 0 || input_size % 4 != 0)
    throw ShapeError("TriChannelNet: input size must be a positive multiple of 4, got " +
                     std::to_string(input_size));
  for (std::size_t i = 0; i < kParamLayerCount; ++i) {
    const auto& g = kRoster[i];
    params_[i] = ConvParams<T>::zeros(g.filters, g.kernel_h, g.kernel_w, g.in_channels);
  }
}

template <typename T>
TriChannelNet<T> TriChannelNet<T>::build(std::uint64_t seed, std::size_t input_size) {
  TriChannelNet net(input_size);
  Rng rng(seed);
  for (auto& p : net.params_) init_fan_uniform(p, rng);
  return net;
}

template <typename T>
TriChannelNet<T> TriChannelNet<T>::zeros(std::size_t input_size) {
  return TriChannelNet(input_size);
}

template <typename T>
Fingerprint TriChannelNet<T>::fingerprint() const {
  using K = LayerKind;
  Fingerprint fp;
  fp.input_size = static_cast<std::uint32_t>(input_size_);
  auto& L = fp.layers;
  L.push_back(conv_spec(K::conv, kRoster[kBranch1Conv]));
  L.push_back(simple_spec(K::relu));
  L.push_back(conv_spec(K::conv, kRoster[kBranch2ConvA]));
  L.push_back(simple_spec(K::relu));
  L.push_back(simple_spec(K::maxpool2x2));
  L.push_back(conv_spec(K::conv, kRoster[kBranch2ConvB]));
  L.push_back(simple_spec(K::relu));
  L.push_back(simple_spec(K::zero_upsample, 2));
  L.push_back(conv_spec(K::conv, kRoster[kBranch3ConvA]));
  L.push_back(simple_spec(K::relu));
  L.push_back(simple_spec(K::maxpool2x2));
  L.push_back(conv_spec(K::conv, kRoster[kBranch3ConvB]));
  L.push_back(simple_spec(K::relu));
  L.push_back(simple_spec(K::maxpool2x2));
  L.push_back(conv_spec(K::conv, kRoster[kBranch3ConvC]));
  L.push_back(simple_spec(K::relu));
  L.push_back(simple_spec(K::zero_upsample, 4));
  L.push_back(simple_spec(K::concat));
  L.push_back(conv_spec(K::conv_transpose, kRoster[kDecoderT1]));
  L.push_back(simple_spec(K::relu));
  L.push_back(conv_spec(K::conv_transpose, kRoster[kDecoderT2]));
  L.push_back(simple_spec(K::relu));
  L.push_back(conv_spec(K::conv, kRoster[kOutputConv]));
  L.push_back(simple_spec(K::sigmoid));
  return fp;
}

template <typename T>
std::size_t TriChannelNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.parameter_count();
  return n;
}

template <typename T>
BasicTensor<T> TriChannelNet<T>::forward(const BasicTensor<T>& image, ForwardTrace<T>& trace) const {
  const Shape expected{input_size_, input_size_, 1};
  if (image.shape() != expected)
    throw ShapeError("forward: input " + image.shape().str() + ", expected " + expected.str());
  if (!image.all_finite()) throw NumericError("forward: non-finite input");

  const auto relu = Activation::relu;
  const auto& P = params_;
  const std::size_t n = input_size_;
  trace = ForwardTrace<T>{};
  trace.net_id = id_;
  trace.net_version = version_;

  // branch 1
  auto b1 = conv2d_forward(image, P[kBranch1Conv], trace.b1_conv);
  record(trace, "branch1.conv", b1);
  b1 = activation_forward(b1, relu, trace.b1_act);

  // branch 2
  auto b2 = conv2d_forward(image, P[kBranch2ConvA], trace.b2_conv_a);
  record(trace, "branch2.conv_a", b2);
  b2 = activation_forward(b2, relu, trace.b2_act_a);
  b2 = maxpool2x2_forward(b2, trace.b2_pool);
  record(trace, "branch2.pool", b2);
  b2 = conv2d_forward(b2, P[kBranch2ConvB], trace.b2_conv_b);
  record(trace, "branch2.conv_b", b2);
  b2 = activation_forward(b2, relu, trace.b2_act_b);
  b2 = zero_upsample(b2, 2);
  record(trace, "branch2.upsample", b2);

  // branch 3
  auto b3 = conv2d_forward(image, P[kBranch3ConvA], trace.b3_conv_a);
  record(trace, "branch3.conv_a", b3);
  b3 = activation_forward(b3, relu, trace.b3_act_a);
  b3 = maxpool2x2_forward(b3, trace.b3_pool_a);
  record(trace, "branch3.pool_a", b3);
  b3 = conv2d_forward(b3, P[kBranch3ConvB], trace.b3_conv_b);
  record(trace, "branch3.conv_b", b3);
  b3 = activation_forward(b3, relu, trace.b3_act_b);
  b3 = maxpool2x2_forward(b3, trace.b3_pool_b);
  record(trace, "branch3.pool_b", b3);
  b3 = conv2d_forward(b3, P[kBranch3ConvC], trace.b3_conv_c);
  record(trace, "branch3.conv_c", b3);
  b3 = activation_forward(b3, relu, trace.b3_act_c);
  b3 = zero_upsample(b3, 4);
  record(trace, "branch3.upsample", b3);

  trace.branch_channels = {b1.channels(), b2.channels(), b3.channels()};
  const std::array<BasicTensor<T>, 3> parts{std::move(b1), std::move(b2), std::move(b3)};
  auto x = concat_channels<T>(parts);
  record(trace, "concat", x);

  // decoder
  x = conv2d_transpose_forward(x, P[kDecoderT1], n, n, trace.dec_t1);
  record(trace, "decoder.t1", x);
  x = activation_forward(x, relu, trace.dec_act1);
  x = conv2d_transpose_forward(x, P[kDecoderT2], n, n, trace.dec_t2);
  record(trace, "decoder.t2", x);
  x = activation_forward(x, relu, trace.dec_act2);
  x = conv2d_forward(x, P[kOutputConv], trace.out_conv);
  record(trace, "output.conv", x);
  if (!x.all_finite()) throw NumericError("forward: non-finite logits");
  trace.logits = x;
  auto prob = activation_forward(x, Activation::sigmoid, trace.out_act);
  record(trace, "output.sigmoid", prob);
  return prob;
}

template <typename T>
BasicTensor<T> TriChannelNet<T>::forward(const BasicTensor<T>& image) const {
  ForwardTrace<T> trace;
  return forward(image, trace);
}

template <typename T>
ParamSet<T> TriChannelNet<T>::backward(const ForwardTrace<T>& trace,
                                       const BasicTensor<T>& grad_prob) const {
  if (!trace.valid()) throw StateError("backward: trace was never filled by forward");
  const auto grad_logits = activation_backward(trace.out_act, Activation::sigmoid, grad_prob);
  return backward_with_input(trace, grad_logits).first;
}

template <typename T>
ParamSet<T> TriChannelNet<T>::backward_from_logits(const ForwardTrace<T>& trace,
                                                   const BasicTensor<T>& grad_logits) const {
  return backward_with_input(trace, grad_logits).first;
}

template <typename T>
std::pair<ParamSet<T>, BasicTensor<T>> TriChannelNet<T>::backward_with_input(
    const ForwardTrace<T>& trace, const BasicTensor<T>& grad_logits) const {
  if (!trace.valid()) throw StateError("backward: trace was never filled by forward");
  if (trace.net_id != id_ || trace.net_version != version_)
    throw StateError("backward: trace is stale or belongs to another network");
  const Shape out_shape{input_size_, input_size_, 1};
  if (grad_logits.shape() != out_shape)
    throw ShapeError("backward: gradient " + grad_logits.shape().str() + ", expected " +
                     out_shape.str());

  const auto relu = Activation::relu;
  const auto& P = params_;
  ParamSet<T> g;

  auto out = conv2d_backward(trace.out_conv, P[kOutputConv], grad_logits);
  g[kOutputConv] = std::move(out.grad_params);
  auto d = activation_backward(trace.dec_act2, relu, out.grad_input);
  auto t2 = conv2d_transpose_backward(trace.dec_t2, P[kDecoderT2], d);
  g[kDecoderT2] = std::move(t2.grad_params);
  d = activation_backward(trace.dec_act1, relu, t2.grad_input);
  auto t1 = conv2d_transpose_backward(trace.dec_t1, P[kDecoderT1], d);
  g[kDecoderT1] = std::move(t1.grad_params);

  const auto& bc = trace.branch_channels;
  auto g1 = slice_channels(t1.grad_input, 0, bc[0]);
  auto g2 = slice_channels(t1.grad_input, bc[0], bc[1]);
  auto g3 = slice_channels(t1.grad_input, bc[0] + bc[1], bc[2]);

  // branch 1
  g1 = activation_backward(trace.b1_act, relu, g1);
  auto c1 = conv2d_backward(trace.b1_conv, P[kBranch1Conv], g1);
  g[kBranch1Conv] = std::move(c1.grad_params);

  // branch 2
  g2 = zero_upsample_backward(g2, 2);
  g2 = activation_backward(trace.b2_act_b, relu, g2);
  auto c2b = conv2d_backward(trace.b2_conv_b, P[kBranch2ConvB], g2);
  g[kBranch2ConvB] = std::move(c2b.grad_params);
  g2 = maxpool2x2_backward(*trace.b2_pool.pool, c2b.grad_input);
  g2 = activation_backward(trace.b2_act_a, relu, g2);
  auto c2a = conv2d_backward(trace.b2_conv_a, P[kBranch2ConvA], g2);
  g[kBranch2ConvA] = std::move(c2a.grad_params);

  // branch 3
  g3 = zero_upsample_backward(g3, 4);
  g3 = activation_backward(trace.b3_act_c, relu, g3);
  auto c3c = conv2d_backward(trace.b3_conv_c, P[kBranch3ConvC], g3);
  g[kBranch3ConvC] = std::move(c3c.grad_params);
  g3 = maxpool2x2_backward(*trace.b3_pool_b.pool, c3c.grad_input);
  g3 = activation_backward(trace.b3_act_b, relu, g3);
  auto c3b = conv2d_backward(trace.b3_conv_b, P[kBranch3ConvB], g3);
  g[kBranch3ConvB] = std::move(c3b.grad_params);
  g3 = maxpool2x2_backward(*trace.b3_pool_a.pool, c3b.grad_input);
  g3 = activation_backward(trace.b3_act_a, relu, g3);
  auto c3a = conv2d_backward(trace.b3_conv_a, P[kBranch3ConvA], g3);
  g[kBranch3ConvA] = std::move(c3a.grad_params);

  BasicTensor<T> grad_image = c1.grad_input;
  for (const auto* part : {&c2a.grad_input, &c3a.grad_input}) {
    auto dst = grad_image.values();
    auto src = part->values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return {std::move(g), std::move(grad_image)};
}

template <typename T>
template <typename U>
TriChannelNet<U> TriChannelNet<T>::cast() const {
  TriChannelNet<U> out(input_size_);
  for (std::size_t i = 0; i < kParamLayerCount; ++i) out.params_[i] = params_[i].template cast<U>();
  return out;
}

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& like) {
  ParamSet<T> out;
  for (std::size_t i = 0; i < kParamLayerCount; ++i) {
    const auto& p = like[i];
    out[i] = ConvParams<T>::zeros(p.filters, p.kernel_h, p.kernel_w, p.in_channels);
  }
  return out;
}

template <typename T>
void accumulate(ParamSet<T>& dst, const ParamSet<T>& src) {
  for (std::size_t i = 0; i < kParamLayerCount; ++i) {
    if (!dst[i].same_geometry(src[i])) throw ShapeError("accumulate: geometry mismatch");
    for (std::size_t j = 0; j < dst[i].weights.size(); ++j) dst[i].weights[j] += src[i].weights[j];
    for (std::size_t j = 0; j < dst[i].bias.size(); ++j) dst[i].bias[j] += src[i].bias[j];
  }
}

template <typename T>
void scale(ParamSet<T>& p, T factor) {
  for (auto& layer : p) {
    for (auto& w : layer.weights) w *= factor;
    for (auto& b : layer.bias) b *= factor;
  }
}

template class TriChannelNet<float>;
template class TriChannelNet<double>;
template TriChannelNet<double> TriChannelNet<float>::cast<double>() const;
template TriChannelNet<float> TriChannelNet<double>::cast<float>() const;
template TriChannelNet<float> TriChannelNet<float>::cast<float>() const;
template TriChannelNet<double> TriChannelNet<double>::cast<double>() const;
template ParamSet<float> zeros_like(const ParamSet<float>&);
template ParamSet<double> zeros_like(const ParamSet<double>&);
template void accumulate(ParamSet<float>&, const ParamSet<float>&);
template void accumulate(ParamSet<double>&, const ParamSet<double>&);
template void scale(ParamSet<float>&, float);
template void scale(ParamSet<double>&, double);

}  // namespace triseg
