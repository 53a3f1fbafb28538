#include <doctest.h>

#include <cmath>
#include <map>

#include "suites.hpp"
#include "triseg/model.hpp"
#include "triseg/optimizer.hpp"

using namespace triseg;

namespace {

struct Geometry {
  std::size_t filters, kh, kw, in;
};

const std::array<Geometry, kParamLayerCount> kRoster = {{
    {25, 9, 9, 1},   // branch 1
    {45, 4, 4, 1},   // branch 2
    {35, 3, 3, 45},
    {35, 2, 2, 1},   // branch 3
    {50, 2, 2, 35},
    {35, 2, 2, 50},
    {5, 7, 7, 95},   // decoder
    {7, 7, 7, 5},
    {1, 5, 5, 7},
}};

}  // namespace

TEST_CASE("parameter roster and count") {
  const auto net = TriChannelNet<float>::build(1);
  std::size_t expected_total = 0;
  for (std::size_t i = 0; i < kParamLayerCount; ++i) {
    const auto& p = net.params()[i];
    const auto& g = kRoster[i];
    CHECK(p.filters == g.filters);
    CHECK(p.kernel_h == g.kh);
    CHECK(p.kernel_w == g.kw);
    CHECK(p.in_channels == g.in);
    expected_total += g.filters * g.kh * g.kw * g.in + g.filters;
  }
  CHECK(net.layer(kBranch1Conv).parameter_count() == 25 * (9 * 9 * 1) + 25);
  CHECK(net.layer(kBranch1Conv).parameter_count() == 2050);
  CHECK(net.parameter_count() == expected_total);
}

TEST_CASE("build is seeded") {
  const auto a = TriChannelNet<float>::build(7), b = TriChannelNet<float>::build(7);
  CHECK(a == b);
  CHECK_FALSE(a == TriChannelNet<float>::build(8));
  CHECK(a.fingerprint() == TriChannelNet<float>::build(8).fingerprint());
  CHECK_FALSE(a.fingerprint() == TriChannelNet<float>::build(7, 12).fingerprint());
  CHECK_THROWS_AS(TriChannelNet<float>::build(1, 10), ShapeError);
}

TEST_CASE("shape audit on a 100x100 forward pass") {
  const auto net = TriChannelNet<float>::build(3);
  Rng rng(3);
  const auto image = testing::random_tensor<float>(rng, Shape{100, 100, 1}, 0.0, 1.0);
  ForwardTrace<float> trace;
  const auto out = net.forward(image, trace);
  REQUIRE(trace.checkpoints.size() == testing::kExpectedCheckpoints.size());
  for (std::size_t i = 0; i < testing::kExpectedCheckpoints.size(); ++i) {
    CHECK(trace.checkpoints[i].first == testing::kExpectedCheckpoints[i].first);
    CHECK(trace.checkpoints[i].second == testing::kExpectedCheckpoints[i].second);
  }
  CHECK(trace.branch_channels == std::array<std::size_t, 3>{25, 35, 35});
  CHECK(out.shape() == Shape{100, 100, 1});
  for (float v : out.values()) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("forward input contract") {
  const auto net = TriChannelNet<float>::build(3);
  CHECK_THROWS_AS(net.forward(Tensor(Shape{100, 100, 2})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor(Shape{99, 100, 1})), ShapeError);
}

TEST_CASE("zero network outputs sigmoid(0) everywhere") {
  const auto net = TriChannelNet<float>::zeros();
  Rng rng(2);
  const auto out = net.forward(testing::random_tensor<float>(rng, Shape{100, 100, 1}, 0.0, 1.0));
  for (float v : out.values()) CHECK(v == 0.5f);
}

TEST_CASE("forward is a pure function of parameters and input") {
  const auto net = TriChannelNet<float>::build(4, 16);
  Rng rng(4);
  const auto x = testing::random_tensor<float>(rng, Shape{16, 16, 1});
  CHECK(net.forward(x) == net.forward(x));
  const auto copy = net;
  CHECK(copy.forward(x) == net.forward(x));
}

TEST_CASE("backward contracts") {
  auto net = TriChannelNet<double>::build(5, 12);
  Rng rng(5);
  const auto x = testing::random_tensor<double>(rng, Shape{12, 12, 1});
  ForwardTrace<double> trace;
  net.forward(x, trace);

  const auto zero = net.backward(trace, TensorD(Shape{12, 12, 1}));
  for (const auto& p : zero) {
    for (double v : p.weights) CHECK(v == 0.0);
    for (double v : p.bias) CHECK(v == 0.0);
  }
  const auto g = net.backward(trace, TensorD(Shape{12, 12, 1}, 1.0));
  for (std::size_t i = 0; i < kParamLayerCount; ++i) CHECK(g[i].same_geometry(net.params()[i]));
  CHECK_THROWS_AS(net.backward(trace, TensorD(Shape{12, 12, 2})), ShapeError);

  // A trace from another network, or from before a parameter update, is refused.
  const auto other = TriChannelNet<double>::build(5, 12);
  CHECK_THROWS_AS(other.backward(trace, TensorD(Shape{12, 12, 1})), StateError);
  net.mutable_params()[kOutputConv].bias[0] += 0.1;
  CHECK_THROWS_AS(net.backward(trace, TensorD(Shape{12, 12, 1})), StateError);
  CHECK_THROWS_AS(net.backward(ForwardTrace<double>{}, TensorD(Shape{12, 12, 1})), StateError);
}

TEST_CASE("whole-network gradient check on a 12x12 geometry") {
  const auto r = testing::gradcheck_network(3);
  INFO(r.str());
  CHECK(r.ok());
}

TEST_CASE("branch isolation") {
  // Zeroing branch 1 weights removes its contribution to the concatenation,
  // and the decoder sends gradient back into channels 0-24.
  auto net = TriChannelNet<double>::build(6, 12);
  Rng rng(6);
  const auto x = testing::random_tensor<double>(rng, Shape{12, 12, 1}, 0.0, 1.0);
  ForwardTrace<double> trace;
  net.forward(x, trace);
  const auto g = net.backward(trace, TensorD(Shape{12, 12, 1}, 1.0));
  double branch1 = 0.0;
  for (double v : g[kBranch1Conv].weights) branch1 += std::abs(v);
  CHECK(branch1 > 0.0);

  auto perturbed = net;
  for (auto& w : perturbed.mutable_params()[kBranch1Conv].weights) w *= 1.5;
  ForwardTrace<double> t2;
  perturbed.forward(x, t2);
  const auto& c1 = *trace.dec_t1.input;
  const auto& c2 = *t2.dec_t1.input;
  bool branch1_changed = false, others_same = true;
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t xx = 0; xx < 12; ++xx)
      for (std::size_t c = 0; c < 95; ++c) {
        if (c < 25 && c1(y, xx, c) != c2(y, xx, c)) branch1_changed = true;
        if (c >= 25 && c1(y, xx, c) != c2(y, xx, c)) others_same = false;
      }
  CHECK(branch1_changed);
  CHECK(others_same);
}

TEST_CASE("apply_update") {
  auto net = TriChannelNet<float>::build(9, 12);
  const auto before = net;
  Optimizer<float> sgd(OptimizerConfig{OptimizerKind::sgd_momentum, 1.0, 0.0});
  apply_update(net, zeros_like(net.params()), sgd);
  CHECK(net == before);

  Optimizer<float> adam{};
  for (int i = 0; i < 3; ++i) apply_update(net, zeros_like(net.params()), adam);
  CHECK(net == before);

  // One SGD step with lr 1 and no momentum moves w to w - g.
  auto grads = zeros_like(net.params());
  grads[kOutputConv].bias[0] = 0.25f;
  grads[kBranch1Conv].weights[3] = -0.5f;
  apply_update(net, grads, sgd);
  CHECK(net.params()[kOutputConv].bias[0] == before.params()[kOutputConv].bias[0] - 0.25f);
  CHECK(net.params()[kBranch1Conv].weights[3] == before.params()[kBranch1Conv].weights[3] + 0.5f);

  auto wrong = zeros_like(TriChannelNet<float>::build(1, 12).params());
  wrong[0].weights.pop_back();
  CHECK_THROWS_AS(apply_update(net, wrong, sgd), ShapeError);
}

TEST_CASE("identical optimizer runs give identical trajectories") {
  auto run = [] {
    auto net = TriChannelNet<float>::build(10, 12);
    Optimizer<float> adam{};
    Rng rng(10);
    const auto x = testing::random_tensor<float>(rng, Shape{12, 12, 1}, 0.0, 1.0);
    for (int i = 0; i < 3; ++i) {
      ForwardTrace<float> trace;
      net.forward(x, trace);
      apply_update(net, net.backward(trace, Tensor(Shape{12, 12, 1}, 1.0f)), adam);
    }
    return net;
  };
  CHECK(run() == run());
}

TEST_CASE("precision cast round-trip") {
  const auto net = TriChannelNet<float>::build(11);
  CHECK(net.cast<double>().cast<float>() == net);
}
