#pragma once

#include <cstdint>
#include <string>

#include "triseg/model.hpp"

namespace triseg {

enum class OptimizerKind { adam, sgd_momentum };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter optimizer state. Lazily sized on the first step.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {});

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }

  /// SGD: v = momentum * v + g, w -= lr * v.
  /// Adam: bias-corrected first/second moments, w -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(ParamSet<T>& params, const ParamSet<T>& grads);

 private:
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  bool initialised_ = false;
  ParamSet<T> first_;
  ParamSet<T> second_;
};

/// One optimizer step on the network's parameters.
template <typename T>
void apply_update(TriChannelNet<T>& net, const ParamSet<T>& grads, Optimizer<T>& state);

}  // namespace triseg
