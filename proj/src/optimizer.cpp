#include "triseg/optimizer.hpp"

#include <cmath>

namespace triseg {

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd" || s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
}

template <typename T>
void Optimizer<T>::step(ParamSet<T>& params, const ParamSet<T>& grads) {
  for (std::size_t i = 0; i < kParamLayerCount; ++i)
    if (!params[i].same_geometry(grads[i]) || grads[i].weights.size() != params[i].weights.size() ||
        grads[i].bias.size() != params[i].bias.size())
      throw ShapeError("optimizer step: gradient geometry does not match parameters");
  if (!initialised_) {
    first_ = zeros_like(params);
    second_ = zeros_like(params);
    initialised_ = true;
  }
  ++steps_;
  const double lr = cfg_.learning_rate;

  auto update = [&](std::vector<T>& w, const std::vector<T>& g, std::vector<T>& m,
                    std::vector<T>& v) {
    if (cfg_.kind == OptimizerKind::sgd_momentum) {
      const T mu = static_cast<T>(cfg_.momentum);
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = mu * m[j] + g[j];
        w[j] -= static_cast<T>(lr) * m[j];
      }
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j]);
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      w[j] -= static_cast<T>(lr * mh / (std::sqrt(vh) + cfg_.epsilon));
    }
  };

  for (std::size_t i = 0; i < kParamLayerCount; ++i) {
    update(params[i].weights, grads[i].weights, first_[i].weights, second_[i].weights);
    update(params[i].bias, grads[i].bias, first_[i].bias, second_[i].bias);
  }
}

template <typename T>
void apply_update(TriChannelNet<T>& net, const ParamSet<T>& grads, Optimizer<T>& state) {
  state.step(net.mutable_params(), grads);
}

template class Optimizer<float>;
template class Optimizer<double>;
template void apply_update(TriChannelNet<float>&, const ParamSet<float>&, Optimizer<float>&);
template void apply_update(TriChannelNet<double>&, const ParamSet<double>&, Optimizer<double>&);

}  // namespace triseg
