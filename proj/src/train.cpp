#include "triseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "triseg/parallel.hpp"

namespace triseg {

std::string to_string(LossKind k) { return k == LossKind::bce ? "bce" : "dice"; }

LossKind parse_loss(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "dice") return LossKind::dice;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

namespace {

template <typename T>
void check_pair(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

template <typename T>
LossResult<T> bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& target) {
  check_pair(logits, target, "bce_with_logits");
  const double n = static_cast<double>(logits.size());
  LossResult<T> r{0.0, BasicTensor<T>(logits.shape())};
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits.data()[i];
    const double t = target.data()[i];
    // -[t log s(z) + (1 - t) log(1 - s(z))] = softplus(z) - t z
    acc += softplus(z) - t * z;
    r.grad.data()[i] = static_cast<T>((sigmoid(z) - t) / n);
  }
  r.value = acc / n;
  return r;
}

template <typename T>
LossResult<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  check_pair(pred, target, "bce_loss");
  const double n = static_cast<double>(pred.size());
  const double eps = std::numeric_limits<T>::epsilon();
  LossResult<T> r{0.0, BasicTensor<T>(pred.shape())};
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred.data()[i]), eps, 1.0 - eps);
    const double t = target.data()[i];
    const double z = std::log(p) - std::log1p(-p);
    acc += softplus(z) - t * z;
    r.grad.data()[i] = static_cast<T>((p - t) / (p * (1.0 - p)) / n);
  }
  r.value = acc / n;
  return r;
}

template <typename T>
LossResult<T> dice_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  check_pair(pred, target, "dice_loss");
  const double s = kDiceSmoothing;
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += static_cast<double>(pred.data()[i]) * target.data()[i];
    sp += pred.data()[i];
    st += target.data()[i];
  }
  const double num = 2.0 * inter + s;
  const double den = sp + st + s;
  LossResult<T> r{1.0 - num / den, BasicTensor<T>(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = target.data()[i];
    r.grad.data()[i] = static_cast<T>(-(2.0 * t * den - num) / (den * den));
  }
  return r;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate))
    throw std::invalid_argument("learning rate must be > 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["optimizer"] = to_string(optimizer.kind);
  j["learning_rate"] = optimizer.learning_rate;
  j["momentum"] = optimizer.momentum;
  j["beta1"] = optimizer.beta1;
  j["beta2"] = optimizer.beta2;
  j["epsilon"] = optimizer.epsilon;
  j["seed"] = seed;
  j["loss"] = to_string(loss);
  j["early_stop_patience"] = early_stop_patience;
  return j.dump();
}

std::string epoch_csv_line(const EpochReport& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.3f", r.epoch, r.train_loss, r.test_iou, r.seconds);
  return buf;
}

Tensor predict_probability(const TriChannelNet<float>& net, const Tensor& image) { return net.forward(image); }

Tensor predict_mask(const TriChannelNet<float>& net, const Tensor& image) {
  return binarize(predict_probability(net, image), static_cast<float>(kPredictionThreshold));
}

std::vector<MetricsRecord> evaluate(const TriChannelNet<float>& net, const std::vector<Sample>& samples,
                                    std::size_t threads) {
  std::vector<MetricsRecord> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    out[i] = MetricsRecord::from_confusion(s.id, confusion(predict_mask(net, s.image), s.mask));
  });
  return out;
}

double mean_iou(const std::vector<MetricsRecord>& records) {
  if (records.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : records) acc += r.iou;
  return acc / static_cast<double>(records.size());
}

TrainResult train(TriChannelNet<float> net, const SplitDataset& data, const TrainConfig& cfg,
                  const ProgressSink& sink, const TrainContext& ctx) {
  cfg.validate();
  if (data.train.empty()) throw DataError("train: empty training set");
  const auto& eval_set = data.test.empty() ? data.train : data.test;

  nlohmann::ordered_json echo = nlohmann::ordered_json::parse(cfg.to_json());
  echo["context"] = nlohmann::ordered_json::parse(ctx.extra_json);
  const std::string config_json = echo.dump();

  Optimizer<float> opt(cfg.optimizer);
  Rng rng(cfg.seed ^ 0x5EED5EED5EED5EEDull);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{net, {}, 0, -1.0};
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<ParamSet<float>> grads(count);
      std::vector<double> losses(count);
      parallel_for(count, cfg.threads, [&](std::size_t k) {
        const auto& s = data.train[order[start + k]];
        ForwardTrace<float> trace;
        const auto prob = net.forward(s.image, trace);
        if (cfg.loss == LossKind::bce) {
          auto l = bce_with_logits(trace.logits, s.mask);
          losses[k] = l.value;
          grads[k] = net.backward_from_logits(trace, l.grad);
        } else {
          auto l = dice_loss(prob, s.mask);
          losses[k] = l.value;
          grads[k] = net.backward(trace, l.grad);
        }
      });
      // Reduce in sample order so the result does not depend on the worker count.
      ParamSet<float> total = std::move(grads[0]);
      for (std::size_t k = 1; k < count; ++k) accumulate(total, grads[k]);
      scale(total, 1.0f / static_cast<float>(count));
      for (std::size_t k = 0; k < count; ++k) {
        if (!std::isfinite(losses[k]))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index + 1));
        loss_sum += losses[k];
      }
      apply_update(net, total, opt);
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.train_loss = loss_sum / static_cast<double>(order.size());
    rep.test_iou = mean_iou(evaluate(net, eval_set, cfg.threads));
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.reports.push_back(rep);
    if (sink) sink(rep);

    if (rep.test_iou > result.best_test_iou) {
      result.best_test_iou = rep.test_iou;
      result.best_epoch = epoch;
      result.net = net;
      since_best = 0;
      if (!cfg.checkpoint_path.empty()) {
        const CheckpointMeta meta{static_cast<std::uint32_t>(epoch), rep.test_iou, cfg.seed, config_json};
        save_checkpoint(net, meta, cfg.checkpoint_path);
      }
    } else if (result.best_test_iou > 0.0 && cfg.early_stop_patience > 0 &&
               ++since_best >= cfg.early_stop_patience) {
      // Patience only runs once some foreground has been found: an all-background
      // model scores exactly 0 every epoch, which says nothing about progress.
      break;
    }
  }
  return result;
}

template LossResult<float> bce_loss(const Tensor&, const Tensor&);
template LossResult<double> bce_loss(const TensorD&, const TensorD&);
template LossResult<float> bce_with_logits(const Tensor&, const Tensor&);
template LossResult<double> bce_with_logits(const TensorD&, const TensorD&);
template LossResult<float> dice_loss(const Tensor&, const Tensor&);
template LossResult<double> dice_loss(const TensorD&, const TensorD&);

}  // namespace triseg
