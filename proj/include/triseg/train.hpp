#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "triseg/checkpoint.hpp"
#include "triseg/data.hpp"
#include "triseg/metrics.hpp"
#include "triseg/model.hpp"
#include "triseg/optimizer.hpp"

namespace triseg {

inline constexpr double kPredictionThreshold = 0.5;
inline constexpr double kDiceSmoothing = 1.0;

enum class LossKind { bce, dice };

std::string to_string(LossKind k);
LossKind parse_loss(const std::string& s);

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;  // d loss / d input (probabilities or logits, see function)
};

/// Mean binary cross-entropy of probabilities, evaluated through the logit so
/// saturated predictions stay finite. Gradient is with respect to `pred`.
template <typename T>
LossResult<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Mean binary cross-entropy of sigmoid(logits); gradient with respect to the logits.
template <typename T>
LossResult<T> bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& target);

/// 1 - (2 sum(p t) + s) / (sum(p) + sum(t) + s), s = 1. Gradient with respect to `pred`.
template <typename T>
LossResult<T> dice_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  OptimizerConfig optimizer{};
  std::uint64_t seed = 1;
  LossKind loss = LossKind::bce;
  std::size_t early_stop_patience = 10;  // 0 disables early stopping
  std::filesystem::path checkpoint_path;  // empty: keep the best model in memory only
  std::size_t threads = 1;

  /// Throws std::invalid_argument on an out-of-range field.
  void validate() const;
  std::string to_json() const;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_iou = 0.0;
  double seconds = 0.0;
};

inline constexpr const char* kEpochCsvHeader = "epoch,train_loss,test_iou,seconds";
std::string epoch_csv_line(const EpochReport& r);

struct TrainResult {
  TriChannelNet<float> net;  // parameters from the best epoch
  std::vector<EpochReport> reports;
  std::size_t best_epoch = 0;
  double best_test_iou = -1.0;
};

using ProgressSink = std::function<void(const EpochReport&)>;

/// Extra metadata folded into the checkpoint's config echo.
struct TrainContext {
  std::string extra_json = "{}";
};

/// Mini-batch training: seeded shuffle each epoch, mean gradient per batch,
/// one optimizer step per batch, test-set mean IoU after each epoch. The best
/// epoch (strictly higher IoU) is checkpointed. Stops after `epochs` or when
/// `early_stop_patience` epochs pass without improvement, counted from the
/// first epoch with a nonzero test IoU. Throws NumericError
/// naming epoch and batch if the loss becomes non-finite.
TrainResult train(TriChannelNet<float> net, const SplitDataset& data, const TrainConfig& cfg,
                  const ProgressSink& sink = {}, const TrainContext& ctx = {});

/// Network probability map for one 100x100x1 image.
Tensor predict_probability(const TriChannelNet<float>& net, const Tensor& image);
/// Probability map thresholded at 0.5 (p >= 0.5 is tumour).
Tensor predict_mask(const TriChannelNet<float>& net, const Tensor& image);

/// Per-sample metrics, in input order. Samples may be processed concurrently.
std::vector<MetricsRecord> evaluate(const TriChannelNet<float>& net, const std::vector<Sample>& samples,
                                    std::size_t threads = 1);
double mean_iou(const std::vector<MetricsRecord>& records);

}  // namespace triseg
