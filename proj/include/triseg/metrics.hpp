#pragma once

// Pixel-level segmentation metrics, distribution summaries, and TP/FP/FN overlays.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "triseg/pnm.hpp"
#include "triseg/tensor.hpp"

namespace triseg {

struct Confusion {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Rates {
  double tpr = 0.0;
  double ppv = 0.0;
};

/// Both inputs must be binary with equal shapes.
Confusion confusion(const Tensor& pred, const Tensor& truth);

/// tp / (tp + fp + fn); 1.0 when all three are zero.
double iou(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

/// tpr = tp / (tp + fn), ppv = tp / (tp + fp); an empty denominator yields 1.0.
Rates rates(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);

struct MetricsRecord {
  std::string id;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double iou = 0.0, tpr = 0.0, ppv = 0.0;

  static MetricsRecord from_confusion(std::string id, const Confusion& c);
};

struct MetricSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

struct DistributionSummary {
  std::size_t n = 0;
  MetricSummary iou, tpr, ppv;
};

/// Linear interpolation between closest ranks (R type 7). `sorted` ascending.
double quantile(const std::vector<double>& sorted, double q);
MetricSummary summarize_values(std::vector<double> values);
DistributionSummary summarize(const std::vector<MetricsRecord>& records);

/// Grayscale base; TP green, FP red, FN blue; TN keeps the gray value.
RgbImage render_overlay(const Tensor& image, const Tensor& pred, const Tensor& truth);

// --- serialisation ----------------------------------------------------------

inline constexpr const char* kRecordsCsvHeader = "id,tp,fp,fn,tn,iou,tpr,ppv";

void write_records_csv(std::ostream& os, const std::vector<MetricsRecord>& records);
/// Throws DataError on a malformed header or row.
std::vector<MetricsRecord> read_records_csv(std::istream& is);

std::string summary_to_json(const DistributionSummary& s, int indent = 2);
/// Plain text: one row per metric, columns `metric n min q1 median q3 max mean`.
std::string summary_table(const DistributionSummary& s);

}  // namespace triseg
