#include "triseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <json.hpp>
#include <numeric>
#include <ostream>
#include <sstream>

#include "triseg/error.hpp"

namespace triseg {

Confusion confusion(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape())
    throw ShapeError("confusion: shape mismatch " + pred.shape().str() + " vs " + truth.shape().str());
  Confusion c;
  auto p = pred.values();
  auto t = truth.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const float a = p[i], b = t[i];
    if ((a != 0.0f && a != 1.0f) || (b != 0.0f && b != 1.0f))
      throw DataError("confusion: non-binary value at element " + std::to_string(i));
    if (a == 1.0f) {
      if (b == 1.0f) ++c.tp;
      else ++c.fp;
    } else if (b == 1.0f) {
      ++c.fn;
    }
  }
  c.tn = p.size() - c.tp - c.fp - c.fn;
  return c;
}

double iou(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const std::uint64_t denom = tp + fp + fn;
  return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

Rates rates(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  Rates r;
  r.tpr = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.ppv = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  return r;
}

MetricsRecord MetricsRecord::from_confusion(std::string id, const Confusion& c) {
  const auto r = rates(c.tp, c.fp, c.fn);
  return MetricsRecord{std::move(id), c.tp, c.fp, c.fn, c.tn, triseg::iou(c.tp, c.fp, c.fn), r.tpr, r.ppv};
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

MetricSummary summarize_values(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: empty list");
  std::sort(values.begin(), values.end());
  MetricSummary s;
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

DistributionSummary summarize(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw std::invalid_argument("summarize: empty list");
  std::vector<double> iou_v, tpr_v, ppv_v;
  for (const auto& r : records) {
    iou_v.push_back(r.iou);
    tpr_v.push_back(r.tpr);
    ppv_v.push_back(r.ppv);
  }
  return DistributionSummary{records.size(), summarize_values(std::move(iou_v)),
                             summarize_values(std::move(tpr_v)), summarize_values(std::move(ppv_v))};
}

RgbImage render_overlay(const Tensor& image, const Tensor& pred, const Tensor& truth) {
  if (image.shape() != pred.shape() || pred.shape() != truth.shape() || image.channels() != 1)
    throw ShapeError("render_overlay: image " + image.shape().str() + ", prediction " + pred.shape().str() +
                     ", truth " + truth.shape().str() + " must be equal single-channel shapes");
  RgbImage out{image.height(), image.width(), std::vector<std::uint8_t>(image.size() * 3)};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const bool p = pred.data()[i] >= 0.5f;
    const bool t = truth.data()[i] >= 0.5f;
    std::uint8_t* px = &out.rgb[i * 3];
    if (p && t) {
      px[0] = 0, px[1] = 255, px[2] = 0;
    } else if (p) {
      px[0] = 255, px[1] = 0, px[2] = 0;
    } else if (t) {
      px[0] = 0, px[1] = 0, px[2] = 255;
    } else {
      const double v = std::clamp(static_cast<double>(image.data()[i]), 0.0, 1.0);
      const auto g = static_cast<std::uint8_t>(std::lround(v * 255.0));
      px[0] = px[1] = px[2] = g;
    }
  }
  return out;
}

// --- serialisation ------------------------------------------------------------

namespace {

std::string fmt_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ls(line);
  while (std::getline(ls, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_records_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << kRecordsCsvHeader << '\n';
  for (const auto& r : records)
    os << r.id << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ',' << fmt_fraction(r.iou) << ','
       << fmt_fraction(r.tpr) << ',' << fmt_fraction(r.ppv) << '\n';
}

std::vector<MetricsRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("metrics CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordsCsvHeader) throw DataError("metrics CSV: unexpected header '" + line + "'");
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw DataError("metrics CSV line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      std::size_t used = 0;
      auto u64 = [&](const std::string& s) {
        const auto v = std::stoull(s, &used);
        if (used != s.size() || s.front() == '-') throw std::invalid_argument(s);
        return static_cast<std::uint64_t>(v);
      };
      auto real = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
      };
      out.push_back(MetricsRecord{f[0], u64(f[1]), u64(f[2]), u64(f[3]), u64(f[4]), real(f[5]), real(f[6]),
                                  real(f[7])});
    } catch (const std::exception&) {
      throw DataError("metrics CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::string summary_to_json(const DistributionSummary& s, int indent) {
  auto metric = [&](const MetricSummary& m) {
    return nlohmann::json{{"min", m.min}, {"q1", m.q1},   {"median", m.median},
                          {"q3", m.q3},   {"max", m.max}, {"mean", m.mean},
                          {"n", s.n}};
  };
  nlohmann::json j{{"iou", metric(s.iou)}, {"tpr", metric(s.tpr)}, {"ppv", metric(s.ppv)}};
  return j.dump(indent);
}

std::string summary_table(const DistributionSummary& s) {
  std::ostringstream os;
  os << "metric n min q1 median q3 max mean\n";
  auto row = [&](const char* name, const MetricSummary& m) {
    os << name << ' ' << s.n << ' ' << fmt_fraction(m.min) << ' ' << fmt_fraction(m.q1) << ' '
       << fmt_fraction(m.median) << ' ' << fmt_fraction(m.q3) << ' ' << fmt_fraction(m.max) << ' '
       << fmt_fraction(m.mean) << '\n';
  };
  row("iou", s.iou);
  row("tpr", s.tpr);
  row("ppv", s.ppv);
  return os.str();
}

}  // namespace triseg
