#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "gatenet/gray_image.hpp"

namespace gatenet {

struct Confusion {
  long long tp = 0;
  long long tn = 0;
  long long fp = 0;
  long long fn = 0;
};

// Pixel counts for binarized maps (values >= 0.5 count as foreground).
Confusion confusion(const GrayImage& pred_bin, const GrayImage& gt);

struct RatioMetrics {
  double pa = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double iou = 0.0;
  double dice = 0.0;
  double ber = 0.0;
};

// Exact count ratios; 0/0 resolves to 0. BER = 1 - (TPR + TNR)/2.
RatioMetrics ratio_metrics(const Confusion& c);

double f_measure(double precision, double recall, double beta2 = 0.3);

// min(2*mean(pred), 1): the standard adaptive binarization threshold.
double adaptive_threshold(const GrayImage& pred);

struct FCurve {
  std::array<double, 256> curve{};  // F at threshold k/255, pred >= t positive
  double f_max = 0.0;
  double f_mean = 0.0;  // F at the adaptive threshold
};
FCurve f_curve(const GrayImage& pred, const GrayImage& gt);

// Weighted F-measure (beta^2 = 1): errors propagated to the nearest foreground
// pixel, smoothed with a 7x7 sigma-5 Gaussian, and decayed with distance from
// the foreground. Returns 0 for an empty ground truth.
double weighted_f(const GrayImage& pred, const GrayImage& gt);

// alpha * object-aware + (1-alpha) * region-aware structural similarity.
// Degenerate GT: all-zero -> 1 - mean(pred); all-one -> mean(pred).
double s_measure(const GrayImage& pred, const GrayImage& gt, double alpha = 0.5);

struct EMeasureResult {
  double e_adaptive = 0.0;
  std::array<double, 256> curve{};
};
// Enhanced-alignment measure of the binarized prediction, with the headline
// value at the adaptive threshold plus the 256-point threshold curve.
EMeasureResult e_measure(const GrayImage& pred, const GrayImage& gt);

double mae(const GrayImage& pred, const GrayImage& gt);

enum class BinarizeMode { fixed, adaptive };

struct EvalOptions {
  BinarizeMode binarize = BinarizeMode::fixed;
  double threshold = 0.5;  // used in fixed mode
};

struct MetricReport {
  double pa = 0.0;
  double f_max = 0.0;
  double f_mean = 0.0;
  double f_weighted = 0.0;
  double s_measure = 0.0;
  double e_measure = 0.0;
  double iou = 0.0;
  double dice = 0.0;
  double ber = 0.0;
  double mae = 0.0;
  std::array<double, 256> f_curve{};
  std::array<double, 256> e_curve{};
  double threshold_used = 0.5;
};

MetricReport evaluate_pair(const GrayImage& pred, const GrayImage& gt,
                           const EvalOptions& opts = {});

struct DatasetEval {
  MetricReport aggregate;
  std::vector<MetricReport> per_image;
};

// Per-image reports plus their aggregate. Scalars are averaged in input order
// (callers pass name-sorted pairs); the aggregate F_max is the max of the
// across-image mean F curve. Results do not depend on the worker count.
DatasetEval evaluate_dataset(std::span<const std::pair<GrayImage, GrayImage>> pairs, int jobs = 0,
                             const EvalOptions& opts = {});

}  // namespace gatenet
