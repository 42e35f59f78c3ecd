#pragma once

// Independent brute-force oracles used by the unit and acceptance suites.
// These deliberately avoid the library's optimized code paths: metrics are
// direct per-pixel/per-threshold transliterations of the defining formulas,
// and the convolution oracles enumerate taps by index arithmetic.

#include <array>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "gatenet/gray_image.hpp"
#include "gatenet/metrics.hpp"
#include "gatenet/tensor.hpp"

namespace oracle {

gatenet::Confusion confusion(const gatenet::GrayImage& pred_bin, const gatenet::GrayImage& gt);

struct Ratios {
  double pa, precision, recall, iou, dice, ber;
};
Ratios ratios(const gatenet::Confusion& c);

// 256 explicit threshold passes plus the adaptive value.
struct FSweep {
  std::array<double, 256> curve;
  double f_max;
  double f_mean;
};
FSweep f_sweep(const gatenet::GrayImage& pred, const gatenet::GrayImage& gt);

double weighted_f(const gatenet::GrayImage& pred, const gatenet::GrayImage& gt);
double s_measure(const gatenet::GrayImage& pred, const gatenet::GrayImage& gt);

struct ESweep {
  std::array<double, 256> curve;
  double e_adaptive;
};
ESweep e_sweep(const gatenet::GrayImage& pred, const gatenet::GrayImage& gt);

double mae(const gatenet::GrayImage& pred, const gatenet::GrayImage& gt);

// Full report matching gatenet::evaluate_pair's assembly rules.
gatenet::MetricReport report(const gatenet::GrayImage& pred, const gatenet::GrayImage& gt,
                             const gatenet::EvalOptions& opts = {});

// Expected nonzero output positions of a dilated conv applied to an impulse,
// by tap enumeration.
std::set<std::pair<int, int>> impulse_response_positions(std::pair<int, int> impulse, int kernel,
                                                         int dilation, int h, int w);

// Folded atrous convolution evaluated by direct gather from the input tensor
// (no fold/unfold/conv2d calls).
gatenet::Tensor folded_conv_gather(const gatenet::Tensor& x, const gatenet::Tensor& w,
                                   std::span<const double> bias, int rate);

}  // namespace oracle
