#pragma once

#include <span>

#include "gatenet/tensor.hpp"
#include "gatenet/ops.hpp"

// Serial reference kernels: plain textbook loops, no threading. These keep the
// same per-element accumulation order as the parallel kernels, so outputs must
// match bit for bit; tests assert that and the benchmark reports the speedup.
namespace gatenet::ref {

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const double> bias,
              const ConvSpec& spec);
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);
Tensor global_avg_pool(const Tensor& input);
Tensor fold(const Tensor& input);
Tensor unfold(const Tensor& input, int orig_h, int orig_w);
Tensor folded_atrous_conv(const Tensor& input, const Tensor& weight, std::span<const double> bias,
                          int rate);

}  // namespace gatenet::ref
