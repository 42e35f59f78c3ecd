#pragma once

#include <span>
#include <vector>

#include "gatenet/tensor.hpp"

// Forward operators and their adjoint kernels. All kernels parallelize over
// independent output elements (or independent planes) so results are
// bit-identical for any thread count. Reductions accumulate in a fixed index
// order. Serial counterparts used by tests and the benchmark live in
// ref_ops.hpp.
namespace gatenet {

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

// Computed output side length, or <= 0 when the configuration is invalid.
int conv_out_dim(int in, int kernel, const ConvSpec& spec);

// Cross-correlation (no kernel flip), zero padding. weight is (outC, inC, k, k),
// bias has outC entries.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const double> bias,
              const ConvSpec& spec);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         const ConvSpec& spec);
Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& input, const Shape& weight_shape,
                          const ConvSpec& spec);
std::vector<double> conv2d_grad_bias(const Tensor& grad_out);

// Half-pixel (align-corners-false) sampling: src = (dst + 0.5) * scale - 0.5,
// clamped to the valid range. Works for both up- and downscaling.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);
// Contract-checked wrapper: rejects downsampling requests.
Tensor bilinear_upsample(const Tensor& input, int out_h, int out_w);
Tensor bilinear_resize_grad_input(const Tensor& grad_out, const Shape& input_shape);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_grad_input(const Tensor& grad_out, const Shape& input_shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// Multiplies every value of sample n by gate[n]; gate has shape (n,1,1,1).
Tensor scale_channels(const Tensor& a, const Tensor& gate);

Tensor concat_channels(std::span<const Tensor> parts);
Tensor slice_channels(const Tensor& a, int from, int count);

// Full reduction in fixed index order.
double reduce_sum(const Tensor& a);

// Scalar sigmoid clamped to stay strictly inside (0,1) for every finite input.
double sigmoid_scalar(double v);

// Named pointwise dispatch mirroring the op family above.
enum class PointwiseKind { add, mul, sigmoid, relu, scale_channels };
Tensor pointwise(PointwiseKind kind, const Tensor& a, const Tensor* b = nullptr);

}  // namespace gatenet
