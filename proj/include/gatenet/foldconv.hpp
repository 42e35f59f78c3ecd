#pragma once

#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "gatenet/tape.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

// 2x2 space-to-channel transform. Window positions are stacked in the order
// top-left, top-right, bottom-left, bottom-right; output channel 4*c + pos.
// Odd spatial dims are zero-padded on the right/bottom before folding and
// cropped again by unfold.
Tensor fold(const Tensor& input);
Tensor unfold(const Tensor& input, int orig_h, int orig_w);

// fold -> dilated 3x3 conv (stride 1, padding = rate*(k-1)/2) -> unfold.
// weight.inC must be 4*input.c and weight.outC divisible by 4; the result has
// weight.outC/4 channels at the input's spatial size.
Tensor folded_atrous_conv(const Tensor& input, const Tensor& weight, std::span<const double> bias,
                          int rate);

enum class AsppConvKind { plain_atrous, folded_atrous };
enum class AsppTopology { parallel, dense };

struct AsppConfig {
  AsppConvKind conv_kind = AsppConvKind::folded_atrous;
  AsppTopology topology = AsppTopology::parallel;
  std::vector<int> rates{2, 4, 6};
  bool include_pointwise_branch = true;
  bool include_image_pool_branch = true;
  int out_channels = 32;
};

void validate_aspp_config(const AsppConfig& cfg);

struct ConvParam {
  Tensor w;
  std::vector<double> b;
};

struct AsppParams {
  std::optional<ConvParam> pointwise;   // 1x1, input -> out_channels
  std::vector<ConvParam> rate_convs;    // one per rate
  std::optional<ConvParam> image_pool;  // 1x1 after global pooling
  ConvParam fuse;                       // 1x1 over the branch concat
};

// Same structure with (weight, bias) node ids for the recorded variant.
struct AsppNodes {
  std::optional<std::pair<Tape::NodeId, Tape::NodeId>> pointwise;
  std::vector<std::pair<Tape::NodeId, Tape::NodeId>> rate_convs;
  std::optional<std::pair<Tape::NodeId, Tape::NodeId>> image_pool;
  std::pair<Tape::NodeId, Tape::NodeId> fuse{-1, -1};
};

// Branch order in the concat: pointwise, rate branches in config order, image
// pool. In the dense topology each rate branch consumes Cat(input, previous
// rate outputs); the pointwise/pool branches always read the module input.
Tape::NodeId aspp_forward(Tape& t, Tape::NodeId input, const AsppConfig& cfg,
                          const AsppNodes& nodes);
Tensor aspp_forward(const Tensor& input, const AsppConfig& cfg, const AsppParams& params);

// Input coordinates whose perturbation changes the output at out_pos, found by
// forward impulse probing on a grid_h x grid_w single-channel input.
std::set<std::pair<int, int>> receptive_field(AsppConvKind kind, int rate, int kernel,
                                              std::pair<int, int> out_pos, int grid_h = 32,
                                              int grid_w = 32);

}  // namespace gatenet
