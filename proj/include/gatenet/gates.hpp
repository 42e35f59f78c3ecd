#pragma once

#include <array>
#include <utility>
#include <vector>

#include "gatenet/tape.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

// Per-forward record of the gate scalars, [level][sample]. g1 weights the FPN
// branch, g2 the parallel branch. cross_modal holds (g_rgb, g_d) pairs for the
// two-stream model and stays empty otherwise.
struct GateTrace {
  std::array<std::vector<std::pair<double, double>>, 5> levels;
  std::array<std::vector<std::pair<double, double>>, 5> cross_modal;

  bool has_levels() const { return !levels[0].empty(); }
  bool has_cross_modal() const { return !cross_modal[0].empty(); }
};

struct GatePair {
  Tape::NodeId g1 = -1;  // (n,1,1,1)
  Tape::NodeId g2 = -1;
};

// Conv(Cat(context, partner)) -> sigmoid -> global average pool -> two scalars
// per sample, each strictly in (0,1). The partner is bilinearly resized to the
// context's spatial size first; the gate conv must output 2 channels.
GatePair gate_values(Tape& t, Tape::NodeId context, Tape::NodeId partner, Tape::NodeId conv_w,
                     Tape::NodeId conv_b);

// E = Conv(Cat(E1..E5)) with every level resized to (target_h, target_w).
Tape::NodeId aggregate_encoder(Tape& t, const std::vector<Tape::NodeId>& levels,
                               Tape::NodeId conv_w, Tape::NodeId conv_b, int target_h,
                               int target_w);

struct CrossModalOut {
  Tape::NodeId fused = -1;
  Tape::NodeId g_rgb = -1;
  Tape::NodeId g_d = -1;
};

// Gate pair from the two modal features, then
// fused = g_rgb * Conv(e_rgb) + g_d * Conv(e_d).
CrossModalOut cross_modal_gate(Tape& t, Tape::NodeId e_rgb, Tape::NodeId e_d,
                               Tape::NodeId gate_w, Tape::NodeId gate_b, Tape::NodeId fuse_rgb_w,
                               Tape::NodeId fuse_rgb_b, Tape::NodeId fuse_d_w,
                               Tape::NodeId fuse_d_b);

// Convenience eager wrappers used by unit tests.
std::pair<Tensor, Tensor> gate_values_eager(const Tensor& context, const Tensor& partner,
                                            const Tensor& conv_w, const Tensor& conv_b);
Tensor aggregate_encoder_eager(const std::vector<Tensor>& levels, const Tensor& conv_w,
                               const Tensor& conv_b, int target_h, int target_w);

}  // namespace gatenet
