#include "gatenet/gates.hpp"

#include <stdexcept>

namespace gatenet {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

GatePair gate_values(Tape& t, Tape::NodeId context, Tape::NodeId partner, Tape::NodeId conv_w,
                     Tape::NodeId conv_b) {
  const Tensor& ctx = t.value(context);
  const Tensor& par = t.value(partner);
  require(ctx.n() == par.n(), "gate_values: batch mismatch " + to_string(ctx.shape()) + " vs " +
                                  to_string(par.shape()));
  require(t.value(conv_w).n() == 2, "gate_values: gate conv must output 2 channels, got " +
                                        std::to_string(t.value(conv_w).n()));
  Tape::NodeId resized = partner;
  if (par.h() != ctx.h() || par.w() != ctx.w()) {
    resized = t.bilinear_resize(partner, ctx.h(), ctx.w());
  }
  const int k = t.value(conv_w).h();
  const Tape::NodeId cat = t.concat_channels({context, resized});
  const Tape::NodeId conv = t.conv2d(cat, conv_w, conv_b, ConvSpec{1, 1, (k - 1) / 2});
  const Tape::NodeId pooled = t.global_avg_pool(t.sigmoid(conv));
  return GatePair{t.slice_channels(pooled, 0, 1), t.slice_channels(pooled, 1, 1)};
}

Tape::NodeId aggregate_encoder(Tape& t, const std::vector<Tape::NodeId>& levels,
                               Tape::NodeId conv_w, Tape::NodeId conv_b, int target_h,
                               int target_w) {
  require(levels.size() == 5,
          "aggregate_encoder: expected 5 levels, got " + std::to_string(levels.size()));
  std::vector<Tape::NodeId> resized;
  resized.reserve(5);
  for (Tape::NodeId id : levels) {
    resized.push_back(t.bilinear_resize(id, target_h, target_w));
  }
  const int k = t.value(conv_w).h();
  const Tape::NodeId cat = t.concat_channels(resized);
  return t.conv2d(cat, conv_w, conv_b, ConvSpec{1, 1, (k - 1) / 2});
}

CrossModalOut cross_modal_gate(Tape& t, Tape::NodeId e_rgb, Tape::NodeId e_d, Tape::NodeId gate_w,
                               Tape::NodeId gate_b, Tape::NodeId fuse_rgb_w,
                               Tape::NodeId fuse_rgb_b, Tape::NodeId fuse_d_w,
                               Tape::NodeId fuse_d_b) {
  const Tensor& a = t.value(e_rgb);
  const Tensor& b = t.value(e_d);
  require(a.h() == b.h() && a.w() == b.w(), "cross_modal_gate: resolution mismatch " +
                                                to_string(a.shape()) + " vs " +
                                                to_string(b.shape()));
  const GatePair gates = gate_values(t, e_rgb, e_d, gate_w, gate_b);
  const int k = t.value(fuse_rgb_w).h();
  const ConvSpec spec{1, 1, (k - 1) / 2};
  const Tape::NodeId proj_rgb = t.conv2d(e_rgb, fuse_rgb_w, fuse_rgb_b, spec);
  const Tape::NodeId proj_d = t.conv2d(e_d, fuse_d_w, fuse_d_b, spec);
  const Tape::NodeId fused =
      t.add(t.scale_channels(proj_rgb, gates.g1), t.scale_channels(proj_d, gates.g2));
  return CrossModalOut{fused, gates.g1, gates.g2};
}

std::pair<Tensor, Tensor> gate_values_eager(const Tensor& context, const Tensor& partner,
                                            const Tensor& conv_w, const Tensor& conv_b) {
  Tape t;
  const GatePair g = gate_values(t, t.leaf(context), t.leaf(partner), t.leaf(conv_w),
                                 t.leaf(conv_b));
  return {t.value(g.g1), t.value(g.g2)};
}

Tensor aggregate_encoder_eager(const std::vector<Tensor>& levels, const Tensor& conv_w,
                               const Tensor& conv_b, int target_h, int target_w) {
  Tape t;
  std::vector<Tape::NodeId> ids;
  ids.reserve(levels.size());
  for (const Tensor& l : levels) ids.push_back(t.leaf(l));
  return t.value(aggregate_encoder(t, ids, t.leaf(conv_w), t.leaf(conv_b), target_h, target_w));
}

}  // namespace gatenet
