#include "gatenet/foldconv.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gatenet/ops.hpp"

namespace gatenet {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor fold(const Tensor& x) {
  const int fh = (x.h() + 1) / 2;
  const int fw = (x.w() + 1) / 2;
  Tensor y(Shape{x.n(), 4 * x.c(), fh, fw});
  const long long rows = 1LL * x.n() * y.c() * fh;
#pragma omp parallel for
  for (long long row = 0; row < rows; ++row) {
    const int fy = static_cast<int>(row % fh);
    const int oc = static_cast<int>((row / fh) % y.c());
    const int in = static_cast<int>(row / fh / y.c());
    const int ic = oc / 4;
    const int pos = oc % 4;  // 0 TL, 1 TR, 2 BL, 3 BR
    const int dy = pos / 2;
    const int dx = pos % 2;
    for (int fx = 0; fx < fw; ++fx) {
      const int iy = 2 * fy + dy;
      const int ix = 2 * fx + dx;
      y.at(in, oc, fy, fx) = (iy < x.h() && ix < x.w()) ? x.at(in, ic, iy, ix) : 0.0;
    }
  }
  return y;
}

Tensor unfold(const Tensor& x, int orig_h, int orig_w) {
  require(x.c() % 4 == 0,
          "unfold: channel count " + std::to_string(x.c()) + " not divisible by 4");
  require(orig_h >= 1 && orig_w >= 1 && 2 * x.h() - orig_h >= 0 && 2 * x.h() - orig_h <= 1 &&
              2 * x.w() - orig_w >= 0 && 2 * x.w() - orig_w <= 1,
          "unfold: original size " + std::to_string(orig_h) + "x" + std::to_string(orig_w) +
              " inconsistent with folded " + std::to_string(x.h()) + "x" + std::to_string(x.w()));
  Tensor y(Shape{x.n(), x.c() / 4, orig_h, orig_w});
  const long long rows = 1LL * x.n() * y.c() * orig_h;
#pragma omp parallel for
  for (long long row = 0; row < rows; ++row) {
    const int iy = static_cast<int>(row % orig_h);
    const int c = static_cast<int>((row / orig_h) % y.c());
    const int in = static_cast<int>(row / orig_h / y.c());
    for (int ix = 0; ix < orig_w; ++ix) {
      const int pos = (iy % 2) * 2 + (ix % 2);
      y.at(in, c, iy, ix) = x.at(in, 4 * c + pos, iy / 2, ix / 2);
    }
  }
  return y;
}

namespace {

void check_folded_conv_args(const Tensor& x, const Tensor& w, int rate) {
  require(rate >= 1, "folded_atrous_conv: rate must be >= 1");
  require(w.c() == 4 * x.c(), "folded_atrous_conv: weight inC " + std::to_string(w.c()) +
                                  " != 4 * input channels (" + std::to_string(4 * x.c()) + ")");
  require(w.n() % 4 == 0,
          "folded_atrous_conv: weight outC " + std::to_string(w.n()) + " not divisible by 4");
  require(w.h() == w.w() && w.h() % 2 == 1, "folded_atrous_conv: kernel must be square and odd");
}

}  // namespace

Tensor folded_atrous_conv(const Tensor& x, const Tensor& w, std::span<const double> bias,
                          int rate) {
  check_folded_conv_args(x, w, rate);
  const Tensor folded = fold(x);
  const ConvSpec spec{1, rate, rate * (w.h() - 1) / 2};
  const Tensor conv = conv2d(folded, w, bias, spec);
  return unfold(conv, x.h(), x.w());
}

void validate_aspp_config(const AsppConfig& cfg) {
  require(!cfg.rates.empty(), "aspp: rates must be non-empty");
  for (int r : cfg.rates) require(r >= 1, "aspp: every rate must be >= 1");
  require(cfg.out_channels >= 1, "aspp: out_channels must be >= 1");
}

namespace {

Tape::NodeId aspp_rate_conv(Tape& t, Tape::NodeId input, const AsppConfig& cfg, Tape::NodeId w,
                            Tape::NodeId b, int rate) {
  const Tensor& wt = t.value(w);
  if (cfg.conv_kind == AsppConvKind::folded_atrous) {
    check_folded_conv_args(t.value(input), wt, rate);
    const Tensor& in = t.value(input);
    const Tape::NodeId folded = t.fold(input);
    const ConvSpec spec{1, rate, rate * (wt.h() - 1) / 2};
    return t.unfold(t.conv2d(folded, w, b, spec), in.h(), in.w());
  }
  return t.conv2d(input, w, b, ConvSpec{1, rate, rate * (wt.h() - 1) / 2});
}

}  // namespace

Tape::NodeId aspp_forward(Tape& t, Tape::NodeId input, const AsppConfig& cfg,
                          const AsppNodes& nodes) {
  validate_aspp_config(cfg);
  require(nodes.rate_convs.size() == cfg.rates.size(),
          "aspp: expected " + std::to_string(cfg.rates.size()) + " rate convs, got " +
              std::to_string(nodes.rate_convs.size()));
  require(nodes.pointwise.has_value() == cfg.include_pointwise_branch,
          "aspp: pointwise branch params/config mismatch");
  require(nodes.image_pool.has_value() == cfg.include_image_pool_branch,
          "aspp: image pool branch params/config mismatch");

  const Tensor& in = t.value(input);
  std::vector<Tape::NodeId> branches;
  if (cfg.include_pointwise_branch) {
    branches.push_back(t.conv2d(input, nodes.pointwise->first, nodes.pointwise->second,
                                ConvSpec{}));
  }

  std::vector<Tape::NodeId> rate_outputs;
  for (size_t i = 0; i < cfg.rates.size(); ++i) {
    Tape::NodeId branch_in = input;
    if (cfg.topology == AsppTopology::dense && !rate_outputs.empty()) {
      std::vector<Tape::NodeId> cat_parts{input};
      for (Tape::NodeId prev : rate_outputs) cat_parts.push_back(prev);
      branch_in = t.concat_channels(cat_parts);
    }
    rate_outputs.push_back(aspp_rate_conv(t, branch_in, cfg, nodes.rate_convs[i].first,
                                          nodes.rate_convs[i].second, cfg.rates[i]));
  }
  for (Tape::NodeId id : rate_outputs) branches.push_back(id);

  if (cfg.include_image_pool_branch) {
    const Tape::NodeId pooled = t.global_avg_pool(input);
    const Tape::NodeId projected =
        t.conv2d(pooled, nodes.image_pool->first, nodes.image_pool->second, ConvSpec{});
    branches.push_back(t.bilinear_resize(projected, in.h(), in.w()));
  }

  const Tape::NodeId cat = t.concat_channels(branches);
  return t.conv2d(cat, nodes.fuse.first, nodes.fuse.second, ConvSpec{});
}

namespace {

Tensor bias_tensor(const std::vector<double>& b) {
  return Tensor(Shape{1, static_cast<int>(b.size()), 1, 1}, b);
}

}  // namespace

Tensor aspp_forward(const Tensor& input, const AsppConfig& cfg, const AsppParams& params) {
  Tape t;
  AsppNodes nodes;
  if (params.pointwise) {
    nodes.pointwise = {t.leaf(params.pointwise->w), t.leaf(bias_tensor(params.pointwise->b))};
  }
  for (const ConvParam& p : params.rate_convs) {
    nodes.rate_convs.push_back({t.leaf(p.w), t.leaf(bias_tensor(p.b))});
  }
  if (params.image_pool) {
    nodes.image_pool = {t.leaf(params.image_pool->w), t.leaf(bias_tensor(params.image_pool->b))};
  }
  nodes.fuse = {t.leaf(params.fuse.w), t.leaf(bias_tensor(params.fuse.b))};
  return t.value(aspp_forward(t, t.leaf(input), cfg, nodes));
}

std::set<std::pair<int, int>> receptive_field(AsppConvKind kind, int rate, int kernel,
                                              std::pair<int, int> out_pos, int grid_h, int grid_w) {
  const int out_c = kind == AsppConvKind::folded_atrous ? 4 : 1;
  const int in_c = kind == AsppConvKind::folded_atrous ? 4 : 1;
  Tensor w(Shape{out_c, in_c, kernel, kernel}, 1.0);
  const std::vector<double> bias(static_cast<size_t>(out_c), 0.0);

  std::set<std::pair<int, int>> support;
  for (int py = 0; py < grid_h; ++py) {
    for (int px = 0; px < grid_w; ++px) {
      Tensor impulse(Shape{1, 1, grid_h, grid_w});
      impulse.at(0, 0, py, px) = 1.0;
      Tensor out;
      if (kind == AsppConvKind::folded_atrous) {
        out = folded_atrous_conv(impulse, w, bias, rate);
      } else {
        out = conv2d(impulse, w, bias, ConvSpec{1, rate, rate * (kernel - 1) / 2});
      }
      if (out.at(0, 0, out_pos.first, out_pos.second) != 0.0) {
        support.insert({py, px});
      }
    }
  }
  return support;
}

}  // namespace gatenet
