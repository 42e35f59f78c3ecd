#include "gatenet/net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace gatenet {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

std::string level_name(const std::string& prefix, int level) {
  return prefix + std::to_string(level);
}

}  // namespace

ModelConfig preset_config(const std::string& name, int input_h, int input_w) {
  ModelConfig cfg;
  cfg.input_h = input_h;
  cfg.input_w = input_w;
  if (name == "m1") {
    // baseline FPN: defaults
  } else if (name == "m2") {
    cfg.parallel_branch = true;
  } else if (name == "m3") {
    cfg.parallel_branch = true;
    cfg.gate_version = GateVersion::v1;
  } else if (name == "m4") {
    cfg.parallel_branch = true;
    cfg.gate_version = GateVersion::v2;
  } else if (name == "m5") {
    cfg.parallel_branch = true;
    cfg.gate_version = GateVersion::v2;
    cfg.aspp = AsppConfig{};
  } else if (name == "two-stream") {
    cfg.stream = StreamMode::two;
    cfg.parallel_branch = true;
    cfg.gate_version = GateVersion::v2;
    cfg.aspp = AsppConfig{};
  } else {
    throw std::invalid_argument("unknown model preset '" + name +
                                "' (expected m1..m5 or two-stream)");
  }
  return cfg;
}

std::string config_preset_name(const ModelConfig& cfg) {
  if (cfg.stream == StreamMode::two) return "two-stream";
  if (cfg.aspp) return "m5";
  if (cfg.gate_version == GateVersion::v2) return "m4";
  if (cfg.gate_version == GateVersion::v1) return "m3";
  if (cfg.parallel_branch) return "m2";
  return "m1";
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

std::map<std::string, Shape> expected_param_shapes(const ModelConfig& cfg) {
  std::map<std::string, Shape> shapes;
  const auto& ec = cfg.encoder_channels;
  const int tc = cfg.transition_channels;
  require(tc >= 1, "config: transition_channels must be >= 1");
  for (int c : ec) require(c >= 1, "config: encoder channels must be >= 1");
  if (cfg.aspp) {
    validate_aspp_config(*cfg.aspp);
    require(cfg.aspp->out_channels == tc,
            "config: aspp out_channels " + std::to_string(cfg.aspp->out_channels) +
                " must equal transition_channels " + std::to_string(tc));
  }

  auto add_conv = [&](const std::string& name, int out_c, int in_c, int k) {
    shapes[name + ".w"] = Shape{out_c, in_c, k, k};
    shapes[name + ".b"] = Shape{1, out_c, 1, 1};
  };

  auto add_encoder = [&](const std::string& prefix, int image_channels) {
    for (int i = 1; i <= 5; ++i) {
      const int in_c = i == 1 ? image_channels : ec[static_cast<size_t>(i - 2)];
      const int out_c = ec[static_cast<size_t>(i - 1)];
      add_conv(level_name(prefix, i) + ".conv1", out_c, in_c, 3);
      add_conv(level_name(prefix, i) + ".conv2", out_c, out_c, 3);
    }
  };

  add_encoder("enc", 3);
  if (cfg.stream == StreamMode::two) {
    add_encoder("encd", 1);
    for (int i = 1; i <= 5; ++i) {
      const int c = ec[static_cast<size_t>(i - 1)];
      add_conv(level_name("xgate", i), 2, 2 * c, 3);
      add_conv(level_name("xfuse_rgb", i), c, c, 3);
      add_conv(level_name("xfuse_d", i), c, c, 3);
    }
  }

  const int top_transitions = cfg.aspp ? 4 : 5;
  for (int i = 1; i <= top_transitions; ++i) {
    add_conv(level_name("trans", i), tc, ec[static_cast<size_t>(i - 1)], 3);
  }
  if (cfg.aspp) {
    const AsppConfig& a = *cfg.aspp;
    const int in_c = ec[4];
    const int bw = a.out_channels;
    int branches = static_cast<int>(a.rates.size());
    if (a.include_pointwise_branch) {
      add_conv("aspp.pw", bw, in_c, 1);
      ++branches;
    }
    for (size_t j = 0; j < a.rates.size(); ++j) {
      const int branch_in =
          a.topology == AsppTopology::dense ? in_c + static_cast<int>(j) * bw : in_c;
      if (a.conv_kind == AsppConvKind::folded_atrous) {
        add_conv("aspp.rate" + std::to_string(j), 4 * bw, 4 * branch_in, 3);
      } else {
        add_conv("aspp.rate" + std::to_string(j), bw, branch_in, 3);
      }
    }
    if (a.include_image_pool_branch) {
      add_conv("aspp.pool", bw, in_c, 1);
      ++branches;
    }
    shapes["aspp.fuse.w"] = Shape{bw, branches * bw, 1, 1};
    shapes["aspp.fuse.b"] = Shape{1, bw, 1, 1};
  }

  if (cfg.gate_version == GateVersion::v2) {
    int agg_in = 0;
    for (int c : ec) agg_in += c;
    add_conv("gateagg", tc, agg_in, 3);
    for (int i = 1; i <= 5; ++i) add_conv(level_name("gate", i), 2, tc + tc, 3);
  } else if (cfg.gate_version == GateVersion::v1) {
    for (int i = 1; i <= 5; ++i) {
      add_conv(level_name("gate", i), 2, ec[static_cast<size_t>(i - 1)] + tc, 3);
    }
  }

  for (int i = 5; i >= 2; --i) add_conv(level_name("dec", i), tc, tc, 3);
  add_conv("dec1", 1, tc, 3);
  if (cfg.parallel_branch) add_conv("fuse", 1, 1 + 5 * tc, 3);
  return shapes;
}

void validate_params(const ModelConfig& cfg, const ModelParams& params) {
  const auto expected = expected_param_shapes(cfg);
  for (const auto& [name, shape] : expected) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) {
      throw std::invalid_argument("params: missing '" + name + "'");
    }
    if (!(it->second.shape() == shape)) {
      throw std::invalid_argument("params: '" + name + "' has shape " +
                                  to_string(it->second.shape()) + ", expected " +
                                  to_string(shape));
    }
  }
  for (const auto& [name, tensor] : params.tensors) {
    if (expected.count(name) == 0) {
      throw std::invalid_argument("params: unexpected entry '" + name + "'");
    }
  }
}

ModelParams init_params(const ModelConfig& cfg, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  ModelParams params;
  for (const auto& [name, shape] : expected_param_shapes(cfg)) {
    Tensor t(shape);
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0) {
      const double fan_in = 1.0 * shape.c * shape.h * shape.w;
      const double fan_out = 1.0 * shape.n * shape.h * shape.w;
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (long long i = 0; i < t.size(); ++i) t[i] = uniform(-a, a);
    }
    params.tensors.emplace(name, std::move(t));
  }
  return params;
}

namespace {

using NodeMap = std::map<std::string, Tape::NodeId>;

NodeMap param_leaves(Tape& t, const ModelParams& params, bool requires_grad) {
  NodeMap ids;
  for (const auto& [name, tensor] : params.tensors) {
    ids.emplace(name, t.leaf(tensor, requires_grad));
  }
  return ids;
}

Tape::NodeId conv_layer(Tape& t, Tape::NodeId x, const NodeMap& p, const std::string& name,
                        int stride = 1) {
  const Tape::NodeId w = p.at(name + ".w");
  const int k = t.value(w).h();
  return t.conv2d(x, w, p.at(name + ".b"), ConvSpec{stride, 1, (k - 1) / 2});
}

std::array<Tape::NodeId, 5> encode_stream(Tape& t, Tape::NodeId image, const NodeMap& p,
                                          const std::string& prefix) {
  std::array<Tape::NodeId, 5> levels{};
  Tape::NodeId cur = image;
  for (int i = 1; i <= 5; ++i) {
    const std::string block = level_name(prefix, i);
    cur = t.relu(conv_layer(t, cur, p, block + ".conv1"));
    cur = t.relu(conv_layer(t, cur, p, block + ".conv2", i == 1 ? 1 : 2));
    levels[static_cast<size_t>(i - 1)] = cur;
  }
  return levels;
}

AsppNodes aspp_nodes_from(const NodeMap& p, const AsppConfig& cfg) {
  AsppNodes nodes;
  if (cfg.include_pointwise_branch) nodes.pointwise = {p.at("aspp.pw.w"), p.at("aspp.pw.b")};
  for (size_t j = 0; j < cfg.rates.size(); ++j) {
    const std::string name = "aspp.rate" + std::to_string(j);
    nodes.rate_convs.push_back({p.at(name + ".w"), p.at(name + ".b")});
  }
  if (cfg.include_image_pool_branch) nodes.image_pool = {p.at("aspp.pool.w"), p.at("aspp.pool.b")};
  nodes.fuse = {p.at("aspp.fuse.w"), p.at("aspp.fuse.b")};
  return nodes;
}

void record_gate(std::array<std::vector<std::pair<double, double>>, 5>& slot, int level,
                 const Tape& t, Tape::NodeId g1, Tape::NodeId g2) {
  const Tensor& a = t.value(g1);
  const Tensor& b = t.value(g2);
  auto& dst = slot[static_cast<size_t>(level - 1)];
  dst.clear();
  for (int in = 0; in < a.n(); ++in) dst.push_back({a[in], b[in]});
}

struct GraphNodes {
  Tape::NodeId d1_logits = -1;
  Tape::NodeId sf_logits = -1;
  Tape::NodeId s1 = -1;
  Tape::NodeId sf = -1;
  Tape::NodeId f_cat = -1;
  std::array<Shape, 5> encoder_shapes{};
  GateTrace trace;
};

// Shared trunk: transitions, gates, dual-branch decoder on top of the five
// (possibly cross-modal fused) encoder features.
GraphNodes build_trunk(Tape& t, const std::array<Tape::NodeId, 5>& enc, const ModelConfig& cfg,
                       const NodeMap& p, GateTrace trace) {
  GraphNodes out;
  out.trace = std::move(trace);
  for (int i = 0; i < 5; ++i) {
    out.encoder_shapes[static_cast<size_t>(i)] = t.value(enc[static_cast<size_t>(i)]).shape();
  }

  // Transition layers: 3x3 conv to 32 channels; level 5 via Fold-ASPP when
  // configured.
  std::array<Tape::NodeId, 5> trans{};
  for (int i = 1; i <= 4; ++i) {
    trans[static_cast<size_t>(i - 1)] = conv_layer(t, enc[static_cast<size_t>(i - 1)], p,
                                                   level_name("trans", i));
  }
  if (cfg.aspp) {
    trans[4] = aspp_forward(t, enc[4], *cfg.aspp, aspp_nodes_from(p, *cfg.aspp));
  } else {
    trans[4] = conv_layer(t, enc[4], p, "trans5");
  }

  // Gate context: per-level encoder features for v1, the all-level aggregate
  // at level-3 resolution for v2.
  Tape::NodeId agg = -1;
  if (cfg.gate_version == GateVersion::v2) {
    const Tensor& e3 = t.value(enc[2]);
    agg = aggregate_encoder(t, {enc[0], enc[1], enc[2], enc[3], enc[4]}, p.at("gateagg.w"),
                            p.at("gateagg.b"), e3.h(), e3.w());
  }

  auto gate_at = [&](int level, Tape::NodeId partner) -> GatePair {
    const Tape::NodeId context =
        cfg.gate_version == GateVersion::v2 ? agg : enc[static_cast<size_t>(level - 1)];
    const std::string name = level_name("gate", level);
    GatePair g = gate_values(t, context, partner, p.at(name + ".w"), p.at(name + ".b"));
    record_gate(out.trace.levels, level, t, g.g1, g.g2);
    return g;
  };

  // FPN branch, top-down.
  std::array<Tape::NodeId, 5> dec{};
  std::array<GatePair, 5> gates{};
  const bool gated = cfg.gate_version != GateVersion::none;
  {
    Tape::NodeId top = trans[4];
    if (gated) {
      gates[4] = gate_at(5, trans[4]);
      top = t.scale_channels(trans[4], gates[4].g1);
    }
    dec[4] = conv_layer(t, top, p, "dec5");
  }
  for (int i = 4; i >= 1; --i) {
    const Tape::NodeId ti = trans[static_cast<size_t>(i - 1)];
    Tape::NodeId gated_t = ti;
    if (gated) {
      gates[static_cast<size_t>(i - 1)] = gate_at(i, dec[static_cast<size_t>(i)]);
      gated_t = t.scale_channels(ti, gates[static_cast<size_t>(i - 1)].g1);
    }
    const Tensor& ti_v = t.value(ti);
    const Tape::NodeId up = t.bilinear_upsample(dec[static_cast<size_t>(i)], ti_v.h(), ti_v.w());
    dec[static_cast<size_t>(i - 1)] = conv_layer(t, t.add(gated_t, up), p, level_name("dec", i));
  }
  out.d1_logits = dec[0];
  out.s1 = t.sigmoid(out.d1_logits);

  if (cfg.parallel_branch) {
    const Tensor& d1v = t.value(out.d1_logits);
    std::vector<Tape::NodeId> cat_parts{out.d1_logits};
    for (int i = 1; i <= 5; ++i) {
      Tape::NodeId gt = trans[static_cast<size_t>(i - 1)];
      if (gated) gt = t.scale_channels(gt, gates[static_cast<size_t>(i - 1)].g2);
      cat_parts.push_back(t.bilinear_upsample(gt, d1v.h(), d1v.w()));
    }
    out.f_cat = t.concat_channels(cat_parts);
    const Tape::NodeId fused = conv_layer(t, out.f_cat, p, "fuse");
    out.sf_logits = t.add(fused, out.d1_logits);
    out.sf = t.sigmoid(out.sf_logits);
  } else {
    out.sf_logits = out.d1_logits;
    out.sf = out.s1;
  }
  return out;
}

void check_image(const Tensor& image, int want_c, const char* what) {
  require(image.c() == want_c, std::string(what) + " must have " + std::to_string(want_c) +
                                   " channels, got " + std::to_string(image.c()));
  require(image.h() % 16 == 0 && image.w() % 16 == 0,
          std::string(what) + " spatial dims must be multiples of 16, got " +
              std::to_string(image.h()) + "x" + std::to_string(image.w()));
}

GraphNodes build_graph(Tape& t, Tape::NodeId image, Tape::NodeId depth, const ModelConfig& cfg,
                       const NodeMap& p) {
  GateTrace trace;
  if (cfg.stream == StreamMode::single) {
    return build_trunk(t, encode_stream(t, image, p, "enc"), cfg, p, std::move(trace));
  }
  const std::array<Tape::NodeId, 5> e_rgb = encode_stream(t, image, p, "enc");
  const std::array<Tape::NodeId, 5> e_d = encode_stream(t, depth, p, "encd");
  std::array<Tape::NodeId, 5> fused{};
  for (int i = 1; i <= 5; ++i) {
    const size_t idx = static_cast<size_t>(i - 1);
    const CrossModalOut cm = cross_modal_gate(
        t, e_rgb[idx], e_d[idx], p.at(level_name("xgate", i) + ".w"),
        p.at(level_name("xgate", i) + ".b"), p.at(level_name("xfuse_rgb", i) + ".w"),
        p.at(level_name("xfuse_rgb", i) + ".b"), p.at(level_name("xfuse_d", i) + ".w"),
        p.at(level_name("xfuse_d", i) + ".b"));
    record_gate(trace.cross_modal, i, t, cm.g_rgb, cm.g_d);
    fused[idx] = cm.fused;
  }
  return build_trunk(t, fused, cfg, p, std::move(trace));
}

GraphNodes run_forward(Tape& t, const Tensor& image, const Tensor* depth, const ModelConfig& cfg,
                       const ModelParams& params, bool with_grads) {
  validate_params(cfg, params);
  check_image(image, 3, "input image");
  Tape::NodeId depth_id = -1;
  if (cfg.stream == StreamMode::two) {
    require(depth != nullptr, "two-stream forward requires a depth input");
    check_image(*depth, 1, "depth input");
    require(depth->n() == image.n() && depth->h() == image.h() && depth->w() == image.w(),
            "depth resolution " + to_string(depth->shape()) + " does not match image " +
                to_string(image.shape()));
  } else {
    require(depth == nullptr, "single-stream forward does not take a depth input");
  }
  const NodeMap p = param_leaves(t, params, with_grads);
  const Tape::NodeId image_id = t.leaf(image);
  if (cfg.stream == StreamMode::two) depth_id = t.leaf(*depth);
  return build_graph(t, image_id, depth_id, cfg, p);
}

}  // namespace

Prediction forward(const Tensor& image, const ModelConfig& cfg, const ModelParams& params) {
  require(cfg.stream == StreamMode::single, "forward: config is two-stream; use forward_two_stream");
  Tape t;
  GraphNodes g = run_forward(t, image, nullptr, cfg, params, false);
  return Prediction{t.value(g.s1), t.value(g.sf), std::move(g.trace)};
}

Prediction forward_two_stream(const Tensor& rgb, const Tensor& depth, const ModelConfig& cfg,
                              const ModelParams& params) {
  require(cfg.stream == StreamMode::two, "forward_two_stream: config is single-stream");
  Tape t;
  GraphNodes g = run_forward(t, rgb, &depth, cfg, params, false);
  return Prediction{t.value(g.s1), t.value(g.sf), std::move(g.trace)};
}

ForwardDebug forward_debug(const Tensor& image, const ModelConfig& cfg,
                           const ModelParams& params) {
  Tape t;
  GraphNodes g = run_forward(t, image, nullptr, cfg, params, false);
  ForwardDebug dbg;
  dbg.pred = Prediction{t.value(g.s1), t.value(g.sf), std::move(g.trace)};
  dbg.d1_logits = t.value(g.d1_logits);
  dbg.sf_logits = t.value(g.sf_logits);
  if (g.f_cat >= 0) dbg.f_cat = t.value(g.f_cat);
  dbg.encoder_shapes = g.encoder_shapes;
  return dbg;
}

double loss_value(const Tensor& s1_logits, const Tensor& sf_logits, const Tensor& gt) {
  Tape t;
  const Tape::NodeId gt_id = t.leaf(gt);
  const Tape::NodeId a = t.seg_loss_term(t.leaf(s1_logits), gt_id);
  const Tape::NodeId b = t.seg_loss_term(t.leaf(sf_logits), gt_id);
  return t.value(t.add(a, b))[0];
}

namespace {

struct TapedLoss {
  Tape tape;
  NodeMap param_ids;
  Tape::NodeId loss = -1;
};

void build_loss(TapedLoss& tl, const ModelConfig& cfg, const ModelParams& params,
                const Tensor& images, const Tensor& gts, const Tensor* depth, bool with_grads) {
  require(gts.n() == images.n() && gts.c() == 1 && gts.h() == images.h() && gts.w() == images.w(),
          "ground truth shape " + to_string(gts.shape()) + " does not match images " +
              to_string(images.shape()));
  Tape& t = tl.tape;
  tl.param_ids = NodeMap();
  {
    validate_params(cfg, params);
    check_image(images, 3, "input image");
    for (const auto& [name, tensor] : params.tensors) {
      tl.param_ids.emplace(name, t.leaf(tensor, with_grads));
    }
  }
  const Tape::NodeId image_id = t.leaf(images);
  Tape::NodeId depth_id = -1;
  if (cfg.stream == StreamMode::two) {
    require(depth != nullptr, "two-stream training requires a depth input");
    depth_id = t.leaf(*depth);
  }
  const GraphNodes g = build_graph(t, image_id, depth_id, cfg, tl.param_ids);
  const Tape::NodeId gt_id = t.leaf(gts);
  tl.loss = t.add(t.seg_loss_term(g.d1_logits, gt_id), t.seg_loss_term(g.sf_logits, gt_id));
}

}  // namespace

double train_step(const ModelConfig& cfg, ModelParams& params, const Tensor& images,
                  const Tensor& gts, AdamState& state, double lr, const Tensor* depth) {
  TapedLoss tl;
  build_loss(tl, cfg, params, images, gts, depth, true);
  const double loss = tl.tape.value(tl.loss)[0];
  if (!std::isfinite(loss)) {
    throw std::runtime_error("train_step: non-finite loss " + std::to_string(loss));
  }
  tl.tape.backward(tl.loss);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [name, tensor] : params.tensors) {
    const Tensor g = tl.tape.grad(tl.param_ids.at(name));
    Tensor& m = state.m.try_emplace(name, Tensor(tensor.shape())).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(tensor.shape())).first->second;
    for (long long i = 0; i < tensor.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      tensor[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
    }
  }
  return loss;
}

LossGrads compute_loss_grads(const ModelConfig& cfg, const ModelParams& params,
                             const Tensor& images, const Tensor& gts, const Tensor* depth) {
  TapedLoss tl;
  build_loss(tl, cfg, params, images, gts, depth, true);
  tl.tape.backward(tl.loss);
  LossGrads out;
  out.loss = tl.tape.value(tl.loss)[0];
  for (const auto& [name, id] : tl.param_ids) {
    out.grads.emplace(name, tl.tape.grad(id));
  }
  return out;
}

double model_grad_check(const ModelConfig& cfg, unsigned long long seed, int samples,
                        int input_hw) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };

  ModelParams params = init_params(cfg, seed);
  Tensor image(Shape{1, 3, input_hw, input_hw});
  for (long long i = 0; i < image.size(); ++i) image[i] = uniform(0.0, 1.0);
  Tensor gt(Shape{1, 1, input_hw, input_hw});
  for (long long i = 0; i < gt.size(); ++i) gt[i] = (rng() & 1) ? 1.0 : 0.0;
  Tensor depth(Shape{1, 1, input_hw, input_hw});
  for (long long i = 0; i < depth.size(); ++i) depth[i] = uniform(0.0, 1.0);
  const Tensor* depth_ptr = cfg.stream == StreamMode::two ? &depth : nullptr;

  const LossGrads analytic = compute_loss_grads(cfg, params, image, gt, depth_ptr);

  std::vector<std::pair<std::string, long long>> cells;
  for (const auto& [name, tensor] : params.tensors) {
    for (long long i = 0; i < tensor.size(); ++i) cells.push_back({name, i});
  }
  auto eval = [&]() {
    TapedLoss tl;
    build_loss(tl, cfg, params, image, gt, depth_ptr, false);
    return tl.tape.value(tl.loss)[0];
  };

  // Below kNumericFloor the central difference is dominated by rounding noise
  // (ulps of the loss divided by 2*eps), so tiny gradients are compared
  // against the floor instead of their own magnitude.
  const double eps = 1e-5;
  constexpr double kNumericFloor = 1e-4;
  double max_err = 0.0;
  for (int s = 0; s < samples; ++s) {
    const auto& [name, idx] = cells[static_cast<size_t>(rng() % cells.size())];
    Tensor& tensor = params.at(name);
    const double saved = tensor[idx];
    tensor[idx] = saved + eps;
    const double lp = eval();
    tensor[idx] = saved - eps;
    const double lm = eval();
    tensor[idx] = saved;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double a = analytic.grads.at(name)[idx];
    max_err = std::max(max_err, std::fabs(a - numeric) / std::max(kNumericFloor, std::fabs(numeric)));
  }
  return max_err;
}

Tensor gather_samples(const Tensor& batch, const std::vector<int>& indices) {
  require(!indices.empty(), "gather_samples: empty index list");
  Tensor out(Shape{static_cast<int>(indices.size()), batch.c(), batch.h(), batch.w()});
  const long long per_sample = 1LL * batch.c() * batch.h() * batch.w();
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    require(idx >= 0 && idx < batch.n(), "gather_samples: index out of range");
    std::copy_n(batch.data() + idx * per_sample, per_sample,
                out.data() + static_cast<long long>(i) * per_sample);
  }
  return out;
}

ToyBatch make_toy_batch(unsigned long long seed, int count, int hw) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  auto uniform_int = [&rng](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<unsigned long long>(hi - lo + 1));
  };

  ToyBatch batch{Tensor(Shape{count, 3, hw, hw}), Tensor(Shape{count, 1, hw, hw}),
                 Tensor(Shape{count, 1, hw, hw})};
  for (int s = 0; s < count; ++s) {
    const int rh = uniform_int(hw / 4, hw / 2);
    const int rw = uniform_int(hw / 4, hw / 2);
    const int y0 = uniform_int(2, hw - rh - 2);
    const int x0 = uniform_int(2, hw - rw - 2);
    for (int y = 0; y < hw; ++y) {
      for (int x = 0; x < hw; ++x) {
        const bool fg = y >= y0 && y < y0 + rh && x >= x0 && x < x0 + rw;
        batch.masks.at(s, 0, y, x) = fg ? 1.0 : 0.0;
        batch.images.at(s, 0, y, x) = (fg ? 0.8 : 0.2) + uniform(-0.05, 0.05);
        batch.images.at(s, 1, y, x) = (fg ? 0.25 : 0.75) + uniform(-0.05, 0.05);
        batch.images.at(s, 2, y, x) = 0.5 + uniform(-0.1, 0.1);
        batch.depth.at(s, 0, y, x) = (fg ? 0.75 : 0.25) + uniform(-0.05, 0.05);
      }
    }
  }
  return batch;
}

}  // namespace gatenet
