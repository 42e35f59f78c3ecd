#include "gatenet/tape.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "gatenet/foldconv.hpp"

namespace gatenet {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace

void Tape::check_id(NodeId id) const {
  if (id < 0 || id >= node_count()) throw std::invalid_argument("Tape: invalid node id");
}

bool Tape::any_input_grad(const std::vector<NodeId>& ids) const {
  for (NodeId id : ids) {
    if (nodes_[static_cast<size_t>(id)].requires_grad) return true;
  }
  return false;
}

Tape::NodeId Tape::push(Node n) {
  for (NodeId id : n.inputs) check_id(id);
  if (n.op != Op::leaf) {
    n.requires_grad = any_input_grad(n.inputs);
    n.value = compute(n);
  }
  nodes_.push_back(std::move(n));
  return node_count() - 1;
}

Tensor Tape::compute(const Node& n) const {
  auto val = [&](int i) -> const Tensor& { return nodes_[static_cast<size_t>(n.inputs[i])].value; };
  switch (n.op) {
    case Op::leaf:
      return n.value;
    case Op::conv2d:
      return gatenet::conv2d(val(0), val(1), val(2).values(), n.conv);
    case Op::bilinear_resize:
      return gatenet::bilinear_resize(val(0), n.i0, n.i1);
    case Op::global_avg_pool:
      return gatenet::global_avg_pool(val(0));
    case Op::add:
      return gatenet::add(val(0), val(1));
    case Op::mul:
      return gatenet::mul(val(0), val(1));
    case Op::sigmoid:
      return gatenet::sigmoid(val(0));
    case Op::relu:
      return gatenet::relu(val(0));
    case Op::scale_channels:
      return gatenet::scale_channels(val(0), val(1));
    case Op::concat_channels: {
      std::vector<Tensor> parts;
      parts.reserve(n.inputs.size());
      for (size_t i = 0; i < n.inputs.size(); ++i) parts.push_back(val(static_cast<int>(i)));
      return gatenet::concat_channels(parts);
    }
    case Op::slice_channels:
      return gatenet::slice_channels(val(0), n.i0, n.i1);
    case Op::fold:
      return gatenet::fold(val(0));
    case Op::unfold:
      return gatenet::unfold(val(0), n.i0, n.i1);
    case Op::sum:
      return Tensor::scalar(reduce_sum(val(0)));
    case Op::seg_loss_term: {
      const Tensor& x = val(0);
      const Tensor& g = val(1);
      require(x.same_shape(g), "seg_loss_term: logits " + to_string(x.shape()) +
                                   " vs ground truth " + to_string(g.shape()));
      const long long total = x.size();
      double bce = 0.0, inter = 0.0, uni = 0.0;
      for (long long i = 0; i < total; ++i) {
        require(g[i] >= 0.0 && g[i] <= 1.0, "seg_loss_term: ground truth outside [0,1]");
        const double q = sigmoid_scalar(x[i]);
        bce += softplus(x[i]) - g[i] * x[i];
        inter += q * g[i];
        uni += q + g[i];
      }
      uni -= inter;
      const double soft_iou = (inter + 1.0) / (uni + 1.0);
      return Tensor::scalar(bce / static_cast<double>(total) + (1.0 - soft_iou));
    }
  }
  throw std::logic_error("Tape::compute: unknown op");
}

Tape::NodeId Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, const ConvSpec& spec) {
  check_id(x);
  check_id(w);
  check_id(b);
  const Tensor& bias = value(b);
  require(bias.n() == 1 && bias.c() == value(w).n() && bias.h() == 1 && bias.w() == 1,
          "Tape::conv2d: bias must be (1,outC,1,1), got " + to_string(bias.shape()));
  Node n;
  n.op = Op::conv2d;
  n.inputs = {x, w, b};
  n.conv = spec;
  return push(std::move(n));
}

Tape::NodeId Tape::bilinear_resize(NodeId x, int out_h, int out_w) {
  check_id(x);
  Node n;
  n.op = Op::bilinear_resize;
  n.inputs = {x};
  n.i0 = out_h;
  n.i1 = out_w;
  return push(std::move(n));
}

Tape::NodeId Tape::bilinear_upsample(NodeId x, int out_h, int out_w) {
  check_id(x);
  require(out_h >= value(x).h() && out_w >= value(x).w(),
          "Tape::bilinear_upsample: downsampling request");
  return bilinear_resize(x, out_h, out_w);
}

Tape::NodeId Tape::global_avg_pool(NodeId x) {
  check_id(x);
  Node n;
  n.op = Op::global_avg_pool;
  n.inputs = {x};
  return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::add;
  n.inputs = {a, b};
  return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::mul;
  n.inputs = {a, b};
  return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId x) {
  Node n;
  n.op = Op::sigmoid;
  n.inputs = {x};
  return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
  Node n;
  n.op = Op::relu;
  n.inputs = {x};
  return push(std::move(n));
}

Tape::NodeId Tape::scale_channels(NodeId x, NodeId gate) {
  Node n;
  n.op = Op::scale_channels;
  n.inputs = {x, gate};
  return push(std::move(n));
}

Tape::NodeId Tape::concat_channels(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "Tape::concat_channels: no parts");
  Node n;
  n.op = Op::concat_channels;
  n.inputs = parts;
  return push(std::move(n));
}

Tape::NodeId Tape::slice_channels(NodeId x, int from, int count) {
  Node n;
  n.op = Op::slice_channels;
  n.inputs = {x};
  n.i0 = from;
  n.i1 = count;
  return push(std::move(n));
}

Tape::NodeId Tape::fold(NodeId x) {
  check_id(x);
  Node n;
  n.op = Op::fold;
  n.inputs = {x};
  n.i0 = value(x).h();
  n.i1 = value(x).w();
  return push(std::move(n));
}

Tape::NodeId Tape::unfold(NodeId x, int orig_h, int orig_w) {
  Node n;
  n.op = Op::unfold;
  n.inputs = {x};
  n.i0 = orig_h;
  n.i1 = orig_w;
  return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId x) {
  Node n;
  n.op = Op::sum;
  n.inputs = {x};
  return push(std::move(n));
}

Tape::NodeId Tape::seg_loss_term(NodeId logits, NodeId gt) {
  Node n;
  n.op = Op::seg_loss_term;
  n.inputs = {logits, gt};
  return push(std::move(n));
}

void Tape::backward(NodeId loss) {
  check_id(loss);
  const Node& ln = nodes_[static_cast<size_t>(loss)];
  require(ln.value.shape() == Shape{1, 1, 1, 1},
          "Tape::backward: loss must be a (1,1,1,1) scalar, got " + to_string(ln.value.shape()));

  grads_.assign(nodes_.size(), Tensor{});
  has_grad_.assign(nodes_.size(), false);

  auto accumulate = [&](NodeId id, const Tensor& g) {
    const size_t i = static_cast<size_t>(id);
    if (!nodes_[i].requires_grad) return;
    if (!has_grad_[i]) {
      grads_[i] = g;
      has_grad_[i] = true;
      return;
    }
    Tensor& dst = grads_[i];
    const long long total = dst.size();
    for (long long j = 0; j < total; ++j) dst[j] += g[j];
  };

  if (!ln.requires_grad) return;
  grads_[static_cast<size_t>(loss)] = Tensor::scalar(1.0);
  has_grad_[static_cast<size_t>(loss)] = true;

  for (NodeId id = loss; id >= 0; --id) {
    const size_t i = static_cast<size_t>(id);
    const Node& n = nodes_[i];
    if (!has_grad_[i] || n.op == Op::leaf) continue;
    const Tensor& go = grads_[i];
    auto in_val = [&](int k) -> const Tensor& {
      return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(k)])].value;
    };
    auto in_needs = [&](int k) {
      return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(k)])].requires_grad;
    };

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::conv2d: {
        if (in_needs(0)) accumulate(n.inputs[0], conv2d_grad_input(go, in_val(1), in_val(0).shape(), n.conv));
        if (in_needs(1)) accumulate(n.inputs[1], conv2d_grad_weight(go, in_val(0), in_val(1).shape(), n.conv));
        if (in_needs(2)) {
          const std::vector<double> gb = conv2d_grad_bias(go);
          accumulate(n.inputs[2], Tensor(Shape{1, static_cast<int>(gb.size()), 1, 1}, gb));
        }
        break;
      }
      case Op::bilinear_resize:
        if (in_needs(0)) accumulate(n.inputs[0], bilinear_resize_grad_input(go, in_val(0).shape()));
        break;
      case Op::global_avg_pool:
        if (in_needs(0)) accumulate(n.inputs[0], global_avg_pool_grad_input(go, in_val(0).shape()));
        break;
      case Op::add:
        if (in_needs(0)) accumulate(n.inputs[0], go);
        if (in_needs(1)) accumulate(n.inputs[1], go);
        break;
      case Op::mul:
        if (in_needs(0)) accumulate(n.inputs[0], gatenet::mul(go, in_val(1)));
        if (in_needs(1)) accumulate(n.inputs[1], gatenet::mul(go, in_val(0)));
        break;
      case Op::sigmoid: {
        if (!in_needs(0)) break;
        Tensor g(n.value.shape());
        const long long total = g.size();
        for (long long j = 0; j < total; ++j) g[j] = go[j] * n.value[j] * (1.0 - n.value[j]);
        accumulate(n.inputs[0], g);
        break;
      }
      case Op::relu: {
        if (!in_needs(0)) break;
        const Tensor& x = in_val(0);
        Tensor g(x.shape());
        const long long total = g.size();
        for (long long j = 0; j < total; ++j) g[j] = x[j] > 0.0 ? go[j] : 0.0;
        accumulate(n.inputs[0], g);
        break;
      }
      case Op::scale_channels: {
        const Tensor& x = in_val(0);
        const Tensor& gate = in_val(1);
        const long long per_sample = 1LL * x.c() * x.h() * x.w();
        if (in_needs(0)) {
          Tensor gx(x.shape());
          const long long total = gx.size();
          for (long long j = 0; j < total; ++j) gx[j] = go[j] * gate[j / per_sample];
          accumulate(n.inputs[0], gx);
        }
        if (in_needs(1)) {
          Tensor gg(gate.shape());
          for (int in = 0; in < x.n(); ++in) {
            double acc = 0.0;
            const long long base = in * per_sample;
            for (long long j = 0; j < per_sample; ++j) acc += go[base + j] * x[base + j];
            gg[in] = acc;
          }
          accumulate(n.inputs[1], gg);
        }
        break;
      }
      case Op::concat_channels: {
        int c_off = 0;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& part = in_val(static_cast<int>(k));
          if (in_needs(static_cast<int>(k))) {
            accumulate(n.inputs[k], gatenet::slice_channels(go, c_off, part.c()));
          }
          c_off += part.c();
        }
        break;
      }
      case Op::slice_channels: {
        if (!in_needs(0)) break;
        const Tensor& x = in_val(0);
        Tensor gx(x.shape());
        const long long plane = 1LL * x.h() * x.w();
        for (int in = 0; in < x.n(); ++in) {
          std::copy_n(go.data() + go.index(in, 0, 0, 0), n.i1 * plane,
                      gx.data() + gx.index(in, n.i0, 0, 0));
        }
        accumulate(n.inputs[0], gx);
        break;
      }
      case Op::fold:
        if (in_needs(0)) accumulate(n.inputs[0], gatenet::unfold(go, n.i0, n.i1));
        break;
      case Op::unfold:
        if (in_needs(0)) accumulate(n.inputs[0], gatenet::fold(go));
        break;
      case Op::sum: {
        if (!in_needs(0)) break;
        accumulate(n.inputs[0], Tensor(in_val(0).shape(), go[0]));
        break;
      }
      case Op::seg_loss_term: {
        if (!in_needs(0)) break;
        const Tensor& x = in_val(0);
        const Tensor& g = in_val(1);
        const long long total = x.size();
        double inter = 0.0, uni = 0.0;
        for (long long j = 0; j < total; ++j) {
          const double q = sigmoid_scalar(x[j]);
          inter += q * g[j];
          uni += q + g[j];
        }
        uni -= inter;
        const double denom = (uni + 1.0) * (uni + 1.0);
        Tensor gx(x.shape());
        const double inv_n = 1.0 / static_cast<double>(total);
        for (long long j = 0; j < total; ++j) {
          const double q = sigmoid_scalar(x[j]);
          const double d_bce = (q - g[j]) * inv_n;
          const double d_j_dq = (g[j] * (uni + 1.0) - (inter + 1.0) * (1.0 - g[j])) / denom;
          const double d_iou = -d_j_dq * q * (1.0 - q);
          gx[j] = go[0] * (d_bce + d_iou);
        }
        accumulate(n.inputs[0], gx);
        break;
      }
    }
  }
}

Tensor Tape::grad(NodeId id) const {
  check_id(id);
  const size_t i = static_cast<size_t>(id);
  if (i < has_grad_.size() && has_grad_[i]) return grads_[i];
  return Tensor(nodes_[i].value.shape());
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::leaf) continue;
    if (!compute(n).bit_equal(n.value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Gradient check harness.

namespace {

struct CheckCase {
  std::vector<Tensor> diff_inputs;
  std::vector<Tensor> const_inputs;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (long long i = 0; i < t.size(); ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

// Away-from-zero multiplier so loss gradients stay generic.
Tensor random_weighting(const Shape& s, std::mt19937_64& rng) {
  Tensor t(s);
  for (long long i = 0; i < t.size(); ++i) {
    const double mag = uniform(rng, 0.5, 1.5);
    t[i] = (rng() & 1) ? mag : -mag;
  }
  return t;
}

CheckCase make_case(const std::string& name, std::mt19937_64& rng) {
  CheckCase c;
  auto rt = [&](int n, int ch, int h, int w, double lo = -1.0, double hi = 1.0) {
    return random_tensor(Shape{n, ch, h, w}, rng, lo, hi);
  };
  if (name == "conv2d") {
    c.diff_inputs = {rt(2, 3, 5, 5), rt(4, 3, 3, 3), rt(1, 4, 1, 1)};
  } else if (name == "conv2d_strided") {
    c.diff_inputs = {rt(1, 2, 7, 7), rt(4, 2, 3, 3), rt(1, 4, 1, 1)};
  } else if (name == "bilinear_upsample") {
    c.diff_inputs = {rt(1, 2, 3, 3)};
  } else if (name == "bilinear_downsample") {
    c.diff_inputs = {rt(1, 2, 6, 6)};
  } else if (name == "global_avg_pool") {
    c.diff_inputs = {rt(2, 3, 4, 5)};
  } else if (name == "add" || name == "mul") {
    c.diff_inputs = {rt(2, 3, 4, 4), rt(2, 3, 4, 4)};
  } else if (name == "sigmoid") {
    c.diff_inputs = {rt(2, 3, 4, 4, -3.0, 3.0)};
  } else if (name == "relu") {
    Tensor x = rt(2, 3, 4, 4);
    for (long long i = 0; i < x.size(); ++i) x[i] += x[i] < 0.0 ? -0.05 : 0.05;
    c.diff_inputs = {std::move(x)};
  } else if (name == "scale_channels") {
    c.diff_inputs = {rt(2, 3, 4, 4), rt(2, 1, 1, 1)};
  } else if (name == "concat_channels") {
    c.diff_inputs = {rt(1, 2, 4, 4), rt(1, 3, 4, 4), rt(1, 1, 4, 4)};
  } else if (name == "slice_channels") {
    c.diff_inputs = {rt(1, 5, 3, 3)};
  } else if (name == "fold") {
    c.diff_inputs = {rt(1, 3, 6, 6)};
  } else if (name == "fold_odd") {
    c.diff_inputs = {rt(1, 2, 5, 5)};
  } else if (name == "unfold") {
    c.diff_inputs = {rt(1, 8, 3, 3)};
  } else if (name == "folded_atrous_conv") {
    c.diff_inputs = {rt(1, 2, 8, 8), rt(12, 8, 3, 3), rt(1, 12, 1, 1)};
  } else if (name == "seg_loss_term") {
    c.diff_inputs = {rt(2, 1, 6, 6, -2.0, 2.0)};
    Tensor gt(Shape{2, 1, 6, 6});
    for (long long i = 0; i < gt.size(); ++i) gt[i] = (rng() & 1) ? 1.0 : 0.0;
    c.const_inputs = {std::move(gt)};
  } else if (name == "sum") {
    c.diff_inputs = {rt(2, 3, 4, 4)};
  } else {
    throw std::invalid_argument("grad_check: unknown op '" + name + "'");
  }
  return c;
}

Tape::NodeId build_graph(Tape& t, const std::string& name, const std::vector<Tape::NodeId>& d,
                         const std::vector<Tape::NodeId>& k, std::mt19937_64& weighting_rng) {
  Tape::NodeId out = -1;
  if (name == "conv2d") {
    out = t.conv2d(d[0], d[1], d[2], ConvSpec{1, 1, 1});
  } else if (name == "conv2d_strided") {
    out = t.conv2d(d[0], d[1], d[2], ConvSpec{2, 2, 2});
  } else if (name == "bilinear_upsample") {
    out = t.bilinear_resize(d[0], 6, 6);
  } else if (name == "bilinear_downsample") {
    out = t.bilinear_resize(d[0], 3, 3);
  } else if (name == "global_avg_pool") {
    out = t.global_avg_pool(d[0]);
  } else if (name == "add") {
    out = t.add(d[0], d[1]);
  } else if (name == "mul") {
    out = t.mul(d[0], d[1]);
  } else if (name == "sigmoid") {
    out = t.sigmoid(d[0]);
  } else if (name == "relu") {
    out = t.relu(d[0]);
  } else if (name == "scale_channels") {
    out = t.scale_channels(d[0], d[1]);
  } else if (name == "concat_channels") {
    out = t.concat_channels({d[0], d[1], d[2]});
  } else if (name == "slice_channels") {
    out = t.slice_channels(d[0], 1, 3);
  } else if (name == "fold" || name == "fold_odd") {
    out = t.fold(d[0]);
  } else if (name == "unfold") {
    out = t.unfold(d[0], 6, 6);
  } else if (name == "folded_atrous_conv") {
    const Tape::NodeId folded = t.fold(d[0]);
    const Tape::NodeId conv = t.conv2d(folded, d[1], d[2], ConvSpec{1, 2, 2});
    out = t.unfold(conv, 8, 8);
  } else if (name == "seg_loss_term") {
    return t.seg_loss_term(d[0], k[0]);
  } else if (name == "sum") {
    return t.sum(d[0]);
  } else {
    throw std::invalid_argument("grad_check: unknown op '" + name + "'");
  }
  const Tape::NodeId r = t.leaf(random_weighting(t.value(out).shape(), weighting_rng));
  return t.sum(t.mul(out, r));
}

double eval_loss(const std::string& name, const std::vector<Tensor>& diff,
                 const std::vector<Tensor>& cons, unsigned long long weighting_seed) {
  Tape t;
  std::vector<Tape::NodeId> d, k;
  for (const Tensor& x : diff) d.push_back(t.leaf(x));
  for (const Tensor& x : cons) k.push_back(t.leaf(x));
  std::mt19937_64 wr(weighting_seed);
  return t.value(build_graph(t, name, d, k, wr))[0];
}

}  // namespace

double grad_check(const std::string& op_name, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  CheckCase c = make_case(op_name, rng);
  const unsigned long long weighting_seed = seed ^ 0x9e3779b97f4a7c15ULL;

  Tape t;
  std::vector<Tape::NodeId> d, k;
  for (const Tensor& x : c.diff_inputs) d.push_back(t.leaf(x, true));
  for (const Tensor& x : c.const_inputs) k.push_back(t.leaf(x));
  std::mt19937_64 wr(weighting_seed);
  const Tape::NodeId loss = build_graph(t, op_name, d, k, wr);
  t.backward(loss);

  const double eps = 1e-6;
  double max_err = 0.0;
  for (size_t di = 0; di < c.diff_inputs.size(); ++di) {
    const Tensor analytic = t.grad(d[di]);
    for (long long j = 0; j < c.diff_inputs[di].size(); ++j) {
      const double saved = c.diff_inputs[di][j];
      c.diff_inputs[di][j] = saved + eps;
      const double lp = eval_loss(op_name, c.diff_inputs, c.const_inputs, weighting_seed);
      c.diff_inputs[di][j] = saved - eps;
      const double lm = eval_loss(op_name, c.diff_inputs, c.const_inputs, weighting_seed);
      c.diff_inputs[di][j] = saved;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double err = std::fabs(analytic[j] - numeric) / std::max(1e-8, std::fabs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

std::vector<std::string> grad_check_op_names() {
  return {"conv2d",       "conv2d_strided", "bilinear_upsample", "bilinear_downsample",
          "global_avg_pool", "add",         "mul",               "sigmoid",
          "relu",         "scale_channels", "concat_channels",   "slice_channels",
          "fold",         "fold_odd",       "unfold",            "folded_atrous_conv",
          "seg_loss_term", "sum"};
}

}  // namespace gatenet
