#pragma once

#include <string>
#include <vector>

#include "gatenet/ops.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

// Recorded computation graph for reverse-mode differentiation. Nodes are
// appended in execution order, so every node's inputs precede it; replaying
// the recorded ops reproduces the stored outputs bit for bit.
class Tape {
 public:
  using NodeId = int;

  enum class Op {
    leaf,
    conv2d,
    bilinear_resize,
    global_avg_pool,
    add,
    mul,
    sigmoid,
    relu,
    scale_channels,
    concat_channels,
    slice_channels,
    fold,
    unfold,
    sum,
    seg_loss_term,
  };

  NodeId leaf(Tensor value, bool requires_grad = false);

  // bias is a (1,outC,1,1) leaf so it can carry gradients.
  NodeId conv2d(NodeId x, NodeId w, NodeId b, const ConvSpec& spec);
  NodeId bilinear_resize(NodeId x, int out_h, int out_w);
  NodeId bilinear_upsample(NodeId x, int out_h, int out_w);
  NodeId global_avg_pool(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId x);
  NodeId relu(NodeId x);
  NodeId scale_channels(NodeId x, NodeId gate);
  NodeId concat_channels(const std::vector<NodeId>& parts);
  NodeId slice_channels(NodeId x, int from, int count);
  NodeId fold(NodeId x);
  NodeId unfold(NodeId x, int orig_h, int orig_w);
  // Sum of all entries as a (1,1,1,1) scalar.
  NodeId sum(NodeId x);
  // mean BCE(sigmoid(logits), gt) + (1 - soft IoU with +1 smoothing); scalar.
  // gt must hold values in [0,1].
  NodeId seg_loss_term(NodeId logits, NodeId gt);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Reverse accumulation from a scalar loss node. Gradients of earlier runs
  // are discarded.
  void backward(NodeId loss);
  // Gradient of the last backward() w.r.t. node id; zeros when the node is
  // unreachable from the loss.
  Tensor grad(NodeId id) const;

  // Recomputes every non-leaf node from its inputs and compares bit-for-bit.
  bool replay_matches() const;

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Tensor value;
    ConvSpec conv;
    int i0 = 0;  // out_h / slice from / orig_h
    int i1 = 0;  // out_w / slice count / orig_w
    bool requires_grad = false;
  };

  NodeId push(Node n);
  Tensor compute(const Node& n) const;
  bool any_input_grad(const std::vector<NodeId>& ids) const;
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

// Max relative error between analytic and central-difference gradients for one
// op on seeded random inputs: max over parameters of
// |analytic - numeric| / max(1e-8, |numeric|).
double grad_check(const std::string& op_name, unsigned long long seed);
std::vector<std::string> grad_check_op_names();

}  // namespace gatenet
