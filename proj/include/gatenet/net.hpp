#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gatenet/foldconv.hpp"
#include "gatenet/gates.hpp"
#include "gatenet/tape.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

enum class GateVersion { none, v1, v2 };
enum class StreamMode { single, two };

struct ModelConfig {
  StreamMode stream = StreamMode::single;
  std::array<int, 5> encoder_channels{16, 24, 32, 48, 64};
  // Encoder strides are fixed at {1,2,4,8,16}.
  int transition_channels = 32;
  GateVersion gate_version = GateVersion::none;
  bool parallel_branch = false;
  std::optional<AsppConfig> aspp;
  int input_h = 352;
  int input_w = 352;
};

// The ablation ladder: m1 = FPN baseline, m2 = +parallel branch,
// m3 = +gates v1, m4 = +gates v2, m5 = +Fold-ASPP; "two-stream" is the m5
// configuration with a second encoder and cross-modal gates.
ModelConfig preset_config(const std::string& name, int input_h = 352, int input_w = 352);
std::string config_preset_name(const ModelConfig& cfg);

struct ModelParams {
  std::map<std::string, Tensor> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
};

std::map<std::string, Shape> expected_param_shapes(const ModelConfig& cfg);
// Throws when a name is missing, has the wrong shape, or is unexpected.
void validate_params(const ModelConfig& cfg, const ModelParams& params);
// Seeded Xavier-uniform weights, zero biases.
ModelParams init_params(const ModelConfig& cfg, unsigned long long seed);

struct Prediction {
  Tensor s1;  // sigmoid of the FPN-branch map D1, (n,1,h,w)
  Tensor sf;  // final map, (n,1,h,w)
  GateTrace trace;
};

Prediction forward(const Tensor& image, const ModelConfig& cfg, const ModelParams& params);
Prediction forward_two_stream(const Tensor& rgb, const Tensor& depth, const ModelConfig& cfg,
                              const ModelParams& params);

// Forward plus the tensors structural tests need to inspect.
struct ForwardDebug {
  Prediction pred;
  Tensor d1_logits;
  Tensor sf_logits;
  std::optional<Tensor> f_cat;
  std::array<Shape, 5> encoder_shapes{};
};
ForwardDebug forward_debug(const Tensor& image, const ModelConfig& cfg, const ModelParams& params);

// L = term(s1_logits) + term(sf_logits) with
// term(p) = mean BCE(sigmoid(p), gt) + (1 - softIoU(sigmoid(p), gt)).
double loss_value(const Tensor& s1_logits, const Tensor& sf_logits, const Tensor& gt);

struct AdamState {
  long long step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// One forward/backward/update pass (Adam, beta1 0.9, beta2 0.999, eps 1e-8).
// depth may be null for single-stream configs. Returns the loss.
double train_step(const ModelConfig& cfg, ModelParams& params, const Tensor& images,
                  const Tensor& gts, AdamState& state, double lr = 1e-4,
                  const Tensor* depth = nullptr);

struct LossGrads {
  double loss = 0.0;
  std::map<std::string, Tensor> grads;
};
LossGrads compute_loss_grads(const ModelConfig& cfg, const ModelParams& params,
                             const Tensor& images, const Tensor& gts,
                             const Tensor* depth = nullptr);

// Central-difference check of the full model loss gradient on `samples`
// randomly chosen parameters; returns the max relative error. Numeric
// gradients below the difference-quotient noise floor are compared against
// the floor rather than their own magnitude.
double model_grad_check(const ModelConfig& cfg, unsigned long long seed, int samples,
                        int input_hw);

// Deterministic synthetic rectangle dataset for the toy trainer.
struct ToyBatch {
  Tensor images;  // (count,3,hw,hw)
  Tensor masks;   // (count,1,hw,hw), values in {0,1}
  Tensor depth;   // (count,1,hw,hw)
};
ToyBatch make_toy_batch(unsigned long long seed, int count = 4, int hw = 64);

// Mini-batch assembled from the given sample indices of a batched tensor.
Tensor gather_samples(const Tensor& batch, const std::vector<int>& indices);

}  // namespace gatenet
