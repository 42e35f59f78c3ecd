#include "gatenet/selfcheck.hpp"

#include <cmath>
#include <cstring>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "gatenet/foldconv.hpp"
#include "gatenet/metrics.hpp"
#include "gatenet/net.hpp"
#include "gatenet/ops.hpp"
#include "gatenet/ref_ops.hpp"
#include "gatenet/tape.hpp"
#include "gatenet/weights_io.hpp"

namespace gatenet {
namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

Tensor random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (long long i = 0; i < t.size(); ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

GrayImage random_pred(std::mt19937_64& rng, int h, int w) {
  GrayImage img(h, w);
  for (long long i = 0; i < img.size(); ++i) {
    img.v[static_cast<size_t>(i)] = static_cast<double>(rng() % 256) / 255.0;
  }
  return img;
}

GrayImage random_mask(std::mt19937_64& rng, int h, int w) {
  GrayImage img(h, w);
  for (long long i = 0; i < img.size(); ++i) {
    img.v[static_cast<size_t>(i)] = (rng() & 1) ? 1.0 : 0.0;
  }
  return img;
}

class Checker {
 public:
  explicit Checker(std::ostream& out) : out_(out) {}

  void section(const std::string& name, bool ok, const std::string& detail = "") {
    out_ << (ok ? "ok  " : "FAIL") << "  " << name;
    if (!detail.empty()) out_ << "  (" << detail << ")";
    out_ << "\n";
    all_ok_ = all_ok_ && ok;
  }

  bool all_ok() const { return all_ok_; }

 private:
  std::ostream& out_;
  bool all_ok_ = true;
};

}  // namespace

bool run_selfcheck(bool quick, std::ostream& out) {
  Checker check(out);
  std::mt19937_64 rng(20240613);

  // Pointwise and pooling identities.
  {
    const Tensor zero(Shape{1, 2, 3, 3});
    const Tensor sig = sigmoid(zero);
    bool ok = true;
    for (long long i = 0; i < sig.size(); ++i) ok = ok && sig[i] == 0.5;
    const Tensor x = random_tensor(Shape{2, 3, 4, 4}, rng);
    Tensor neg(x.shape());
    for (long long i = 0; i < x.size(); ++i) neg[i] = -x[i];
    const Tensor s = add(x, neg);
    for (long long i = 0; i < s.size(); ++i) ok = ok && s[i] == 0.0;
    const Tensor big = random_tensor(Shape{1, 1, 2, 2}, rng, -900.0, 900.0);
    const Tensor sb = sigmoid(big);
    for (long long i = 0; i < sb.size(); ++i) ok = ok && sb[i] > 0.0 && sb[i] < 1.0;
    check.section("pointwise identities", ok);
  }

  // Parallel kernels match the serial reference bit for bit.
  {
    const Tensor x = random_tensor(Shape{2, 3, 13, 11}, rng);
    const Tensor w = random_tensor(Shape{4, 3, 3, 3}, rng);
    const std::vector<double> b{0.1, -0.2, 0.3, 0.0};
    bool ok = true;
    for (const ConvSpec spec : {ConvSpec{1, 1, 1}, ConvSpec{2, 1, 1}, ConvSpec{1, 3, 3}}) {
      ok = ok && conv2d(x, w, b, spec).bit_equal(ref::conv2d(x, w, b, spec));
    }
    ok = ok && bilinear_resize(x, 26, 22).bit_equal(ref::bilinear_resize(x, 26, 22));
    ok = ok && global_avg_pool(x).bit_equal(ref::global_avg_pool(x));
    ok = ok && fold(x).bit_equal(ref::fold(x));
    check.section("parallel kernels match serial reference", ok);
  }

  // Fold/unfold round trips, even and odd sizes.
  {
    bool ok = true;
    const int reps = quick ? 10 : 50;
    for (int i = 0; i < reps; ++i) {
      const int h = 3 + static_cast<int>(rng() % 12);
      const int w = 3 + static_cast<int>(rng() % 12);
      const Tensor x = random_tensor(Shape{1, 1 + static_cast<int>(rng() % 3), h, w}, rng);
      ok = ok && unfold(fold(x), h, w).bit_equal(x);
    }
    check.section("fold/unfold round trip", ok);
  }

  // Receptive field cardinality: folded 3x3 covers 4x the plain atrous taps.
  {
    const auto folded = receptive_field(AsppConvKind::folded_atrous, 2, 3, {15, 15});
    const auto plain = receptive_field(AsppConvKind::plain_atrous, 4, 3, {15, 15});
    check.section("receptive field (folded 36 vs plain 9)",
                  folded.size() == 36 && plain.size() == 9);
  }

  // Gradient checks for every differentiable op.
  {
    double worst = 0.0;
    std::string worst_op;
    for (const std::string& op : grad_check_op_names()) {
      const double err = grad_check(op, 13u);
      if (err > worst) {
        worst = err;
        worst_op = op;
      }
    }
    std::ostringstream detail;
    detail << "max rel err " << worst << " at " << worst_op;
    check.section("gradient checks", worst <= 1e-5, detail.str());
  }

  // Metric identities on random pairs.
  {
    const int reps = quick ? 100 : 1000;
    bool ok = true;
    for (int i = 0; i < reps && ok; ++i) {
      const GrayImage pred = random_pred(rng, 16, 16);
      const GrayImage gt = random_mask(rng, 16, 16);
      const MetricReport r = evaluate_pair(pred, gt);
      ok = ok && std::fabs(r.dice - 2.0 * r.iou / (1.0 + r.iou)) <= 1e-12;
      ok = ok && r.f_max >= r.f_mean;
      ok = ok && mae(pred, gt) == mae(gt, pred);
      for (double v : {r.pa, r.f_max, r.f_mean, r.f_weighted, r.s_measure, r.e_measure, r.iou,
                       r.dice, r.ber, r.mae}) {
        ok = ok && v >= 0.0 && v <= 1.0;
      }
      GrayImage pred_c(pred.h, pred.w), gt_c(gt.h, gt.w);
      for (long long j = 0; j < pred.size(); ++j) {
        pred_c.v[static_cast<size_t>(j)] = 1.0 - pred.v[static_cast<size_t>(j)];
        gt_c.v[static_cast<size_t>(j)] = 1.0 - gt.v[static_cast<size_t>(j)];
      }
      const MetricReport rc = evaluate_pair(pred_c, gt_c);
      ok = ok && rc.ber == r.ber;
    }
    check.section("metric identities", ok);
  }

  // Dataset evaluation is worker-count independent.
  {
    std::vector<std::pair<GrayImage, GrayImage>> pairs;
    for (int i = 0; i < 6; ++i) {
      pairs.emplace_back(random_pred(rng, 24, 24), random_mask(rng, 24, 24));
    }
    const DatasetEval a = evaluate_dataset(pairs, 1);
    const DatasetEval b = evaluate_dataset(pairs, 8);
    bool ok = a.per_image.size() == b.per_image.size();
    auto same = [](double x, double y) {
      return std::memcmp(&x, &y, sizeof(double)) == 0;
    };
    ok = ok && same(a.aggregate.mae, b.aggregate.mae) && same(a.aggregate.f_max, b.aggregate.f_max) &&
         same(a.aggregate.s_measure, b.aggregate.s_measure) &&
         same(a.aggregate.e_measure, b.aggregate.e_measure);
    check.section("dataset evaluation determinism", ok);
  }

  // Weight container round trip (in memory).
  {
    const ModelConfig cfg = preset_config("m3", 64, 64);
    const ModelParams params = init_params(cfg, 7);
    std::stringstream buf1, buf2;
    save_weights(pack_model(cfg, params), buf1);
    const WeightContainer loaded = load_weights(buf1);
    save_weights(loaded, buf2);
    bool ok = buf1.str() == buf2.str();
    const auto [cfg2, params2] = unpack_model(loaded);
    ok = ok && config_to_json(cfg2) == config_to_json(cfg);
    for (const auto& [name, tensor] : params.tensors) {
      ok = ok && params2.at(name).bit_equal(tensor);
    }
    check.section("weight container round trip", ok);
  }

  // Model forward: determinism, output range, tape replay.
  {
    const ModelConfig cfg = preset_config("m5", 32, 32);
    const ModelParams params = init_params(cfg, 11);
    Tensor image = random_tensor(Shape{1, 3, 32, 32}, rng, 0.0, 1.0);
    const Prediction p1 = forward(image, cfg, params);
    const Prediction p2 = forward(image, cfg, params);
    bool ok = p1.sf.bit_equal(p2.sf) && p1.s1.bit_equal(p2.s1);
    for (long long i = 0; i < p1.sf.size(); ++i) {
      ok = ok && p1.sf[i] > 0.0 && p1.sf[i] < 1.0;
    }
    for (const auto& level : p1.trace.levels) {
      for (const auto& [g1, g2] : level) {
        ok = ok && g1 > 0.0 && g1 < 1.0 && g2 > 0.0 && g2 < 1.0;
      }
    }
    check.section("model forward determinism and range", ok);
  }

  // Full-model gradient check (small input).
  if (!quick) {
    const double err = model_grad_check(preset_config("m5", 32, 32), 3, 10, 32);
    std::ostringstream detail;
    detail << "max rel err " << err;
    check.section("full-model gradient check", err <= 1e-4, detail.str());
  }

  out << (check.all_ok() ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return check.all_ok();
}

}  // namespace gatenet
