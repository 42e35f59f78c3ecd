#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gatenet/gates.hpp"
#include "gatenet/ops.hpp"
#include "test_helpers.hpp"

using namespace gatenet;

namespace {

Tensor gate_conv_w(int in_c) { return Tensor(Shape{2, in_c, 3, 3}); }

}  // namespace

TEST_CASE("zero gate params give (0.5, 0.5) exactly") {
  std::mt19937_64 rng(1);
  const Tensor context = testutil::random_tensor(Shape{2, 4, 6, 6}, rng);
  const Tensor partner = testutil::random_tensor(Shape{2, 3, 6, 6}, rng);
  const auto [g1, g2] = gate_values_eager(context, partner, gate_conv_w(7), Tensor(Shape{1, 2, 1, 1}));
  for (int n = 0; n < 2; ++n) {
    CHECK(g1[n] == 0.5);
    CHECK(g2[n] == 0.5);
  }
}

TEST_CASE("zero weights with log-odds biases hit closed-form values") {
  const Tensor context(Shape{1, 2, 4, 4}, 0.3);
  const Tensor partner(Shape{1, 1, 4, 4}, -0.7);
  Tensor bias(Shape{1, 2, 1, 1});
  bias[0] = std::log(3.0);
  bias[1] = -std::log(3.0);
  const auto [g1, g2] = gate_values_eager(context, partner, gate_conv_w(3), bias);
  CHECK(g1[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(g2[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gate values stay strictly in (0,1) and partner is resized") {
  std::mt19937_64 rng(2);
  const Tensor context = testutil::random_tensor(Shape{3, 4, 8, 8}, rng, -3.0, 3.0);
  const Tensor partner = testutil::random_tensor(Shape{3, 2, 4, 4}, rng, -3.0, 3.0);
  const Tensor w = testutil::random_tensor(Shape{2, 6, 3, 3}, rng);
  const Tensor b = testutil::random_tensor(Shape{1, 2, 1, 1}, rng);
  const auto [g1, g2] = gate_values_eager(context, partner, w, b);
  for (int n = 0; n < 3; ++n) {
    CHECK(g1[n] > 0.0);
    CHECK(g1[n] < 1.0);
    CHECK(g2[n] > 0.0);
    CHECK(g2[n] < 1.0);
  }
}

TEST_CASE("gate conv must output two channels; batches must agree") {
  Tape t;
  const Tape::NodeId ctx = t.leaf(Tensor(Shape{1, 2, 4, 4}));
  const Tape::NodeId par = t.leaf(Tensor(Shape{1, 1, 4, 4}));
  const Tape::NodeId bad_w = t.leaf(Tensor(Shape{3, 3, 3, 3}));
  const Tape::NodeId b3 = t.leaf(Tensor(Shape{1, 3, 1, 1}));
  CHECK_THROWS_AS(gate_values(t, ctx, par, bad_w, b3), std::invalid_argument);
  const Tape::NodeId par_bad = t.leaf(Tensor(Shape{2, 1, 4, 4}));
  const Tape::NodeId w = t.leaf(gate_conv_w(3));
  const Tape::NodeId b = t.leaf(Tensor(Shape{1, 2, 1, 1}));
  CHECK_THROWS_AS(gate_values(t, ctx, par_bad, w, b), std::invalid_argument);
}

TEST_CASE("aggregate_encoder resizes, concatenates, and projects to 32 channels") {
  std::mt19937_64 rng(3);
  std::vector<Tensor> levels;
  const int chans[5] = {16, 24, 32, 48, 64};
  const int sides[5] = {32, 16, 8, 4, 2};
  int total_c = 0;
  for (int i = 0; i < 5; ++i) {
    levels.push_back(testutil::random_tensor(Shape{1, chans[i], sides[i], sides[i]}, rng));
    total_c += chans[i];
  }
  const Tensor w = testutil::random_tensor(Shape{32, total_c, 3, 3}, rng, -0.1, 0.1);
  const Tensor b(Shape{1, 32, 1, 1});
  const Tensor agg = aggregate_encoder_eager(levels, w, b, 8, 8);
  CHECK(agg.shape() == Shape{1, 32, 8, 8});
  CHECK(agg.bit_equal(aggregate_encoder_eager(levels, w, b, 8, 8)));

  const Tensor zero_agg = aggregate_encoder_eager(levels, Tensor(Shape{32, total_c, 3, 3}), b, 8, 8);
  for (long long i = 0; i < zero_agg.size(); ++i) CHECK(zero_agg[i] == 0.0);

  levels.pop_back();
  CHECK_THROWS_AS(aggregate_encoder_eager(levels, w, b, 8, 8), std::invalid_argument);
}

TEST_CASE("v1 equals v2 when all levels are identical and aggregation averages") {
  std::mt19937_64 rng(4);
  const int c = 32;
  const Tensor e = testutil::random_tensor(Shape{1, c, 8, 8}, rng);
  const Tensor partner = testutil::random_tensor(Shape{1, c, 8, 8}, rng);
  const Tensor gate_w = testutil::random_tensor(Shape{2, 2 * c, 3, 3}, rng);
  const Tensor gate_b = testutil::random_tensor(Shape{1, 2, 1, 1}, rng);

  // Averaging projection: center tap 1/5 from each level's copy of channel oc.
  Tensor agg_w(Shape{c, 5 * c, 3, 3});
  for (int lvl = 0; lvl < 5; ++lvl) {
    for (int oc = 0; oc < c; ++oc) {
      agg_w.at(oc, lvl * c + oc, 1, 1) = 0.2;
    }
  }
  const Tensor agg =
      aggregate_encoder_eager({e, e, e, e, e}, agg_w, Tensor(Shape{1, c, 1, 1}), 8, 8);

  const auto [v1_g1, v1_g2] = gate_values_eager(e, partner, gate_w, gate_b);
  const auto [v2_g1, v2_g2] = gate_values_eager(agg, partner, gate_w, gate_b);
  CHECK(std::fabs(v1_g1[0] - v2_g1[0]) <= 1e-12);
  CHECK(std::fabs(v1_g2[0] - v2_g2[0]) <= 1e-12);
}

TEST_CASE("gated product scales linearly toward zero") {
  std::mt19937_64 rng(5);
  const Tensor x = testutil::random_tensor(Shape{1, 8, 6, 6}, rng);
  double norm1 = 0.0;
  for (long long i = 0; i < x.size(); ++i) norm1 += std::fabs(x[i]);
  for (const double g : {1.0, 0.5, 0.25, 0.0}) {
    const Tensor scaled = scale_channels(x, Tensor(Shape{1, 1, 1, 1}, g));
    double norm = 0.0;
    for (long long i = 0; i < scaled.size(); ++i) norm += std::fabs(scaled[i]);
    CHECK(norm == doctest::Approx(g * norm1).epsilon(1e-12));
  }
}

TEST_CASE("cross-modal gate: symmetry and saturation") {
  std::mt19937_64 rng(6);
  const int c = 6;
  const Tensor e = testutil::random_tensor(Shape{1, c, 8, 8}, rng);
  const Tensor other = testutil::random_tensor(Shape{1, c, 8, 8}, rng);
  const Tensor fuse_w = testutil::random_tensor(Shape{c, c, 3, 3}, rng);
  const Tensor fuse_b = testutil::random_tensor(Shape{1, c, 1, 1}, rng);

  // Swap-symmetric gate conv: channel 1 reads the modal halves in the other
  // order, so identical modal inputs give g_rgb == g_d.
  Tensor sym_w(Shape{2, 2 * c, 3, 3});
  std::mt19937_64 rng2(7);
  for (int ic = 0; ic < 2 * c; ++ic) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double v = testutil::uniform(rng2, -0.5, 0.5);
        sym_w.at(0, ic, ky, kx) = v;
        sym_w.at(1, ic < c ? ic + c : ic - c, ky, kx) = v;
      }
    }
  }
  {
    Tape t;
    const CrossModalOut out = cross_modal_gate(
        t, t.leaf(e), t.leaf(e), t.leaf(sym_w), t.leaf(Tensor(Shape{1, 2, 1, 1})),
        t.leaf(fuse_w), t.leaf(fuse_b), t.leaf(fuse_w), t.leaf(fuse_b));
    CHECK(t.value(out.g_rgb)[0] == doctest::Approx(t.value(out.g_d)[0]).epsilon(1e-14));
  }

  // Saturating the depth gate off reduces the fusion to the RGB projection.
  Tensor bias(Shape{1, 2, 1, 1});
  bias[0] = 50.0;
  bias[1] = -50.0;
  {
    Tape t;
    const CrossModalOut out = cross_modal_gate(
        t, t.leaf(e), t.leaf(other), t.leaf(Tensor(Shape{2, 2 * c, 3, 3})), t.leaf(bias),
        t.leaf(fuse_w), t.leaf(fuse_b), t.leaf(fuse_w), t.leaf(fuse_b));
    const Tensor g_rgb = t.value(out.g_rgb);
    const Tensor g_d = t.value(out.g_d);
    CHECK(g_rgb[0] > 1.0 - 1e-12);
    CHECK(g_d[0] < 1e-12);
    const Tensor fused = t.value(out.fused);
    const Tensor rgb_only = conv2d(e, fuse_w, t.value(t.leaf(fuse_b)).values(), ConvSpec{1, 1, 1});
    for (long long i = 0; i < fused.size(); ++i) {
      CHECK(std::fabs(fused[i] - rgb_only[i]) <= 1e-12);
    }
  }

  // Resolution mismatch is rejected.
  Tape t;
  CHECK_THROWS_AS(
      cross_modal_gate(t, t.leaf(e), t.leaf(Tensor(Shape{1, c, 4, 4})), t.leaf(sym_w),
                       t.leaf(Tensor(Shape{1, 2, 1, 1})), t.leaf(fuse_w), t.leaf(fuse_b),
                       t.leaf(fuse_w), t.leaf(fuse_b)),
      std::invalid_argument);
}

TEST_CASE("gradients flow through the gate conv") {
  std::mt19937_64 rng(8);
  const Tensor context = testutil::random_tensor(Shape{1, 3, 6, 6}, rng);
  const Tensor partner = testutil::random_tensor(Shape{1, 2, 6, 6}, rng);
  Tape t;
  const Tape::NodeId w = t.leaf(testutil::random_tensor(Shape{2, 5, 3, 3}, rng), true);
  const Tape::NodeId b = t.leaf(testutil::random_tensor(Shape{1, 2, 1, 1}, rng), true);
  const GatePair g = gate_values(t, t.leaf(context), t.leaf(partner), w, b);
  const Tape::NodeId gated = t.scale_channels(t.leaf(testutil::random_tensor(Shape{1, 4, 6, 6}, rng)), g.g1);
  t.backward(t.sum(gated));
  double norm = 0.0;
  const Tensor gw = t.grad(w);
  for (long long i = 0; i < gw.size(); ++i) norm += gw[i] * gw[i];
  CHECK(norm > 0.0);
}
