#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "gatenet/ops.hpp"
#include "gatenet/ref_ops.hpp"
#include "gatenet/tensor.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace gatenet;

TEST_CASE("tensor invariants") {
  CHECK_THROWS(Tensor(Shape{0, 1, 1, 1}));
  CHECK_THROWS(Tensor(Shape{1, 1, 2, 2}, std::vector<double>{1.0}));
  Tensor t(Shape{2, 3, 4, 5}, 1.5);
  CHECK(t.size() == 120);
  CHECK(t.all_finite());
}

TEST_CASE("conv2d scalar scaling") {
  Tensor x(Shape{1, 1, 3, 3}, 1.0);
  Tensor w(Shape{1, 1, 1, 1}, std::vector<double>{2.0});
  const Tensor y = conv2d(x, w, std::vector<double>{0.0}, ConvSpec{});
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (long long i = 0; i < y.size(); ++i) CHECK(y[i] == 2.0);
}

TEST_CASE("conv2d 3x3 all-ones sums the block") {
  std::vector<double> vals(9);
  std::iota(vals.begin(), vals.end(), 1.0);
  Tensor x(Shape{1, 1, 3, 3}, vals);
  Tensor w(Shape{1, 1, 3, 3}, 1.0);
  const Tensor y = conv2d(x, w, std::vector<double>{0.0}, ConvSpec{1, 1, 1});
  CHECK(y.at(0, 0, 1, 1) == 45.0);
}

TEST_CASE("conv2d dilated impulse matches tap enumeration") {
  Tensor x(Shape{1, 1, 9, 9});
  x.at(0, 0, 4, 4) = 1.0;
  Tensor w(Shape{1, 1, 3, 3}, 1.0);
  const Tensor y = conv2d(x, w, std::vector<double>{0.0}, ConvSpec{1, 4, 4});
  CHECK(y.shape() == Shape{1, 1, 9, 9});
  const auto expected = oracle::impulse_response_positions({4, 4}, 3, 4, 9, 9);
  CHECK(expected.size() == 9);
  for (int oy = 0; oy < 9; ++oy) {
    for (int ox = 0; ox < 9; ++ox) {
      const double want = expected.count({oy, ox}) ? 1.0 : 0.0;
      CHECK(y.at(0, 0, oy, ox) == want);
    }
  }
}

TEST_CASE("conv2d identity kernel") {
  std::mt19937_64 rng(1);
  const Tensor x = testutil::random_tensor(Shape{2, 3, 5, 5}, rng);
  Tensor w(Shape{3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
  const Tensor y = conv2d(x, w, std::vector<double>(3, 0.0), ConvSpec{});
  CHECK(y.bit_equal(x));
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937_64 rng(2);
  const Tensor x = testutil::random_tensor(Shape{1, 2, 6, 6}, rng);
  const Tensor y = testutil::random_tensor(Shape{1, 2, 6, 6}, rng);
  const Tensor w = testutil::random_tensor(Shape{3, 2, 3, 3}, rng);
  const std::vector<double> b(3, 0.0);
  const ConvSpec spec{1, 1, 1};
  const double a = 1.7, c = -0.6;
  Tensor mix(x.shape());
  for (long long i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + c * y[i];
  const Tensor lhs = conv2d(mix, w, b, spec);
  const Tensor cx = conv2d(x, w, b, spec);
  const Tensor cy = conv2d(y, w, b, spec);
  for (long long i = 0; i < lhs.size(); ++i) {
    CHECK(std::fabs(lhs[i] - (a * cx[i] + c * cy[i])) <= 1e-10);
  }
}

TEST_CASE("conv2d error reporting") {
  Tensor x(Shape{1, 2, 4, 4});
  Tensor w(Shape{1, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(x, w, std::vector<double>{0.0}, ConvSpec{}),
                       doctest::Contains("channels"), std::invalid_argument);
  Tensor w2(Shape{1, 2, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w2, std::vector<double>{0.0}, ConvSpec{4, 4, 0}),
                  std::invalid_argument);
}

TEST_CASE("bilinear upsample hand values") {
  Tensor x(Shape{1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor y = bilinear_upsample(x, 1, 4);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y.at(0, 0, 0, 2) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(y.at(0, 0, 0, 3) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bilinear upsample keeps constants and identity size") {
  Tensor x(Shape{1, 2, 3, 3}, 3.5);
  const Tensor y = bilinear_upsample(x, 7, 5);
  for (long long i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(3.5).epsilon(1e-15));
  std::mt19937_64 rng(3);
  const Tensor r = testutil::random_tensor(Shape{1, 2, 4, 4}, rng);
  CHECK(bilinear_upsample(r, 4, 4).bit_equal(r));
  CHECK_THROWS_AS(bilinear_upsample(r, 3, 4), std::invalid_argument);
}

TEST_CASE("global average pool") {
  Tensor ones(Shape{1, 2, 4, 4}, 1.0);
  const Tensor p = global_avg_pool(ones);
  CHECK(p.shape() == Shape{1, 2, 1, 1});
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 1.0);

  Tensor q(Shape{1, 1, 2, 2}, std::vector<double>{0.0, 1.0, 2.0, 3.0});
  CHECK(global_avg_pool(q)[0] == doctest::Approx(1.5).epsilon(1e-15));

  std::mt19937_64 rng(4);
  const Tensor r = testutil::random_tensor(Shape{2, 3, 7, 5}, rng);
  const Tensor pr = global_avg_pool(r);
  for (int n = 0; n < 2; ++n) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 5; ++x) acc += r.at(n, c, y, x);
      }
      CHECK(pr.at(n, c, 0, 0) == doctest::Approx(acc / 35.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("pointwise family") {
  Tensor zero(Shape{1, 1, 2, 2});
  const Tensor s = sigmoid(zero);
  for (long long i = 0; i < s.size(); ++i) CHECK(s[i] == 0.5);

  std::mt19937_64 rng(5);
  const Tensor x = testutil::random_tensor(Shape{2, 2, 3, 3}, rng);
  Tensor gate(Shape{2, 1, 1, 1}, 1.0);
  CHECK(scale_channels(x, gate).bit_equal(x));

  Tensor neg(x.shape());
  for (long long i = 0; i < x.size(); ++i) neg[i] = -x[i];
  const Tensor z = add(x, neg);
  for (long long i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);

  CHECK_THROWS_AS(add(x, Tensor(Shape{1, 2, 3, 3})), std::invalid_argument);
  CHECK(pointwise(PointwiseKind::relu, neg).bit_equal(relu(neg)));
}

TEST_CASE("sigmoid stays strictly inside (0,1)") {
  Tensor x(Shape{1, 1, 1, 4}, std::vector<double>{-1e6, -800.0, 800.0, 1e6});
  const Tensor y = sigmoid(x);
  for (long long i = 0; i < y.size(); ++i) {
    CHECK(y[i] > 0.0);
    CHECK(y[i] < 1.0);
  }
}

TEST_CASE("scale_channels commutes with pooling") {
  std::mt19937_64 rng(6);
  const Tensor x = testutil::random_tensor(Shape{3, 2, 5, 5}, rng);
  Tensor gate(Shape{3, 1, 1, 1}, std::vector<double>{0.3, -1.2, 2.0});
  const Tensor lhs = global_avg_pool(scale_channels(x, gate));
  const Tensor rhs = global_avg_pool(x);
  for (int n = 0; n < 3; ++n) {
    for (int c = 0; c < 2; ++c) {
      CHECK(lhs.at(n, c, 0, 0) == doctest::Approx(gate[n] * rhs.at(n, c, 0, 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("concat_channels layout and slicing") {
  std::mt19937_64 rng(7);
  const Tensor a = testutil::random_tensor(Shape{1, 32, 4, 4}, rng);
  const Tensor b = testutil::random_tensor(Shape{1, 1, 4, 4}, rng);
  const std::vector<Tensor> one{a};
  CHECK(concat_channels(one).bit_equal(a));

  const std::vector<Tensor> two{a, b};
  const Tensor cat = concat_channels(two);
  CHECK(cat.c() == 33);
  CHECK(slice_channels(cat, 0, 32).bit_equal(a));
  CHECK(slice_channels(cat, 32, 1).bit_equal(b));

  // The F_Cat layout: one single-channel map plus five 32-channel maps.
  std::vector<Tensor> six;
  six.push_back(testutil::random_tensor(Shape{2, 1, 3, 3}, rng));
  for (int i = 0; i < 5; ++i) six.push_back(testutil::random_tensor(Shape{2, 32, 3, 3}, rng));
  CHECK(concat_channels(six).c() == 161);

  CHECK_THROWS_AS(concat_channels(std::vector<Tensor>{a, Tensor(Shape{1, 1, 5, 5})}),
                  std::invalid_argument);
}

TEST_CASE("determinism: repeated runs bit-identical") {
  std::mt19937_64 rng(8);
  const Tensor x = testutil::random_tensor(Shape{2, 4, 16, 16}, rng);
  const Tensor w = testutil::random_tensor(Shape{8, 4, 3, 3}, rng);
  const std::vector<double> b(8, 0.25);
  const ConvSpec spec{2, 2, 2};
  CHECK(conv2d(x, w, b, spec).bit_equal(conv2d(x, w, b, spec)));
  CHECK(bilinear_resize(x, 23, 9).bit_equal(bilinear_resize(x, 23, 9)));
  CHECK(global_avg_pool(x).bit_equal(global_avg_pool(x)));
}

TEST_CASE("parallel kernels equal the serial reference bitwise") {
  std::mt19937_64 rng(9);
  const Tensor x = testutil::random_tensor(Shape{2, 3, 17, 13}, rng);
  const Tensor w = testutil::random_tensor(Shape{5, 3, 3, 3}, rng);
  const std::vector<double> b{0.1, 0.2, -0.3, 0.0, 1.0};
  for (const ConvSpec spec : {ConvSpec{1, 1, 0}, ConvSpec{1, 1, 1}, ConvSpec{2, 1, 1},
                              ConvSpec{1, 2, 2}, ConvSpec{3, 3, 4}}) {
    CHECK(conv2d(x, w, b, spec).bit_equal(ref::conv2d(x, w, b, spec)));
  }
  CHECK(bilinear_resize(x, 40, 5).bit_equal(ref::bilinear_resize(x, 40, 5)));
  CHECK(bilinear_resize(x, 9, 29).bit_equal(ref::bilinear_resize(x, 9, 29)));
  CHECK(global_avg_pool(x).bit_equal(ref::global_avg_pool(x)));
}
