// Times the OpenMP kernels against the serial reference implementations and
// checks that both produce bit-identical results.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gatenet/foldconv.hpp"
#include "gatenet/metrics.hpp"
#include "gatenet/ops.hpp"
#include "gatenet/ref_ops.hpp"

using namespace gatenet;

namespace {

std::mt19937_64 g_rng(42);

double uniform(double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(g_rng() >> 11) * 0x1.0p-53);
}

Tensor random_tensor(const Shape& s, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (long long i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
  return t;
}

template <typename F>
double time_ms(F&& fn, int reps = 3) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool bit_equal) {
  std::printf("%-28s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              bit_equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif

  {
    const Tensor x = random_tensor(Shape{1, 32, 128, 128});
    const Tensor w = random_tensor(Shape{32, 32, 3, 3});
    const std::vector<double> b(32, 0.01);
    const ConvSpec spec{1, 2, 2};
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = conv2d(x, w, b, spec); });
    const double ts = time_ms([&] { out_s = ref::conv2d(x, w, b, spec); });
    report("conv2d 32x128x128 d2", ts, tp, out_p.bit_equal(out_s));
  }

  {
    const Tensor x = random_tensor(Shape{1, 16, 96, 96});
    const Tensor w = random_tensor(Shape{64, 64, 3, 3});
    const std::vector<double> b(64, 0.0);
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = folded_atrous_conv(x, w, b, 2); });
    const double ts = time_ms([&] { out_s = ref::folded_atrous_conv(x, w, b, 2); });
    report("folded_atrous 16x96x96 r2", ts, tp, out_p.bit_equal(out_s));
  }

  {
    const Tensor x = random_tensor(Shape{1, 32, 88, 88});
    Tensor out_p, out_s;
    const double tp = time_ms([&] { out_p = bilinear_resize(x, 352, 352); });
    const double ts = time_ms([&] { out_s = ref::bilinear_resize(x, 352, 352); });
    report("bilinear 88->352", ts, tp, out_p.bit_equal(out_s));
  }

  {
    std::vector<std::pair<GrayImage, GrayImage>> pairs;
    for (int i = 0; i < 16; ++i) {
      GrayImage pred(256, 256), gt(256, 256);
      for (long long j = 0; j < pred.size(); ++j) {
        pred.v[static_cast<size_t>(j)] = static_cast<double>(g_rng() % 256) / 255.0;
        gt.v[static_cast<size_t>(j)] = (g_rng() & 1) ? 1.0 : 0.0;
      }
      pairs.emplace_back(std::move(pred), std::move(gt));
    }
    DatasetEval a, b2;
    const double t1 = time_ms([&] { a = evaluate_dataset(pairs, 1); }, 1);
    const double tn = time_ms([&] { b2 = evaluate_dataset(pairs, 0); }, 1);
    const bool same = a.aggregate.mae == b2.aggregate.mae && a.aggregate.f_max == b2.aggregate.f_max;
    report("evaluate_dataset 16x256^2", t1, tn, same);
  }

  return 0;
}
