#include "gatenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gatenet {
namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

int conv_out_dim(int in, int kernel, const ConvSpec& spec) {
  long long num = 1LL * in + 2LL * spec.padding - 1LL * spec.dilation * (kernel - 1) - 1;
  if (num < 0) return 0;
  return static_cast<int>(num / spec.stride + 1);
}

namespace {

// Valid output range [lo, hi] for which in = out*stride + off lies in
// [0, limit). Contributions are applied row-wise (an axpy per kernel tap), but
// every output element still accumulates its taps in (ic, ky, kx) order, so
// results are bit-identical to the naive per-element loop.
struct TapRange {
  int lo;
  int hi;
};

inline TapRange tap_range(int off, int stride, int limit, int out_count) {
  int lo = 0;
  if (off < 0) lo = (-off + stride - 1) / stride;
  int hi = (limit - 1 - off) / stride;  // off <= limit-1 checked by caller
  if (limit - 1 - off < 0) hi = -1;
  if (hi > out_count - 1) hi = out_count - 1;
  return {lo, hi};
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::span<const double> bias,
              const ConvSpec& spec) {
  require(spec.stride >= 1 && spec.dilation >= 1 && spec.padding >= 0,
          "conv2d: need stride>=1, dilation>=1, padding>=0");
  require(w.c() == x.c(), "conv2d: input has " + std::to_string(x.c()) +
                              " channels but weight expects " + std::to_string(w.c()));
  require(w.h() == w.w(), "conv2d: kernel must be square, got " + std::to_string(w.h()) + "x" +
                              std::to_string(w.w()));
  require(static_cast<int>(bias.size()) == w.n(),
          "conv2d: bias size " + std::to_string(bias.size()) + " != outC " + std::to_string(w.n()));
  const int k = w.h();
  const int oh = conv_out_dim(x.h(), k, spec);
  const int ow = conv_out_dim(x.w(), k, spec);
  require(oh >= 1 && ow >= 1, "conv2d: non-positive output size for input " +
                                  to_string(x.shape()) + " kernel " + std::to_string(k) +
                                  " stride " + std::to_string(spec.stride) + " dilation " +
                                  std::to_string(spec.dilation) + " padding " +
                                  std::to_string(spec.padding));

  Tensor y(Shape{x.n(), w.n(), oh, ow});
  const int s = spec.stride;
  const int d = spec.dilation;
  const int p = spec.padding;
  const long long rows = 1LL * x.n() * w.n() * oh;
#pragma omp parallel for
  for (long long row = 0; row < rows; ++row) {
    const int oy = static_cast<int>(row % oh);
    const int oc = static_cast<int>((row / oh) % w.n());
    const int in = static_cast<int>(row / oh / w.n());
    double* __restrict__ y_row = y.data() + y.index(in, oc, oy, 0);

    // Taps accumulate in (ic, ky, kx) order for every output element, in both
    // the scalar border path and the 8-wide register-blocked interior.
    auto scalar_out = [&](int ox) {
      double acc = bias[oc];
      for (int ic = 0; ic < x.c(); ++ic) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s - p + ky * d;
          if (iy < 0 || iy >= x.h()) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * s - p + kx * d;
            if (ix < 0 || ix >= x.w()) continue;
            acc += x.at(in, ic, iy, ix) * w.at(oc, ic, ky, kx);
          }
        }
      }
      y_row[ox] = acc;
    };

    if (s != 1) {
      for (int ox = 0; ox < ow; ++ox) y_row[ox] = bias[oc];
      for (int ic = 0; ic < x.c(); ++ic) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * s - p + ky * d;
          if (iy < 0 || iy >= x.h()) continue;
          const double* x_row = x.data() + x.index(in, ic, iy, 0);
          for (int kx = 0; kx < k; ++kx) {
            const int off = kx * d - p;
            const TapRange r = tap_range(off, s, x.w(), ow);
            const double c = w.at(oc, ic, ky, kx);
            for (int oxs = r.lo; oxs <= r.hi; ++oxs) y_row[oxs] += c * x_row[oxs * s + off];
          }
        }
      }
      continue;
    }
    // Interior: every kx tap stays inside the row.
    int in_lo = 0, in_hi = ow - 1;
    for (int kx = 0; kx < k; ++kx) {
      const int off = kx * d - p;
      in_lo = std::max(in_lo, -off);
      in_hi = std::min(in_hi, x.w() - 1 - off);
    }
    for (int ox = 0; ox < std::min(in_lo, ow); ++ox) scalar_out(ox);
    int ox = in_lo;
    for (; ox + 7 <= in_hi; ox += 8) {
      double acc[8];
      for (int j = 0; j < 8; ++j) acc[j] = bias[oc];
      const double* w_cell = w.data() + w.index(oc, 0, 0, 0);
      for (int ic = 0; ic < x.c(); ++ic) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy - p + ky * d;
          if (iy < 0 || iy >= x.h()) {
            w_cell += k;
            continue;
          }
          const double* x_row = x.data() + x.index(in, ic, iy, ox - p);
          for (int kx = 0; kx < k; ++kx) {
            const double c = w_cell[kx];
            const double* __restrict__ src = x_row + kx * d;
            for (int j = 0; j < 8; ++j) acc[j] += c * src[j];
          }
          w_cell += k;
        }
      }
      for (int j = 0; j < 8; ++j) y_row[ox + j] = acc[j];
    }
    for (; ox <= in_hi; ++ox) scalar_out(ox);
    for (ox = std::max(in_hi + 1, std::min(in_lo, ow)); ox < ow; ++ox) scalar_out(ox);
  }
  return y;
}

Tensor conv2d_grad_input(const Tensor& go, const Tensor& w, const Shape& xs,
                         const ConvSpec& spec) {
  const int k = w.h();
  const int s = spec.stride;
  Tensor gx(xs);
  const long long rows = 1LL * xs.n * xs.c * xs.h;
#pragma omp parallel for
  for (long long row = 0; row < rows; ++row) {
    const int iy = static_cast<int>(row % xs.h);
    const int ic = static_cast<int>((row / xs.h) % xs.c);
    const int in = static_cast<int>(row / xs.h / xs.c);
    const int d = spec.dilation;
    const int p = spec.padding;
    double* __restrict__ gx_row = gx.data() + gx.index(in, ic, iy, 0);

    // Taps accumulate in (oc, ky, kx) order for every input element.
    auto scalar_in = [&](int ix) {
      double acc = 0.0;
      for (int oc = 0; oc < w.n(); ++oc) {
        for (int ky = 0; ky < k; ++ky) {
          const int num_y = iy + p - ky * d;
          if (num_y < 0 || num_y % s != 0) continue;
          const int oy = num_y / s;
          if (oy >= go.h()) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int num_x = ix + p - kx * d;
            if (num_x < 0 || num_x % s != 0) continue;
            const int ox = num_x / s;
            if (ox >= go.w()) continue;
            acc += go.at(in, oc, oy, ox) * w.at(oc, ic, ky, kx);
          }
        }
      }
      gx_row[ix] = acc;
    };

    if (s != 1) {
      for (int oc = 0; oc < w.n(); ++oc) {
        for (int ky = 0; ky < k; ++ky) {
          const int num_y = iy + p - ky * d;
          if (num_y < 0 || num_y % s != 0) continue;
          const int oy = num_y / s;
          if (oy >= go.h()) continue;
          const double* go_row = go.data() + go.index(in, oc, oy, 0);
          for (int kx = 0; kx < k; ++kx) {
            const double c = w.at(oc, ic, ky, kx);
            const int off = kx * d - p;  // ix = ox*s + off
            const TapRange r = tap_range(off, s, xs.w, go.w());
            for (int ox = r.lo; ox <= r.hi; ++ox) gx_row[ox * s + off] += c * go_row[ox];
          }
        }
      }
      continue;
    }
    // Interior: every kx maps to a valid output column (ox = ix - off).
    const int in_lo = std::max(0, (k - 1) * d - p);
    const int in_hi = std::min(xs.w - 1, go.w() - 1 - p);
    for (int ix = 0; ix < std::min(in_lo, xs.w); ++ix) scalar_in(ix);
    int ix = in_lo;
    for (; ix + 7 <= in_hi; ix += 8) {
      double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      for (int oc = 0; oc < w.n(); ++oc) {
        const double* w_cell = w.data() + w.index(oc, ic, 0, 0);
        for (int ky = 0; ky < k; ++ky) {
          const int oy = iy + p - ky * d;
          if (oy < 0 || oy >= go.h()) {
            w_cell += k;
            continue;
          }
          const double* go_row = go.data() + go.index(in, oc, oy, ix + p);
          for (int kx = 0; kx < k; ++kx) {
            const double c = w_cell[kx];
            const double* __restrict__ src = go_row - kx * d;
            for (int j = 0; j < 8; ++j) acc[j] += c * src[j];
          }
          w_cell += k;
        }
      }
      for (int j = 0; j < 8; ++j) gx_row[ix + j] = acc[j];
    }
    for (; ix <= in_hi; ++ix) scalar_in(ix);
    for (ix = std::max(in_hi + 1, std::min(in_lo, xs.w)); ix < xs.w; ++ix) scalar_in(ix);
  }
  return gx;
}

Tensor conv2d_grad_weight(const Tensor& go, const Tensor& x, const Shape& ws,
                          const ConvSpec& spec) {
  constexpr int kMaxFusedKernel = 7;
  const int k = ws.h;
  const int s = spec.stride;
  const int d = spec.dilation;
  const int p = spec.padding;
  Tensor gw(ws);
  const long long items = 1LL * ws.n * ws.c * k;
#pragma omp parallel for
  for (long long item = 0; item < items; ++item) {
    const int ky = static_cast<int>(item % k);
    const int ic = static_cast<int>((item / k) % ws.c);
    const int oc = static_cast<int>(item / k / ws.c);
    double* __restrict__ gw_row = gw.data() + gw.index(oc, ic, ky, 0);

    if (s == 1 && k <= kMaxFusedKernel) {
      // One pass per output row, all kx dots fused so the go row is loaded
      // once. Lane j of each kx sums elements lo+j, lo+j+8, ...; edge columns
      // land in tails. Orders are fixed, so results are run-to-run identical.
      double lanes[kMaxFusedKernel][8] = {};
      double tails[kMaxFusedKernel] = {};
      int common_lo = 0, common_hi = go.w() - 1;
      for (int kx = 0; kx < k; ++kx) {
        const int off = kx * d - p;
        common_lo = std::max(common_lo, -off);
        common_hi = std::min(common_hi, x.w() - 1 - off);
      }
      const bool has_interior = common_lo <= common_hi;
      for (int in = 0; in < x.n(); ++in) {
        for (int oy = 0; oy < go.h(); ++oy) {
          const int iy = oy - p + ky * d;
          if (iy < 0 || iy >= x.h()) continue;
          const double* __restrict__ go_row = go.data() + go.index(in, oc, oy, 0);
          const double* x_row = x.data() + x.index(in, ic, iy, 0);
          for (int kx = 0; kx < k; ++kx) {
            const int off = kx * d - p;
            const int lo = std::max(0, -off);
            const int hi = std::min(go.w() - 1, x.w() - 1 - off);
            const int left_end = has_interior ? std::min(common_lo, hi + 1) : hi + 1;
            for (int ox = lo; ox < left_end; ++ox) {
              tails[kx] += go_row[ox] * x_row[ox + off];
            }
            if (!has_interior) continue;
            for (int ox = std::max(common_hi + 1, lo); ox <= hi; ++ox) {
              tails[kx] += go_row[ox] * x_row[ox + off];
            }
          }
          int ox = common_lo;
          for (; ox + 7 <= common_hi; ox += 8) {
            for (int kx = 0; kx < k; ++kx) {
              const double* __restrict__ src = x_row + ox + kx * d - p;
              for (int j = 0; j < 8; ++j) lanes[kx][j] += go_row[ox + j] * src[j];
            }
          }
          for (; ox <= common_hi; ++ox) {
            for (int kx = 0; kx < k; ++kx) tails[kx] += go_row[ox] * x_row[ox + kx * d - p];
          }
        }
      }
      for (int kx = 0; kx < k; ++kx) {
        double acc = tails[kx];
        for (int j = 0; j < 8; ++j) acc += lanes[kx][j];
        gw_row[kx] = acc;
      }
      continue;
    }

    for (int kx = 0; kx < k; ++kx) {
      const int off = kx * d - p;
      const TapRange r = tap_range(off, s, x.w(), go.w());
      double acc = 0.0;
      for (int in = 0; in < x.n(); ++in) {
        for (int oy = 0; oy < go.h(); ++oy) {
          const int iy = oy * s - p + ky * d;
          if (iy < 0 || iy >= x.h()) continue;
          const double* __restrict__ go_row = go.data() + go.index(in, oc, oy, 0);
          const double* __restrict__ x_row = x.data() + x.index(in, ic, iy, 0);
          for (int ox = r.lo; ox <= r.hi; ++ox) acc += go_row[ox] * x_row[ox * s + off];
        }
      }
      gw_row[kx] = acc;
    }
  }
  return gw;
}

std::vector<double> conv2d_grad_bias(const Tensor& go) {
  std::vector<double> gb(static_cast<size_t>(go.c()), 0.0);
#pragma omp parallel for
  for (int oc = 0; oc < go.c(); ++oc) {
    double acc = 0.0;
    for (int in = 0; in < go.n(); ++in) {
      for (int oy = 0; oy < go.h(); ++oy) {
        for (int ox = 0; ox < go.w(); ++ox) {
          acc += go.at(in, oc, oy, ox);
        }
      }
    }
    gb[static_cast<size_t>(oc)] = acc;
  }
  return gb;
}

namespace {

struct Lerp {
  int lo, hi;
  double frac;
};

inline Lerp sample_coord(int dst, int in_dim, int out_dim) {
  const double scale = static_cast<double>(in_dim) / out_dim;
  double src = (dst + 0.5) * scale - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in_dim - 1));
  const int lo = static_cast<int>(src);
  const double frac = src - lo;
  const int hi = std::min(lo + 1, in_dim - 1);
  return {lo, hi, frac};
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: target dims must be >= 1");
  if (out_h == x.h() && out_w == x.w()) return x;
  Tensor y(Shape{x.n(), x.c(), out_h, out_w});
  const long long rows = 1LL * x.n() * x.c() * out_h;
#pragma omp parallel for
  for (long long row = 0; row < rows; ++row) {
    const int oy = static_cast<int>(row % out_h);
    const int ch = static_cast<int>((row / out_h) % x.c());
    const int in = static_cast<int>(row / out_h / x.c());
    const Lerp ly = sample_coord(oy, x.h(), out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      const Lerp lx = sample_coord(ox, x.w(), out_w);
      const double v00 = x.at(in, ch, ly.lo, lx.lo);
      const double v01 = x.at(in, ch, ly.lo, lx.hi);
      const double v10 = x.at(in, ch, ly.hi, lx.lo);
      const double v11 = x.at(in, ch, ly.hi, lx.hi);
      const double top = v00 + (v01 - v00) * lx.frac;
      const double bot = v10 + (v11 - v10) * lx.frac;
      y.at(in, ch, oy, ox) = top + (bot - top) * ly.frac;
    }
  }
  return y;
}

Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w) {
  require(out_h >= x.h() && out_w >= x.w(),
          "bilinear_upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
              " smaller than input " + std::to_string(x.h()) + "x" + std::to_string(x.w()));
  return bilinear_resize(x, out_h, out_w);
}

Tensor bilinear_resize_grad_input(const Tensor& go, const Shape& xs) {
  Tensor gx(xs);
  if (go.h() == xs.h && go.w() == xs.w) {
    gx = go;
    return gx;
  }
  const long long planes = 1LL * xs.n * xs.c;
#pragma omp parallel for
  for (long long plane = 0; plane < planes; ++plane) {
    const int ch = static_cast<int>(plane % xs.c);
    const int in = static_cast<int>(plane / xs.c);
    for (int oy = 0; oy < go.h(); ++oy) {
      const Lerp ly = sample_coord(oy, xs.h, go.h());
      for (int ox = 0; ox < go.w(); ++ox) {
        const Lerp lx = sample_coord(ox, xs.w, go.w());
        const double g = go.at(in, ch, oy, ox);
        gx.at(in, ch, ly.lo, lx.lo) += g * (1.0 - ly.frac) * (1.0 - lx.frac);
        gx.at(in, ch, ly.lo, lx.hi) += g * (1.0 - ly.frac) * lx.frac;
        gx.at(in, ch, ly.hi, lx.lo) += g * ly.frac * (1.0 - lx.frac);
        gx.at(in, ch, ly.hi, lx.hi) += g * ly.frac * lx.frac;
      }
    }
  }
  return gx;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(Shape{x.n(), x.c(), 1, 1});
  const long long planes = 1LL * x.n() * x.c();
  const double count = 1.0 * x.h() * x.w();
#pragma omp parallel for
  for (long long plane = 0; plane < planes; ++plane) {
    const int ch = static_cast<int>(plane % x.c());
    const int in = static_cast<int>(plane / x.c());
    double acc = 0.0;
    for (int iy = 0; iy < x.h(); ++iy) {
      for (int ix = 0; ix < x.w(); ++ix) {
        acc += x.at(in, ch, iy, ix);
      }
    }
    y.at(in, ch, 0, 0) = acc / count;
  }
  return y;
}

Tensor global_avg_pool_grad_input(const Tensor& go, const Shape& xs) {
  Tensor gx(xs);
  const double inv = 1.0 / (1.0 * xs.h * xs.w);
  const long long planes = 1LL * xs.n * xs.c;
#pragma omp parallel for
  for (long long plane = 0; plane < planes; ++plane) {
    const int ch = static_cast<int>(plane % xs.c);
    const int in = static_cast<int>(plane / xs.c);
    const double g = go.at(in, ch, 0, 0) * inv;
    for (int iy = 0; iy < xs.h; ++iy) {
      for (int ix = 0; ix < xs.w; ++ix) {
        gx.at(in, ch, iy, ix) = g;
      }
    }
  }
  return gx;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                " vs " + to_string(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  const long long total = a.size();
#pragma omp parallel for
  for (long long i = 0; i < total; ++i) y[i] = a[i] + b[i];
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  const long long total = a.size();
#pragma omp parallel for
  for (long long i = 0; i < total; ++i) y[i] = a[i] * b[i];
  return y;
}

double sigmoid_scalar(double v) {
  static const double kHi = std::nextafter(1.0, 0.0);
  static const double kLo = std::numeric_limits<double>::denorm_min();
  double y;
  if (v >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-v));
  } else {
    const double e = std::exp(v);
    y = e / (1.0 + e);
  }
  return std::min(std::max(y, kLo), kHi);
}

Tensor sigmoid(const Tensor& a) {
  Tensor y(a.shape());
  const long long total = a.size();
#pragma omp parallel for
  for (long long i = 0; i < total; ++i) y[i] = sigmoid_scalar(a[i]);
  return y;
}

Tensor relu(const Tensor& a) {
  Tensor y(a.shape());
  const long long total = a.size();
#pragma omp parallel for
  for (long long i = 0; i < total; ++i) y[i] = a[i] > 0.0 ? a[i] : 0.0;
  return y;
}

Tensor scale_channels(const Tensor& a, const Tensor& gate) {
  require(gate.n() == a.n() && gate.c() == 1 && gate.h() == 1 && gate.w() == 1,
          "scale_channels: gate must be (n,1,1,1) with n=" + std::to_string(a.n()) + ", got " +
              to_string(gate.shape()));
  Tensor y(a.shape());
  const long long per_sample = 1LL * a.c() * a.h() * a.w();
  const long long total = a.size();
#pragma omp parallel for
  for (long long i = 0; i < total; ++i) y[i] = a[i] * gate[i / per_sample];
  return y;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_channels: no parts");
  const Tensor& first = parts[0];
  int total_c = 0;
  for (const Tensor& p : parts) {
    require(p.n() == first.n() && p.h() == first.h() && p.w() == first.w(),
            "concat_channels: spatial/batch mismatch " + to_string(p.shape()) + " vs " +
                to_string(first.shape()));
    total_c += p.c();
  }
  Tensor y(Shape{first.n(), total_c, first.h(), first.w()});
  int c_off = 0;
  for (const Tensor& p : parts) {
    const long long plane = 1LL * p.h() * p.w();
    for (int in = 0; in < p.n(); ++in) {
      std::copy_n(p.data() + p.index(in, 0, 0, 0), p.c() * plane,
                  y.data() + y.index(in, c_off, 0, 0));
    }
    c_off += p.c();
  }
  return y;
}

Tensor slice_channels(const Tensor& a, int from, int count) {
  require(from >= 0 && count >= 1 && from + count <= a.c(),
          "slice_channels: range [" + std::to_string(from) + "," + std::to_string(from + count) +
              ") out of " + std::to_string(a.c()) + " channels");
  Tensor y(Shape{a.n(), count, a.h(), a.w()});
  const long long plane = 1LL * a.h() * a.w();
  for (int in = 0; in < a.n(); ++in) {
    std::copy_n(a.data() + a.index(in, from, 0, 0), count * plane, y.data() + y.index(in, 0, 0, 0));
  }
  return y;
}

double reduce_sum(const Tensor& a) {
  double acc = 0.0;
  const long long total = a.size();
  for (long long i = 0; i < total; ++i) acc += a[i];
  return acc;
}

Tensor pointwise(PointwiseKind kind, const Tensor& a, const Tensor* b) {
  switch (kind) {
    case PointwiseKind::add:
      require(b != nullptr, "pointwise add: second operand required");
      return add(a, *b);
    case PointwiseKind::mul:
      require(b != nullptr, "pointwise mul: second operand required");
      return mul(a, *b);
    case PointwiseKind::sigmoid:
      return sigmoid(a);
    case PointwiseKind::relu:
      return relu(a);
    case PointwiseKind::scale_channels:
      require(b != nullptr, "pointwise scale_channels: gate operand required");
      return scale_channels(a, *b);
  }
  throw std::invalid_argument("pointwise: unknown kind");
}

}  // namespace gatenet
