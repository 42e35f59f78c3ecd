#include "gatenet/ref_ops.hpp"

#include <algorithm>
#include <stdexcept>

#include "gatenet/foldconv.hpp"

namespace gatenet::ref {

Tensor conv2d(const Tensor& x, const Tensor& w, std::span<const double> bias,
              const ConvSpec& spec) {
  const int k = w.h();
  const int oh = conv_out_dim(x.h(), k, spec);
  const int ow = conv_out_dim(x.w(), k, spec);
  if (oh < 1 || ow < 1) throw std::invalid_argument("ref::conv2d: non-positive output size");
  Tensor y(Shape{x.n(), w.n(), oh, ow});
  for (int in = 0; in < x.n(); ++in) {
    for (int oc = 0; oc < w.n(); ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias[oc];
          for (int ic = 0; ic < x.c(); ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * spec.stride - spec.padding + ky * spec.dilation;
              if (iy < 0 || iy >= x.h()) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * spec.stride - spec.padding + kx * spec.dilation;
                if (ix < 0 || ix >= x.w()) continue;
                acc += x.at(in, ic, iy, ix) * w.at(oc, ic, ky, kx);
              }
            }
          }
          y.at(in, oc, oy, ox) = acc;
        }
      }
    }
  }
  return y;
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  if (out_h == x.h() && out_w == x.w()) return x;
  Tensor y(Shape{x.n(), x.c(), out_h, out_w});
  const double sy = static_cast<double>(x.h()) / out_h;
  const double sx = static_cast<double>(x.w()) / out_w;
  for (int in = 0; in < x.n(); ++in) {
    for (int ch = 0; ch < x.c(); ++ch) {
      for (int oy = 0; oy < out_h; ++oy) {
        const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, x.h() - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, x.h() - 1);
        const double ay = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
          const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, x.w() - 1.0);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, x.w() - 1);
          const double ax = fx - x0;
          const double top = x.at(in, ch, y0, x0) + (x.at(in, ch, y0, x1) - x.at(in, ch, y0, x0)) * ax;
          const double bot = x.at(in, ch, y1, x0) + (x.at(in, ch, y1, x1) - x.at(in, ch, y1, x0)) * ax;
          y.at(in, ch, oy, ox) = top + (bot - top) * ay;
        }
      }
    }
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(Shape{x.n(), x.c(), 1, 1});
  for (int in = 0; in < x.n(); ++in) {
    for (int ch = 0; ch < x.c(); ++ch) {
      double acc = 0.0;
      for (int iy = 0; iy < x.h(); ++iy) {
        for (int ix = 0; ix < x.w(); ++ix) {
          acc += x.at(in, ch, iy, ix);
        }
      }
      y.at(in, ch, 0, 0) = acc / (1.0 * x.h() * x.w());
    }
  }
  return y;
}

Tensor fold(const Tensor& x) {
  const int fh = (x.h() + 1) / 2;
  const int fw = (x.w() + 1) / 2;
  Tensor y(Shape{x.n(), 4 * x.c(), fh, fw});
  for (int in = 0; in < x.n(); ++in) {
    for (int ic = 0; ic < x.c(); ++ic) {
      for (int iy = 0; iy < x.h(); ++iy) {
        for (int ix = 0; ix < x.w(); ++ix) {
          const int pos = (iy % 2) * 2 + (ix % 2);
          y.at(in, 4 * ic + pos, iy / 2, ix / 2) = x.at(in, ic, iy, ix);
        }
      }
    }
  }
  return y;
}

Tensor unfold(const Tensor& x, int orig_h, int orig_w) {
  if (x.c() % 4 != 0) throw std::invalid_argument("ref::unfold: channels not divisible by 4");
  Tensor y(Shape{x.n(), x.c() / 4, orig_h, orig_w});
  for (int in = 0; in < x.n(); ++in) {
    for (int c = 0; c < y.c(); ++c) {
      for (int iy = 0; iy < orig_h; ++iy) {
        for (int ix = 0; ix < orig_w; ++ix) {
          y.at(in, c, iy, ix) = x.at(in, 4 * c + (iy % 2) * 2 + (ix % 2), iy / 2, ix / 2);
        }
      }
    }
  }
  return y;
}

Tensor folded_atrous_conv(const Tensor& x, const Tensor& w, std::span<const double> bias,
                          int rate) {
  const Tensor folded = ref::fold(x);
  const ConvSpec spec{1, rate, rate * (w.h() - 1) / 2};
  return ref::unfold(ref::conv2d(folded, w, bias, spec), x.h(), x.w());
}

}  // namespace gatenet::ref
