#include "gatenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gatenet {
namespace {

constexpr double kEps = 2.220446049250313e-16;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_pair(const GrayImage& pred, const GrayImage& gt, const char* op) {
  require(pred.h == gt.h && pred.w == gt.w,
          std::string(op) + ": prediction " + std::to_string(pred.h) + "x" +
              std::to_string(pred.w) + " vs ground truth " + std::to_string(gt.h) + "x" +
              std::to_string(gt.w));
  require(pred.h >= 1 && pred.w >= 1, std::string(op) + ": empty image");
}

inline bool fg(double v) { return v >= 0.5; }

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

// Largest k in [0,255] with value >= k/255, by direct comparison so the
// histogram sweep matches per-threshold evaluation exactly.
int max_threshold_index(double v) {
  int k = static_cast<int>(v * 255.0);
  k = std::clamp(k, 0, 255);
  while (k + 1 <= 255 && v >= (k + 1) / 255.0) ++k;
  while (k > 0 && v < k / 255.0) --k;
  return k;
}

struct ThresholdSweep {
  std::array<long long, 256> tp{};   // foreground pixels at threshold k/255
  std::array<long long, 256> pos{};  // all positive pixels at threshold k/255
  long long n_fg = 0;
  long long total = 0;
};

ThresholdSweep sweep_thresholds(const GrayImage& pred, const GrayImage& gt) {
  ThresholdSweep s;
  std::array<long long, 256> hist_fg{};
  std::array<long long, 256> hist_all{};
  s.total = pred.size();
  for (long long i = 0; i < s.total; ++i) {
    const int k = max_threshold_index(pred.v[static_cast<size_t>(i)]);
    hist_all[static_cast<size_t>(k)] += 1;
    if (fg(gt.v[static_cast<size_t>(i)])) {
      hist_fg[static_cast<size_t>(k)] += 1;
      s.n_fg += 1;
    }
  }
  long long run_fg = 0, run_all = 0;
  for (int k = 255; k >= 0; --k) {
    run_fg += hist_fg[static_cast<size_t>(k)];
    run_all += hist_all[static_cast<size_t>(k)];
    s.tp[static_cast<size_t>(k)] = run_fg;
    s.pos[static_cast<size_t>(k)] = run_all;
  }
  return s;
}

std::pair<long long, long long> count_at_threshold(const GrayImage& pred, const GrayImage& gt,
                                                   double t) {
  long long tp = 0, pos = 0;
  for (long long i = 0; i < pred.size(); ++i) {
    if (pred.v[static_cast<size_t>(i)] >= t) {
      ++pos;
      if (fg(gt.v[static_cast<size_t>(i)])) ++tp;
    }
  }
  return {tp, pos};
}

void check_pred_range(const GrayImage& pred, const char* op) {
  for (double v : pred.v) {
    require(v >= 0.0 && v <= 1.0, std::string(op) + ": prediction value outside [0,1]");
  }
}

}  // namespace

Confusion confusion(const GrayImage& pred_bin, const GrayImage& gt) {
  check_pair(pred_bin, gt, "confusion");
  Confusion c;
  for (long long i = 0; i < pred_bin.size(); ++i) {
    const bool p = fg(pred_bin.v[static_cast<size_t>(i)]);
    const bool g = fg(gt.v[static_cast<size_t>(i)]);
    if (p && g) ++c.tp;
    else if (p && !g) ++c.fp;
    else if (!p && g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

RatioMetrics ratio_metrics(const Confusion& c) {
  RatioMetrics r;
  const double tp = static_cast<double>(c.tp);
  const double tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  r.pa = safe_div(tp + tn, tp + tn + fp + fn);
  r.precision = safe_div(tp, tp + fp);
  r.recall = safe_div(tp, tp + fn);
  r.iou = safe_div(tp, tp + fp + fn);
  r.dice = safe_div(2.0 * tp, fp + 2.0 * tp + fn);
  r.ber = 1.0 - 0.5 * (safe_div(tp, tp + fn) + safe_div(tn, tn + fp));
  return r;
}

double f_measure(double precision, double recall, double beta2) {
  const double den = beta2 * precision + recall;
  if (den == 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / den;
}

double adaptive_threshold(const GrayImage& pred) {
  double mean = 0.0;
  for (double v : pred.v) mean += v;
  mean /= static_cast<double>(pred.size());
  return std::min(2.0 * mean, 1.0);
}

namespace {

double f_from_counts(long long tp, long long pos, long long n_fg) {
  const double precision = safe_div(static_cast<double>(tp), static_cast<double>(pos));
  const double recall = safe_div(static_cast<double>(tp), static_cast<double>(n_fg));
  return f_measure(precision, recall);
}

}  // namespace

FCurve f_curve(const GrayImage& pred, const GrayImage& gt) {
  check_pair(pred, gt, "f_curve");
  check_pred_range(pred, "f_curve");
  const ThresholdSweep s = sweep_thresholds(pred, gt);
  FCurve out;
  for (int k = 0; k < 256; ++k) {
    out.curve[static_cast<size_t>(k)] =
        f_from_counts(s.tp[static_cast<size_t>(k)], s.pos[static_cast<size_t>(k)], s.n_fg);
    out.f_max = std::max(out.f_max, out.curve[static_cast<size_t>(k)]);
  }
  const auto [tp_a, pos_a] = count_at_threshold(pred, gt, adaptive_threshold(pred));
  out.f_mean = f_from_counts(tp_a, pos_a, s.n_fg);
  return out;
}

// ---------------------------------------------------------------------------
// Weighted F-measure.

namespace {

// Exact nearest-foreground squared distances and indices; ties resolve to the
// smallest row-major index. Scans rows outward from each pixel and prunes once
// the row offset alone exceeds the best squared distance.
void nearest_foreground(const GrayImage& gt, std::vector<long long>& d2,
                        std::vector<long long>& idx) {
  const int h = gt.h, w = gt.w;
  std::vector<std::vector<int>> cols(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (fg(gt.at(y, x))) cols[static_cast<size_t>(y)].push_back(x);
    }
  }
  d2.assign(static_cast<size_t>(h) * w, -1);
  idx.assign(static_cast<size_t>(h) * w, -1);

#ifdef _OPENMP
#pragma omp parallel for
#endif
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      long long best = std::numeric_limits<long long>::max();
      long long best_idx = -1;
      auto consider = [&](int yy, int xx) {
        const long long dy = yy - y;
        const long long dx = xx - x;
        const long long d = dy * dy + dx * dx;
        const long long id = 1LL * yy * w + xx;
        if (d < best || (d == best && id < best_idx)) {
          best = d;
          best_idx = id;
        }
      };
      auto scan_row = [&](int yy) {
        const auto& row = cols[static_cast<size_t>(yy)];
        if (row.empty()) return;
        const auto it = std::lower_bound(row.begin(), row.end(), x);
        if (it != row.end()) consider(yy, *it);
        if (it != row.begin()) consider(yy, *(it - 1));
      };
      for (int r = 0; r < h; ++r) {
        if (best_idx >= 0 && 1LL * r * r > best) break;
        if (y - r >= 0) scan_row(y - r);
        if (r > 0 && y + r < h) scan_row(y + r);
      }
      d2[static_cast<size_t>(y) * w + x] = best_idx >= 0 ? best : -1;
      idx[static_cast<size_t>(y) * w + x] = best_idx;
    }
  }
}

std::array<double, 49> gaussian_kernel_7x5() {
  std::array<double, 49> k{};
  double sum = 0.0;
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 7; ++x) {
      const double dy = y - 3, dx = x - 3;
      k[static_cast<size_t>(y * 7 + x)] = std::exp(-(dy * dy + dx * dx) / 50.0);
      sum += k[static_cast<size_t>(y * 7 + x)];
    }
  }
  for (double& v : k) v /= sum;
  return k;
}

// Zero-padded correlation with the 7x7 kernel.
GrayImage gaussian_filter(const GrayImage& in) {
  static const std::array<double, 49> kernel = gaussian_kernel_7x5();
  GrayImage out(in.h, in.w);
#ifdef _OPENMP
#pragma omp parallel for
#endif
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < 7; ++ky) {
        const int sy = y + ky - 3;
        if (sy < 0 || sy >= in.h) continue;
        for (int kx = 0; kx < 7; ++kx) {
          const int sx = x + kx - 3;
          if (sx < 0 || sx >= in.w) continue;
          acc += in.at(sy, sx) * kernel[static_cast<size_t>(ky * 7 + kx)];
        }
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

}  // namespace

double weighted_f(const GrayImage& pred, const GrayImage& gt) {
  check_pair(pred, gt, "weighted_f");
  check_pred_range(pred, "weighted_f");
  const long long total = pred.size();
  long long n_fg = 0;
  for (double v : gt.v) n_fg += fg(v) ? 1 : 0;
  if (n_fg == 0) return 0.0;

  GrayImage error(pred.h, pred.w);
  for (long long i = 0; i < total; ++i) {
    const double g = fg(gt.v[static_cast<size_t>(i)]) ? 1.0 : 0.0;
    error.v[static_cast<size_t>(i)] = std::fabs(pred.v[static_cast<size_t>(i)] - g);
  }

  std::vector<long long> d2, idx;
  nearest_foreground(gt, d2, idx);

  GrayImage propagated = error;
  for (long long i = 0; i < total; ++i) {
    if (!fg(gt.v[static_cast<size_t>(i)])) {
      propagated.v[static_cast<size_t>(i)] = error.v[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    }
  }
  const GrayImage smoothed = gaussian_filter(propagated);

  const double decay = std::log(0.5) / 5.0;
  double sum_fg_ew = 0.0, sum_bg_ew = 0.0;
  for (long long i = 0; i < total; ++i) {
    const bool is_fg = fg(gt.v[static_cast<size_t>(i)]);
    double e = error.v[static_cast<size_t>(i)];
    if (is_fg && smoothed.v[static_cast<size_t>(i)] < e) e = smoothed.v[static_cast<size_t>(i)];
    if (is_fg) {
      sum_fg_ew += e;
    } else {
      const double dist = std::sqrt(static_cast<double>(d2[static_cast<size_t>(i)]));
      sum_bg_ew += e * (2.0 - std::exp(decay * dist));
    }
  }

  const double tpw = static_cast<double>(n_fg) - sum_fg_ew;
  const double recall = 1.0 - sum_fg_ew / static_cast<double>(n_fg);
  const double precision = tpw / (kEps + tpw + sum_bg_ew);
  return 2.0 * recall * precision / (kEps + recall + precision);
}

// ---------------------------------------------------------------------------
// S-measure.

namespace {

double object_score(const GrayImage& values, const std::vector<char>& mask) {
  long long count = 0;
  double sum = 0.0;
  for (long long i = 0; i < values.size(); ++i) {
    if (mask[static_cast<size_t>(i)]) {
      ++count;
      sum += values.v[static_cast<size_t>(i)];
    }
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  double var = 0.0;
  if (count > 1) {
    for (long long i = 0; i < values.size(); ++i) {
      if (mask[static_cast<size_t>(i)]) {
        const double d = values.v[static_cast<size_t>(i)] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(count - 1);
  }
  return 2.0 * mean / (mean * mean + 1.0 + std::sqrt(var) + kEps);
}

double s_object(const GrayImage& pred, const GrayImage& gt) {
  const long long total = pred.size();
  std::vector<char> fg_mask(static_cast<size_t>(total)), bg_mask(static_cast<size_t>(total));
  long long n_fg = 0;
  for (long long i = 0; i < total; ++i) {
    const bool g = fg(gt.v[static_cast<size_t>(i)]);
    fg_mask[static_cast<size_t>(i)] = g;
    bg_mask[static_cast<size_t>(i)] = !g;
    n_fg += g ? 1 : 0;
  }
  GrayImage inverted(pred.h, pred.w);
  for (long long i = 0; i < total; ++i) {
    inverted.v[static_cast<size_t>(i)] = 1.0 - pred.v[static_cast<size_t>(i)];
  }
  const double u = static_cast<double>(n_fg) / static_cast<double>(total);
  return u * object_score(pred, fg_mask) + (1.0 - u) * object_score(inverted, bg_mask);
}

// Region SSIM over one quadrant; both views share the same rectangle.
double region_ssim(const GrayImage& pred, const GrayImage& gt, int y0, int x0, int y1, int x1) {
  const long long n = 1LL * (y1 - y0) * (x1 - x0);
  if (n <= 0) return 0.0;
  double mean_p = 0.0, mean_g = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      mean_p += pred.at(y, x);
      mean_g += fg(gt.at(y, x)) ? 1.0 : 0.0;
    }
  }
  mean_p /= static_cast<double>(n);
  mean_g /= static_cast<double>(n);
  double var_p = 0.0, var_g = 0.0, cov = 0.0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const double dp = pred.at(y, x) - mean_p;
      const double dg = (fg(gt.at(y, x)) ? 1.0 : 0.0) - mean_g;
      var_p += dp * dp;
      var_g += dg * dg;
      cov += dp * dg;
    }
  }
  const double denom = static_cast<double>(n) - 1.0 + kEps;
  var_p /= denom;
  var_g /= denom;
  cov /= denom;
  const double alpha = 4.0 * mean_p * mean_g * cov;
  const double beta = (mean_p * mean_p + mean_g * mean_g) * (var_p + var_g);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const GrayImage& pred, const GrayImage& gt) {
  const int h = gt.h, w = gt.w;
  // Centroid of the foreground in 1-based coordinates, rounded half away from
  // zero; the quadrant cut keeps column/row counts X and Y in region 1.
  double total = 0.0, sum_x = 0.0, sum_y = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (fg(gt.at(y, x))) {
        total += 1.0;
        sum_x += x + 1;
        sum_y += y + 1;
      }
    }
  }
  const int cx = static_cast<int>(std::floor(sum_x / total + 0.5));
  const int cy = static_cast<int>(std::floor(sum_y / total + 0.5));
  const double area = static_cast<double>(h) * w;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(w - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (h - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * region_ssim(pred, gt, 0, 0, cy, cx) + w2 * region_ssim(pred, gt, 0, cx, cy, w) +
         w3 * region_ssim(pred, gt, cy, 0, h, cx) + w4 * region_ssim(pred, gt, cy, cx, h, w);
}

}  // namespace

double s_measure(const GrayImage& pred, const GrayImage& gt, double alpha) {
  check_pair(pred, gt, "s_measure");
  check_pred_range(pred, "s_measure");
  long long n_fg = 0;
  for (double v : gt.v) n_fg += fg(v) ? 1 : 0;
  double mean_pred = 0.0;
  for (double v : pred.v) mean_pred += v;
  mean_pred /= static_cast<double>(pred.size());
  if (n_fg == 0) return 1.0 - mean_pred;
  if (n_fg == pred.size()) return mean_pred;
  const double q = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt);
  return std::max(q, 0.0);
}

// ---------------------------------------------------------------------------
// E-measure.

namespace {

double e_from_counts(long long tp, long long pos, long long n_fg, long long total) {
  const double n = static_cast<double>(total);
  if (n_fg == 0) return (n - static_cast<double>(pos)) / n;
  if (n_fg == total) return static_cast<double>(pos) / n;
  const long long fp = pos - tp;
  const long long fn = n_fg - tp;
  const long long tn = total - pos - fn;
  const double mu_fm = static_cast<double>(pos) / n;
  const double mu_gt = static_cast<double>(n_fg) / n;
  auto enhanced = [&](double fm, double g) {
    const double af = fm - mu_fm;
    const double ag = g - mu_gt;
    const double align = 2.0 * ag * af / (ag * ag + af * af + kEps);
    return (align + 1.0) * (align + 1.0) / 4.0;
  };
  const double sum = static_cast<double>(tp) * enhanced(1.0, 1.0) +
                     static_cast<double>(fp) * enhanced(1.0, 0.0) +
                     static_cast<double>(fn) * enhanced(0.0, 1.0) +
                     static_cast<double>(tn) * enhanced(0.0, 0.0);
  return sum / n;
}

}  // namespace

EMeasureResult e_measure(const GrayImage& pred, const GrayImage& gt) {
  check_pair(pred, gt, "e_measure");
  check_pred_range(pred, "e_measure");
  const ThresholdSweep s = sweep_thresholds(pred, gt);
  EMeasureResult out;
  for (int k = 0; k < 256; ++k) {
    out.curve[static_cast<size_t>(k)] = e_from_counts(
        s.tp[static_cast<size_t>(k)], s.pos[static_cast<size_t>(k)], s.n_fg, s.total);
  }
  const auto [tp_a, pos_a] = count_at_threshold(pred, gt, adaptive_threshold(pred));
  out.e_adaptive = e_from_counts(tp_a, pos_a, s.n_fg, s.total);
  return out;
}

double mae(const GrayImage& pred, const GrayImage& gt) {
  check_pair(pred, gt, "mae");
  double acc = 0.0;
  for (long long i = 0; i < pred.size(); ++i) {
    acc += std::fabs(pred.v[static_cast<size_t>(i)] - gt.v[static_cast<size_t>(i)]);
  }
  return acc / static_cast<double>(pred.size());
}

MetricReport evaluate_pair(const GrayImage& pred, const GrayImage& gt, const EvalOptions& opts) {
  check_pair(pred, gt, "evaluate_pair");
  check_pred_range(pred, "evaluate_pair");
  MetricReport r;
  r.threshold_used =
      opts.binarize == BinarizeMode::fixed ? opts.threshold : adaptive_threshold(pred);

  GrayImage pred_bin(pred.h, pred.w);
  for (long long i = 0; i < pred.size(); ++i) {
    pred_bin.v[static_cast<size_t>(i)] = pred.v[static_cast<size_t>(i)] >= r.threshold_used;
  }
  const RatioMetrics ratios = ratio_metrics(confusion(pred_bin, gt));
  r.pa = ratios.pa;
  r.iou = ratios.iou;
  r.dice = ratios.dice;
  r.ber = ratios.ber;

  const FCurve fc = f_curve(pred, gt);
  r.f_curve = fc.curve;
  r.f_max = fc.f_max;
  r.f_mean = fc.f_mean;
  r.f_weighted = weighted_f(pred, gt);
  r.s_measure = gatenet::s_measure(pred, gt);
  const EMeasureResult em = gatenet::e_measure(pred, gt);
  r.e_measure = em.e_adaptive;
  r.e_curve = em.curve;
  r.mae = gatenet::mae(pred, gt);
  return r;
}

DatasetEval evaluate_dataset(std::span<const std::pair<GrayImage, GrayImage>> pairs, int jobs,
                             const EvalOptions& opts) {
  require(!pairs.empty(), "evaluate_dataset: empty pair list");
#ifdef _OPENMP
  if (jobs <= 0) jobs = omp_get_max_threads();
#else
  jobs = 1;
#endif

  DatasetEval out;
  out.per_image.resize(pairs.size());
  std::string error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
#endif
  for (long long i = 0; i < static_cast<long long>(pairs.size()); ++i) {
    try {
      out.per_image[static_cast<size_t>(i)] =
          evaluate_pair(pairs[static_cast<size_t>(i)].first, pairs[static_cast<size_t>(i)].second,
                        opts);
    } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (error.empty()) error = "pair " + std::to_string(i) + ": " + e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("evaluate_dataset: " + error);

  MetricReport& agg = out.aggregate;
  const double inv = 1.0 / static_cast<double>(out.per_image.size());
  for (const MetricReport& r : out.per_image) {
    agg.pa += r.pa;
    agg.f_mean += r.f_mean;
    agg.f_weighted += r.f_weighted;
    agg.s_measure += r.s_measure;
    agg.e_measure += r.e_measure;
    agg.iou += r.iou;
    agg.dice += r.dice;
    agg.ber += r.ber;
    agg.mae += r.mae;
    for (int k = 0; k < 256; ++k) {
      agg.f_curve[static_cast<size_t>(k)] += r.f_curve[static_cast<size_t>(k)];
      agg.e_curve[static_cast<size_t>(k)] += r.e_curve[static_cast<size_t>(k)];
    }
  }
  agg.pa *= inv;
  agg.f_mean *= inv;
  agg.f_weighted *= inv;
  agg.s_measure *= inv;
  agg.e_measure *= inv;
  agg.iou *= inv;
  agg.dice *= inv;
  agg.ber *= inv;
  agg.mae *= inv;
  agg.f_max = 0.0;
  for (int k = 0; k < 256; ++k) {
    agg.f_curve[static_cast<size_t>(k)] *= inv;
    agg.e_curve[static_cast<size_t>(k)] *= inv;
    agg.f_max = std::max(agg.f_max, agg.f_curve[static_cast<size_t>(k)]);
  }
  agg.threshold_used = opts.binarize == BinarizeMode::fixed ? opts.threshold : -1.0;
  return out;
}

}  // namespace gatenet
