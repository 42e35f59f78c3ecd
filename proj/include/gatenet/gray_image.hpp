#pragma once

#include <vector>

namespace gatenet {

// Single-channel image with values in [0,1] (8-bit sources divided by 255).
struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  GrayImage() = default;
  GrayImage(int height, int width, double fill = 0.0)
      : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

  long long size() const { return 1LL * h * w; }
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

}  // namespace gatenet
