#pragma once

#include <string>
#include <vector>

#include "gatenet/gray_image.hpp"
#include "gatenet/tensor.hpp"

namespace gatenet {

// Planar CHW pixel data in [0,1]; channels is 1 or 3.
struct LoadedImage {
  int h = 0;
  int w = 0;
  int channels = 0;
  std::vector<double> v;
};

// Reads an 8-bit PNG (gray, gray+alpha, palette, RGB, RGBA) or PGM (P2/P5).
LoadedImage load_image(const std::string& path);

// Grayscale view of load_image; color inputs are converted by luma
// (0.299 R + 0.587 G + 0.114 B).
GrayImage load_mask(const std::string& path);

// Writes 8-bit grayscale PNG or PGM (P5), chosen by file extension.
void save_mask(const GrayImage& img, const std::string& path);

// Conversions between the mask carrier and (n,c,h,w) tensors.
Tensor image_to_tensor(const LoadedImage& img, int want_channels);
GrayImage tensor_to_gray(const Tensor& t, int sample = 0, int channel = 0);
Tensor gray_to_tensor(const GrayImage& img);

}  // namespace gatenet
