#include "gatenet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace gatenet {
namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("image '" + path + "': " + why);
}

std::string lower_ext(const std::string& path) {
  const size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

LoadedImage load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open for reading");

  unsigned char header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    fail(path, "not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "png_create_info_struct failed");
  }

  std::vector<png_bytep> row_ptrs;
  std::vector<unsigned char> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "libpng error while decoding");
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  const png_byte final_color = png_get_color_type(png, info);
  const int channels = final_color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  const size_t row_bytes = png_get_rowbytes(png, info);
  if (row_bytes != static_cast<size_t>(width) * channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unexpected PNG layout after transforms");
  }

  pixels.resize(static_cast<size_t>(height) * row_bytes);
  row_ptrs.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) {
    row_ptrs[y] = pixels.data() + static_cast<size_t>(y) * row_bytes;
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  LoadedImage img;
  img.h = static_cast<int>(height);
  img.w = static_cast<int>(width);
  img.channels = channels;
  img.v.resize(static_cast<size_t>(channels) * height * width);
  for (int c = 0; c < channels; ++c) {
    for (png_uint_32 y = 0; y < height; ++y) {
      for (png_uint_32 x = 0; x < width; ++x) {
        img.v[(static_cast<size_t>(c) * height + y) * width + x] =
            pixels[(static_cast<size_t>(y) * width + x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

int next_pgm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments.
  while (true) {
    const int c = in.peek();
    if (c == EOF) fail(path, "truncated PGM header");
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) fail(path, "malformed PGM header");
  return value;
}

LoadedImage load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  char magic[2];
  if (!in.read(magic, 2) || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '5')) {
    fail(path, "not a P2/P5 PGM file");
  }
  const bool binary = magic[1] == '5';
  const int width = next_pgm_token(in, path);
  const int height = next_pgm_token(in, path);
  const int maxval = next_pgm_token(in, path);
  if (width < 1 || height < 1) fail(path, "invalid PGM dimensions");
  if (maxval < 1 || maxval > 255) {
    fail(path, "unsupported PGM maxval " + std::to_string(maxval) + " (8-bit only)");
  }

  LoadedImage img;
  img.h = height;
  img.w = width;
  img.channels = 1;
  img.v.resize(static_cast<size_t>(height) * width);
  if (binary) {
    in.get();  // single whitespace byte after maxval
    std::vector<unsigned char> raw(img.v.size());
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      fail(path, "truncated PGM pixel data");
    }
    for (size_t i = 0; i < raw.size(); ++i) img.v[i] = raw[i] / static_cast<double>(maxval);
  } else {
    for (size_t i = 0; i < img.v.size(); ++i) {
      int value = 0;
      if (!(in >> value)) fail(path, "truncated PGM pixel data");
      if (value < 0 || value > maxval) fail(path, "PGM sample out of range");
      img.v[i] = value / static_cast<double>(maxval);
    }
  }
  return img;
}

void save_png(const GrayImage& img, const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "libpng error while encoding");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(img.w));
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double v = std::clamp(img.at(y, x), 0.0, 1.0);
      row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<size_t>(img.size()));
  for (long long i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.v[static_cast<size_t>(i)], 0.0, 1.0);
    raw[static_cast<size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(path, "write failed");
}

}  // namespace

LoadedImage load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail(path, "cannot open for reading");
  unsigned char sig[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(sig), 2);
  probe.close();
  if (sig[0] == 'P' && (sig[1] == '2' || sig[1] == '5')) return load_pgm(path);
  if (sig[0] == 0x89 && sig[1] == 'P') return load_png(path);
  fail(path, "unsupported format (expected 8-bit PNG or P2/P5 PGM)");
}

GrayImage load_mask(const std::string& path) {
  const LoadedImage img = load_image(path);
  GrayImage g(img.h, img.w);
  if (img.channels == 1) {
    std::copy(img.v.begin(), img.v.end(), g.v.begin());
    return g;
  }
  const size_t plane = static_cast<size_t>(img.h) * img.w;
  for (size_t i = 0; i < plane; ++i) {
    g.v[i] = 0.299 * img.v[i] + 0.587 * img.v[plane + i] + 0.114 * img.v[2 * plane + i];
  }
  return g;
}

void save_mask(const GrayImage& img, const std::string& path) {
  if (img.h < 1 || img.w < 1) fail(path, "empty image");
  const std::string ext = lower_ext(path);
  if (ext == "png") {
    save_png(img, path);
  } else if (ext == "pgm") {
    save_pgm(img, path);
  } else {
    fail(path, "unsupported output extension '" + ext + "' (use .png or .pgm)");
  }
}

Tensor image_to_tensor(const LoadedImage& img, int want_channels) {
  Tensor t(Shape{1, want_channels, img.h, img.w});
  const size_t plane = static_cast<size_t>(img.h) * img.w;
  for (int c = 0; c < want_channels; ++c) {
    const size_t src = img.channels == 1 ? 0 : static_cast<size_t>(std::min(c, img.channels - 1));
    std::copy_n(img.v.begin() + static_cast<long long>(src * plane), plane,
                t.values().begin() + static_cast<long long>(c) * static_cast<long long>(plane));
  }
  return t;
}

GrayImage tensor_to_gray(const Tensor& t, int sample, int channel) {
  GrayImage g(t.h(), t.w());
  for (int y = 0; y < t.h(); ++y) {
    for (int x = 0; x < t.w(); ++x) {
      g.at(y, x) = t.at(sample, channel, y, x);
    }
  }
  return g;
}

Tensor gray_to_tensor(const GrayImage& img) {
  Tensor t(Shape{1, 1, img.h, img.w});
  std::copy(img.v.begin(), img.v.end(), t.values().begin());
  return t;
}

}  // namespace gatenet
