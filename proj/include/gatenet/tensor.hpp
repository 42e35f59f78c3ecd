#pragma once

#include <string>
#include <vector>

namespace gatenet {

// Dense 4-D array (batch, channel, height, width), row-major, 64-bit reals.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  long long numel() const { return 1LL * n * c * h * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

class Tensor {
 public:
  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(const Shape& s, double fill = 0.0);
  Tensor(const Shape& s, std::vector<double> values);

  static Tensor scalar(double v);

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  long long size() const { return static_cast<long long>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  long long index(int in, int ic, int iy, int ix) const {
    return ((1LL * in * shape_.c + ic) * shape_.h + iy) * shape_.w + ix;
  }
  double& at(int in, int ic, int iy, int ix) { return data_[index(in, ic, iy, ix)]; }
  double at(int in, int ic, int iy, int ix) const { return data_[index(in, ic, iy, ix)]; }
  double& operator[](long long i) { return data_[i]; }
  double operator[](long long i) const { return data_[i]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool bit_equal(const Tensor& o) const;
  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace gatenet
