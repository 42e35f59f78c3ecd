#include "gatenet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace gatenet {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(const Shape& s, double fill) : shape_(s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw std::invalid_argument("Tensor: all dims must be >= 1, got " + to_string(s));
  }
  data_.assign(static_cast<size_t>(s.numel()), fill);
}

Tensor::Tensor(const Shape& s, std::vector<double> values) : shape_(s), data_(std::move(values)) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw std::invalid_argument("Tensor: all dims must be >= 1, got " + to_string(s));
  }
  if (static_cast<long long>(data_.size()) != s.numel()) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + to_string(s));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, std::vector<double>{v}); }

bool Tensor::bit_equal(const Tensor& o) const {
  if (!(shape_ == o.shape_)) return false;
  return std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace gatenet
