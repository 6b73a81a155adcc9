#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace daufi::nn {

// Shape of a rank-4 feature map: (batch, height, width, channels), NHWC.
struct Shape {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * h * w * c;
  }
  bool operator==(const Shape& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," +
           std::to_string(w) + "," + std::to_string(c) + ")";
  }
};

// Dense double-precision rank-4 array, row-major NHWC.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape_(s), data_(check_size(s), fill) {}

  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double v) { return Tensor(s, v); }
  static Tensor scalar(double v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& at(int b, int y, int x, int ch) {
    return data_[idx(b, y, x, ch)];
  }
  double at(int b, int y, int x, int ch) const {
    return data_[idx(b, y, x, ch)];
  }
  double& operator[](std::int64_t i) { return data_[i]; }
  double operator[](std::int64_t i) const { return data_[i]; }

  std::int64_t idx(int b, int y, int x, int ch) const {
    return ((static_cast<std::int64_t>(b) * shape_.h + y) * shape_.w + x) *
               shape_.c +
           ch;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

 private:
  static std::size_t check_size(Shape s) {
    if (s.n <= 0 || s.h <= 0 || s.w <= 0 || s.c <= 0)
      throw std::invalid_argument("Tensor: all dims must be positive, got " +
                                  s.str());
    return static_cast<std::size_t>(s.numel());
  }

  Shape shape_{};
  std::vector<double> data_;
};

}  // namespace daufi::nn
