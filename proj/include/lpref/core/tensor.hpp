#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lpref/core/errors.hpp"

namespace lpref {

// Dense row-major tensor of 64-bit floats. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_count(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (checked_count(shape_) != data_.size()) {
      throw InvalidArgument("tensor: shape does not match value count");
    }
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v) { return Tensor(std::move(shape), v); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Index into a [C,H,W] tensor.
  double& at3(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double at3(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  // Index into a [R,C] tensor.
  double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double item() const {
    if (size() != 1) throw InvalidArgument("tensor: item() on non-scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

 private:
  static std::size_t checked_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw InvalidArgument("tensor: zero extent in shape");
      n *= e;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor operator*(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

inline Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

inline Tensor operator*(const Tensor& a, double s) { return s * a; }

inline Tensor& operator+=(Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Tensor operator-(const Tensor& a) { return -1.0 * a; }

// y += s * x
inline void axpy(double s, const Tensor& x, Tensor& y) {
  check_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline double sum(const Tensor& a) {
  return std::accumulate(a.values().begin(), a.values().end(), 0.0);
}

inline double dot_flat(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot_flat(a, a)); }

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(const Tensor& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace lpref
