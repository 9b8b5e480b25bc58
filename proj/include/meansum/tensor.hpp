#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace meansum {

// Dense row-major tensor of doubles. All compute in this project runs in
// float64 so finite-difference gradient checks are meaningful.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (count(shape) != data.size()) {
      throw std::invalid_argument("Tensor: shape/data size mismatch");
    }
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(std::initializer_list<std::size_t> dims) {
    std::vector<std::size_t> s(dims);
    return Tensor(s, std::vector<double>(count(s), 0.0));
  }
  static Tensor zeros(const std::vector<std::size_t>& s) {
    return Tensor(s, std::vector<double>(count(s), 0.0));
  }
  static Tensor zeros_like(const Tensor& t) { return zeros(t.shape); }
  static Tensor full(std::initializer_list<std::size_t> dims, double v) {
    std::vector<std::size_t> s(dims);
    return Tensor(s, std::vector<double>(count(s), v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor from(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  std::size_t rows() const {
    if (rank() != 2) throw std::logic_error("Tensor::rows: not a matrix");
    return shape[0];
  }
  std::size_t cols() const {
    if (rank() != 2) throw std::logic_error("Tensor::cols: not a matrix");
    return shape[1];
  }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

inline double squared_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return s;
}

}  // namespace meansum
