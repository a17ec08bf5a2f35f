#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace twostage {

/// Dense row-major tensor of 64-bit floats. Immutable by convention once
/// handed to a Graph; plain value semantics everywhere else.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != data.size())
      throw std::invalid_argument("Tensor: shape/data size mismatch");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto v : s) n *= v;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(std::vector<std::size_t> s, double v) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  std::size_t rows() const {
    if (shape.empty()) throw std::logic_error("Tensor: rank 0");
    return shape[0];
  }
  std::size_t cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() != 2) throw std::logic_error("Tensor: not a matrix");
    return shape[1];
  }

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool shapes_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

// C = A * B, A: m x k, B: k x n.
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A * B^T, A: m x k, B: n x k.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C = A^T * B, A: k x m, B: k x n.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

}  // namespace twostage
