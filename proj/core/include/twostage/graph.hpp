#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "twostage/tensor.hpp"

namespace twostage {

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kMatMul,     // A * B
  kMatMulNT,   // A * B^T (x * W^T for out-major weights)
  kAdd,
  kSub,
  kMul,        // elementwise; scalar operand broadcasts
  kScalarMul,  // constant factor
  kTanh,
  kExp,
  kLog,
  kSquare,
  kSum,
  kMean,
  kBiasAdd,    // matrix + row vector
  kClamp,
};

const char* op_name(Op op);

/// Gradients of a scalar root with respect to parameter nodes, keyed by
/// node id. Each entry has the shape of its parameter.
using GradientMap = std::unordered_map<int, Tensor>;

/// Append-only tape. Nodes cache their forward value at construction; one
/// backward pass walks the tape in reverse, accumulating gradients across
/// fan-out. A Graph is confined to a single thread.
class Graph {
 public:
  int input(Tensor value);
  int param(Tensor value);

  int matmul(int a, int b);
  int matmul_nt(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scalar_mul(int a, double factor);
  int tanh(int a);
  int exp(int a);
  int log(int a);
  int square(int a);
  int sum(int a);
  int mean(int a);
  int bias_add(int mat, int row);
  int clamp(int a, double lo, double hi);

  const Tensor& value(int id) const { return nodes_.at(id).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar root. Returns gradients for parameter
  /// nodes only.
  GradientMap backward(int root) const;

 private:
  struct Node {
    Op op;
    std::array<int, 2> parents{-1, -1};
    Tensor value;
    double a = 0.0;  // scalar factor / clamp lo
    double b = 0.0;  // clamp hi
  };

  int push(Node n);
  const Tensor& val(int id) const { return nodes_[id].value; }
  void check_id(int id) const;

  std::vector<Node> nodes_;
  std::vector<int> params_;
};

/// Central-difference gradient oracle: (f(p + h e) - f(p - h e)) / 2h per
/// coordinate. Independent of the tape; used to check backward().
std::vector<Tensor> finite_difference_grad(
    const std::function<double(const std::vector<Tensor>&)>& loss,
    std::vector<Tensor> params, double h);

}  // namespace twostage
