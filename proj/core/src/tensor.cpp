#include "twostage/tensor.hpp"

namespace twostage {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.shape.size() != 2)
    throw std::invalid_argument(std::string(what) + ": expected a matrix");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k)
    throw std::invalid_argument("matmul: inner dimensions " +
                                std::to_string(k) + " vs " +
                                std::to_string(b.shape[0]));
  Tensor c = Tensor::zeros({m, n});
  const double* ad = a.data.data();
  const double* bd = b.data.data();
  double* cd = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      const double* brow = bd + p * n;
      double* crow = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  if (b.shape[1] != k)
    throw std::invalid_argument("matmul_nt: inner dimensions " +
                                std::to_string(k) + " vs " +
                                std::to_string(b.shape[1]));
  Tensor c = Tensor::zeros({m, n});
  const double* ad = a.data.data();
  const double* bd = b.data.data();
  double* cd = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = ad + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = bd + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      cd[i * n + j] = acc;
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k)
    throw std::invalid_argument("matmul_tn: inner dimensions " +
                                std::to_string(k) + " vs " +
                                std::to_string(b.shape[0]));
  Tensor c = Tensor::zeros({m, n});
  const double* ad = a.data.data();
  const double* bd = b.data.data();
  double* cd = c.data.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = ad + p * m;
    const double* brow = bd + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

}  // namespace twostage
