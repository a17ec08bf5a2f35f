#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "twostage/nn.hpp"
#include "twostage/rng.hpp"

using namespace twostage;

TEST_CASE("mlp_init determinism and shapes") {
  MlpParams a = mlp_init({2, 3}, Activation::kTanh, 99);
  MlpParams b = mlp_init({2, 3}, Activation::kTanh, 99);
  CHECK(a.weights[0].data == b.weights[0].data);

  MlpParams c = mlp_init({2, 3}, Activation::kTanh, 100);
  CHECK(a.weights[0].data != c.weights[0].data);

  MlpParams d = mlp_init({4, 16, 4}, Activation::kTanh, 1);
  CHECK(d.weights[0].shape == std::vector<std::size_t>({16, 4}));
  CHECK(d.weights[1].shape == std::vector<std::size_t>({4, 16}));
  CHECK(d.biases[0].numel() == 16);
  CHECK(d.biases[1].numel() == 4);

  CHECK_THROWS_AS(mlp_init({0, 3}, Activation::kTanh, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(mlp_init({3}, Activation::kTanh, 1), std::invalid_argument);
}

TEST_CASE("mlp_forward zero net and identity net") {
  MlpParams zero = mlp_init({3, 4, 2}, Activation::kTanh, 5);
  for (auto& w : zero.weights)
    for (double& v : w.data) v = 0.0;
  std::mt19937_64 rng(1);
  Tensor x = randn(6, 3, rng);
  Tensor y = mlp_eval(zero, x);
  for (double v : y.data) CHECK(v == 0.0);

  MlpParams ident = mlp_init({2, 2}, Activation::kIdentity, 5);
  ident.weights[0] = Tensor({2, 2}, {1, 0, 0, 1});
  Tensor x2 = randn(4, 2, rng);
  Tensor y2 = mlp_eval(ident, x2);
  for (std::size_t i = 0; i < x2.numel(); ++i)
    CHECK(y2.data[i] == doctest::Approx(x2.data[i]));
}

TEST_CASE("mlp_forward width mismatch rejected") {
  MlpParams p = mlp_init({3, 2}, Activation::kTanh, 0);
  std::mt19937_64 rng(1);
  Tensor x = randn(2, 4, rng);
  CHECK_THROWS_AS(mlp_eval(p, x), std::invalid_argument);
}

TEST_CASE("mlp gradients match finite differences") {
  MlpParams p = mlp_init({3, 5, 2}, Activation::kTanh, 77);
  std::mt19937_64 rng(3);
  Tensor x = randn(4, 3, rng);

  Graph g;
  MlpBinding b = mlp_forward(p, g.input(x), g);
  GradientMap grads = g.backward(g.sum(b.output));

  std::vector<Tensor*> ptrs = mlp_param_ptrs(p);
  std::vector<Tensor> tensors;
  for (Tensor* t : ptrs) tensors.push_back(*t);
  auto loss = [&](const std::vector<Tensor>& ts) {
    MlpParams q = p;
    std::size_t i = 0;
    for (Tensor* t : mlp_param_ptrs(q)) *t = ts[i++];
    double acc = 0.0;
    for (double v : mlp_eval(q, x).data) acc += v;
    return acc;
  };
  auto fd = finite_difference_grad(loss, tensors, 1e-5);
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const Tensor& a = grads.at(b.param_ids[i]);
    for (std::size_t j = 0; j < a.numel(); ++j) {
      if (std::abs(a.data[j]) <= 1e-8 && std::abs(fd[i].data[j]) <= 1e-8)
        continue;
      const double denom = std::max(std::abs(a.data[j]), std::abs(fd[i].data[j]));
      CHECK(std::abs(a.data[j] - fd[i].data[j]) / denom < 1e-4);
    }
  }
}

TEST_CASE("mlp graph forward equals plain eval and is batch-equivariant") {
  MlpParams p = mlp_init({3, 8, 4}, Activation::kTanh, 11);
  std::mt19937_64 rng(4);
  Tensor x = randn(5, 3, rng);
  Graph g;
  MlpBinding b = mlp_forward(p, g.input(x), g);
  Tensor plain = mlp_eval(p, x);
  CHECK(g.value(b.output).data == plain.data);

  // Reversing the batch rows reverses the output rows identically.
  Tensor xr = x;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) xr.at(i, j) = x.at(4 - i, j);
  Tensor yr = mlp_eval(p, xr);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(yr.at(i, j) == plain.at(4 - i, j));
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
  Tensor p = Tensor::scalar(0.0);
  std::vector<Tensor*> params = {&p};
  AdamState s = adam_init(params, 0.1);
  Tensor g = Tensor::scalar(0.5);
  adam_step(s, params, {&g});
  CHECK(p.data[0] == doctest::Approx(-0.1).epsilon(1e-5));
  CHECK(s.step == 1);
}

TEST_CASE("adam zero gradient is an exact fixed point") {
  std::mt19937_64 rng(9);
  Tensor p = randn(3, 3, rng);
  const Tensor before = p;
  std::vector<Tensor*> params = {&p};
  AdamState s = adam_init(params, 0.1);
  Tensor g = Tensor::zeros({3, 3});
  for (int i = 0; i < 5; ++i) adam_step(s, params, {&g});
  CHECK(p.data == before.data);
}

TEST_CASE("adam shape mismatch rejected") {
  Tensor p = Tensor::zeros({2, 2});
  std::vector<Tensor*> params = {&p};
  AdamState s = adam_init(params, 0.1);
  Tensor g = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(adam_step(s, params, {&g}), std::invalid_argument);
}

TEST_CASE("adam converges on (p-3)^2 from p=0 with lr 0.1") {
  Tensor p = Tensor::scalar(0.0);
  std::vector<Tensor*> params = {&p};
  AdamState s = adam_init(params, 0.1);
  for (int step = 0; step < 200; ++step) {
    Tensor g = Tensor::scalar(2.0 * (p.data[0] - 3.0));
    adam_step(s, params, {&g});
  }
  CHECK(std::abs(p.data[0] - 3.0) < 0.1);
}

TEST_CASE("adam descends monotonically on a quadratic before the crossing") {
  // Momentum makes Adam overshoot once the iterate crosses the minimizer,
  // so monotonicity is checked in the approach phase (lr small enough that
  // 200 steps stay on one side of the optimum).
  Tensor p = Tensor::scalar(0.0);
  std::vector<Tensor*> params = {&p};
  AdamState s = adam_init(params, 0.01);
  double prev_loss = 1e300;
  for (int step = 0; step < 200; ++step) {
    const double loss = (p.data[0] - 3.0) * (p.data[0] - 3.0);
    if (step >= 10) CHECK(loss < prev_loss);
    prev_loss = loss;
    Tensor g = Tensor::scalar(2.0 * (p.data[0] - 3.0));
    adam_step(s, params, {&g});
  }
  CHECK(p.data[0] < 3.0);
}

TEST_CASE("lr_schedule halves every interval") {
  CHECK(lr_schedule(1e-4, 0, 150) == doctest::Approx(1e-4));
  CHECK(lr_schedule(1e-4, 150, 150) == doctest::Approx(5e-5));
  CHECK(lr_schedule(1e-4, 299, 150) == doctest::Approx(5e-5));
  CHECK(lr_schedule(1e-4, 300, 150) == doctest::Approx(2.5e-5));
  CHECK_THROWS_AS(lr_schedule(1e-4, 0, 0), std::invalid_argument);
}
