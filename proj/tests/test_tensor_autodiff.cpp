#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "twostage/graph.hpp"
#include "twostage/rng.hpp"
#include "twostage/tensor.hpp"

using namespace twostage;

namespace {

// Relative-error comparison restricted to coordinates with noticeable
// gradient, matching the check used everywhere below.
void check_close_grads(const Tensor& analytic, const Tensor& numeric,
                       double rel_tol) {
  REQUIRE(analytic.shape == numeric.shape);
  for (std::size_t i = 0; i < analytic.numel(); ++i) {
    const double a = analytic.data[i], n = numeric.data[i];
    if (std::abs(a) <= 1e-8 && std::abs(n) <= 1e-8) continue;
    const double denom = std::max(std::abs(a), std::abs(n));
    CHECK(std::abs(a - n) / denom < rel_tol);
  }
}

}  // namespace

TEST_CASE("forward values of basic ops") {
  Graph g;
  const int x = g.input(Tensor::scalar(3.0));
  CHECK(g.value(g.square(x)).data[0] == doctest::Approx(9.0));

  const int a = g.input(Tensor::full({2, 3}, 1.0));
  const int b = g.input(Tensor::full({3, 1}, 1.0));
  const Tensor& c = g.value(g.matmul(a, b));
  CHECK(c.shape == std::vector<std::size_t>({2, 1}));
  CHECK(c.data[0] == doctest::Approx(3.0));
  CHECK(c.data[1] == doctest::Approx(3.0));
}

TEST_CASE("log rejects non-positive input") {
  Graph g;
  const int x = g.input(Tensor::scalar(0.0));
  CHECK_THROWS_AS(g.log(x), std::domain_error);
}

TEST_CASE("matmul rejects inner-dimension mismatch") {
  Graph g;
  const int a = g.input(Tensor::zeros({2, 3}));
  const int b = g.input(Tensor::zeros({2, 4}));
  CHECK_THROWS_AS(g.matmul(a, b), std::invalid_argument);
}

TEST_CASE("backward: square at x=3 gives 6") {
  Graph g;
  const int x = g.param(Tensor::scalar(3.0));
  GradientMap grads = g.backward(g.square(x));
  CHECK(grads.at(x).data[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: mean of length-4 vector gives 0.25 per entry") {
  Graph g;
  const int x = g.param(Tensor::full({1, 4}, 2.0));
  GradientMap grads = g.backward(g.mean(x));
  for (double v : grads.at(x).data) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar root") {
  Graph g;
  const int x = g.param(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(g.backward(g.square(x)), std::invalid_argument);
}

TEST_CASE("backward: sum(tanh(W x)) matches finite differences") {
  std::mt19937_64 rng(42);
  Tensor w = randn(4, 3, rng, 0.5);
  Tensor x = randn(3, 2, rng, 0.5);

  Graph g;
  const int wid = g.param(w);
  const int xid = g.input(x);
  GradientMap grads = g.backward(g.sum(g.tanh(g.matmul(wid, xid))));

  auto loss = [&](const std::vector<Tensor>& p) {
    Tensor h = matmul(p[0], x);
    double acc = 0.0;
    for (double v : h.data) acc += std::tanh(v);
    return acc;
  };
  auto fd = finite_difference_grad(loss, {w}, 1e-5);
  check_close_grads(grads.at(wid), fd[0], 1e-6);
}

TEST_CASE("finite_difference_grad on p^2 and on constants") {
  auto quad = [](const std::vector<Tensor>& p) {
    return p[0].data[0] * p[0].data[0];
  };
  auto g = finite_difference_grad(quad, {Tensor::scalar(3.0)}, 1e-5);
  CHECK(g[0].data[0] == doctest::Approx(6.0).epsilon(1e-7));

  auto constant = [](const std::vector<Tensor>&) { return 7.0; };
  auto gz = finite_difference_grad(constant, {Tensor::zeros({2, 2})}, 1e-5);
  for (double v : gz[0].data) CHECK(v == 0.0);
}

TEST_CASE("finite_difference_grad rejects non-finite loss") {
  auto bad = [](const std::vector<Tensor>& p) {
    return std::log(p[0].data[0]);  // NaN once probed below zero
  };
  CHECK_THROWS_AS(finite_difference_grad(bad, {Tensor::scalar(1e-7)}, 1e-5),
                  std::domain_error);
}

TEST_CASE("gradient accumulation across fan-out") {
  // p feeds two branches; gradient must be the sum of both.
  Graph g;
  const int p = g.param(Tensor::scalar(2.0));
  const int branch1 = g.square(p);          // d/dp = 4
  const int branch2 = g.scalar_mul(p, 3.0); // d/dp = 3
  GradientMap grads = g.backward(g.add(branch1, branch2));

  // Same function with the parameter duplicated into independent leaves.
  Graph g2;
  const int p1 = g2.param(Tensor::scalar(2.0));
  const int p2 = g2.param(Tensor::scalar(2.0));
  GradientMap grads2 =
      g2.backward(g2.add(g2.square(p1), g2.scalar_mul(p2, 3.0)));
  CHECK(grads.at(p).data[0] ==
        doctest::Approx(grads2.at(p1).data[0] + grads2.at(p2).data[0]));
  CHECK(grads.at(p).data[0] == doctest::Approx(7.0));
}

TEST_CASE("forward determinism: identical graphs give bit-identical values") {
  std::mt19937_64 rng(7);
  Tensor w = randn(5, 5, rng);
  Tensor x = randn(5, 3, rng);
  auto build = [&]() {
    Graph g;
    const int out =
        g.sum(g.exp(g.scalar_mul(g.tanh(g.matmul(g.param(w), g.input(x))), 0.1)));
    return g.value(out).data[0];
  };
  CHECK(build() == build());
}

TEST_CASE("property: every op tag matches finite differences on random input") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    Tensor a = randn(m, k, rng, 0.4);
    Tensor b = randn(k, n, rng, 0.4);
    Tensor c = randn(m, k, rng, 0.4);
    Tensor bias = randn(1, k, rng, 0.4);
    bias.shape = {k};
    Tensor pos = a;
    for (double& v : pos.data) v = std::abs(v) + 0.5;

    struct Case {
      const char* name;
      std::vector<Tensor> params;
      std::function<int(Graph&, const std::vector<int>&)> build;
    };
    std::vector<Case> cases;
    cases.push_back({"matmul", {a, b}, [](Graph& g, const std::vector<int>& p) {
                       return g.sum(g.matmul(p[0], p[1]));
                     }});
    cases.push_back({"add+mul+sub", {a, c}, [](Graph& g, const std::vector<int>& p) {
                       return g.sum(g.mul(g.add(p[0], p[1]), g.sub(p[0], p[1])));
                     }});
    cases.push_back({"tanh/exp/square/mean", {a}, [](Graph& g, const std::vector<int>& p) {
                       return g.mean(g.square(g.exp(g.scalar_mul(g.tanh(p[0]), 0.7))));
                     }});
    cases.push_back({"log", {pos}, [](Graph& g, const std::vector<int>& p) {
                       return g.sum(g.log(p[0]));
                     }});
    cases.push_back({"bias_add", {a, bias}, [](Graph& g, const std::vector<int>& p) {
                       return g.sum(g.square(g.bias_add(p[0], p[1])));
                     }});
    cases.push_back({"scalar broadcast", {a}, [](Graph& g, const std::vector<int>& p) {
                       const int s = g.input(Tensor::scalar(0.3));
                       return g.sum(g.mul(g.add(p[0], s), s));
                     }});

    for (auto& cs : cases) {
      Graph g;
      std::vector<int> ids;
      for (const Tensor& t : cs.params) ids.push_back(g.param(t));
      const int root = cs.build(g, ids);
      GradientMap grads = g.backward(root);

      auto loss = [&](const std::vector<Tensor>& p) {
        Graph gg;
        std::vector<int> pid;
        for (const Tensor& t : p) pid.push_back(gg.input(t));
        return gg.value(cs.build(gg, pid)).data[0];
      };
      auto fd = finite_difference_grad(loss, cs.params, 1e-5);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        INFO("op case ", cs.name);
        check_close_grads(grads.at(ids[i]), fd[i], 1e-4);
      }
    }
  }
}
