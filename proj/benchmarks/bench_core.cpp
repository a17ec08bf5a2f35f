#include <benchmark/benchmark.h>

#include <random>

#include "twostage/diagnostics.hpp"
#include "twostage/graph.hpp"
#include "twostage/manifold.hpp"
#include "twostage/rng.hpp"
#include "twostage/vae.hpp"

using namespace twostage;

namespace {

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  Tensor a = randn(n, n, rng);
  Tensor b = randn(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_ElboForwardBackward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  VaeModel model = vae_init(10, 5, {64, 64}, 1);
  std::mt19937_64 rng(2);
  Tensor x = randn(batch, 10, rng);
  Tensor eps = randn(batch, 5, rng);
  for (auto _ : state) {
    ElboGraph eg;
    build_elbo(model, x, eps, true, eg);
    benchmark::DoNotOptimize(eg.graph.backward(eg.loss));
  }
}
BENCHMARK(BM_ElboForwardBackward)->Arg(100);

void BM_Mmd(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  Tensor x = randn(n, 8, rng);
  Tensor y = randn(n, 8, rng);
  for (auto _ : state) benchmark::DoNotOptimize(mmd(x, y));
}
BENCHMARK(BM_Mmd)->Arg(500)->Arg(2000);

void BM_CdfInverse(benchmark::State& state) {
  CdfTable table = build_cdf(density_preset("mixture-1d"));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (auto _ : state) benchmark::DoNotOptimize(inv_cdf_F(table, u(rng)));
}
BENCHMARK(BM_CdfInverse);

}  // namespace

BENCHMARK_MAIN();
