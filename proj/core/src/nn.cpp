#include "twostage/nn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "twostage/rng.hpp"

namespace twostage {

MlpParams mlp_init(const std::vector<std::size_t>& layer_dims,
                   Activation activation, std::uint64_t seed) {
  if (layer_dims.size() < 2)
    throw std::invalid_argument("mlp_init: need at least input and output dim");
  for (auto d : layer_dims)
    if (d == 0) throw std::invalid_argument("mlp_init: zero layer dim");

  MlpParams p;
  p.layer_dims = layer_dims;
  p.activation = activation;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l], fan_out = layer_dims[l + 1];
    const double stddev =
        std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    p.weights.push_back(randn(fan_out, fan_in, rng, stddev));
    p.biases.push_back(Tensor::zeros({fan_out}));
  }
  return p;
}

MlpBinding mlp_forward(const MlpParams& params, int input_id, Graph& graph) {
  if (graph.value(input_id).shape.size() != 2 ||
      graph.value(input_id).shape[1] != params.in_dim())
    throw std::invalid_argument("mlp_forward: input width mismatch");

  MlpBinding b;
  int h = input_id;
  for (std::size_t l = 0; l < params.n_layers(); ++l) {
    const int w = graph.param(params.weights[l]);
    const int bias = graph.param(params.biases[l]);
    b.param_ids.push_back(w);
    b.param_ids.push_back(bias);
    h = graph.bias_add(graph.matmul_nt(h, w), bias);
    const bool hidden = l + 1 < params.n_layers();
    if (hidden && params.activation == Activation::kTanh) h = graph.tanh(h);
  }
  b.output = h;
  return b;
}

Tensor mlp_eval(const MlpParams& params, const Tensor& input) {
  if (input.shape.size() != 2 || input.shape[1] != params.in_dim())
    throw std::invalid_argument("mlp_eval: input width mismatch");
  Tensor h = input;
  for (std::size_t l = 0; l < params.n_layers(); ++l) {
    Tensor next = matmul_nt(h, params.weights[l]);
    const std::size_t nc = next.shape[1];
    for (std::size_t i = 0; i < next.shape[0]; ++i)
      for (std::size_t j = 0; j < nc; ++j)
        next.data[i * nc + j] += params.biases[l].data[j];
    const bool hidden = l + 1 < params.n_layers();
    if (hidden && params.activation == Activation::kTanh)
      for (double& v : next.data) v = std::tanh(v);
    h = std::move(next);
  }
  return h;
}

std::vector<Tensor*> mlp_param_ptrs(MlpParams& params) {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < params.n_layers(); ++l) {
    out.push_back(&params.weights[l]);
    out.push_back(&params.biases[l]);
  }
  return out;
}

AdamState adam_init(const std::vector<Tensor*>& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const Tensor* p : params) {
    s.m.push_back(Tensor::zeros(p->shape));
    s.v.push_back(Tensor::zeros(p->shape));
  }
  return s;
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
      v.data[i] =
          state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

}  // namespace twostage
