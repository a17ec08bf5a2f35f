#pragma once

#include <cstdint>
#include <vector>

#include "twostage/graph.hpp"
#include "twostage/tensor.hpp"

namespace twostage {

enum class Activation : std::uint8_t { kTanh, kIdentity };

/// Fully connected net. Weight l is layer_dims[l+1] x layer_dims[l]
/// (out-major); hidden layers apply the activation, the output layer is
/// always affine.
struct MlpParams {
  std::vector<std::size_t> layer_dims;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  Activation activation = Activation::kTanh;

  std::size_t in_dim() const { return layer_dims.front(); }
  std::size_t out_dim() const { return layer_dims.back(); }
  std::size_t n_layers() const { return weights.size(); }
};

/// Xavier-style init: weights ~ N(0, 2/(fan_in+fan_out)), biases zero.
MlpParams mlp_init(const std::vector<std::size_t>& layer_dims,
                   Activation activation, std::uint64_t seed);

/// Node ids of one graph binding of an MLP; weight/bias ids interleave in
/// layer order so gradients can be collected back positionally.
struct MlpBinding {
  std::vector<int> param_ids;  // w0, b0, w1, b1, ...
  int output = -1;
};

MlpBinding mlp_forward(const MlpParams& params, int input_id, Graph& graph);

/// Plain evaluation without a tape; same arithmetic as mlp_forward.
Tensor mlp_eval(const MlpParams& params, const Tensor& input);

struct AdamState {
  std::size_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<Tensor> m;  // first moments, one per parameter tensor
  std::vector<Tensor> v;  // second moments
};

AdamState adam_init(const std::vector<Tensor*>& params, double lr);

/// Bias-corrected Adam update in place. grads must align with params.
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads);

inline double lr_schedule(double base_lr, std::size_t epoch,
                          std::size_t half_every) {
  if (half_every < 1)
    throw std::invalid_argument("lr_schedule: half_every < 1");
  double lr = base_lr;
  for (std::size_t k = 0; k < epoch / half_every; ++k) lr *= 0.5;
  return lr;
}

/// All trainable tensors of an MLP in binding order (w0, b0, w1, b1, ...).
std::vector<Tensor*> mlp_param_ptrs(MlpParams& params);

}  // namespace twostage
