#pragma once

#include <cstdint>
#include <vector>

#include "twostage/graph.hpp"
#include "twostage/nn.hpp"
#include "twostage/tensor.hpp"

namespace twostage {

inline constexpr double kLogVarLo = -20.0;
inline constexpr double kLogVarHi = 5.0;

/// Gaussian encoder (diagonal covariance) + Gaussian decoder with a single
/// trainable variance scalar gamma = exp(log_gamma).
struct VaeModel {
  MlpParams encoder_mu;      // d -> kappa
  MlpParams encoder_logvar;  // d -> kappa
  MlpParams decoder_mu;      // kappa -> d
  Tensor log_gamma = Tensor::scalar(0.0);
  std::size_t kappa = 0;
  std::size_t ambient_dim = 0;

  double gamma() const;
};

/// Hidden layer widths apply to all three nets. log_gamma starts at 0
/// (gamma = 1).
VaeModel vae_init(std::size_t ambient_dim, std::size_t kappa,
                  const std::vector<std::size_t>& hidden_dims,
                  std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t batch_size = 100;
  double base_lr = 1e-4;
  std::size_t lr_half_every = 150;
  std::uint64_t seed = 0;
  bool gamma_trainable = true;
  double fixed_gamma = 1.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double neg_elbo = 0.0;
  double recon_mse = 0.0;  // mean squared residual per coordinate
  double kl = 0.0;
  double log_gamma = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  bool diverged = false;
};

/// Mean/log-variance heads, graph-free. Log-variances come back already
/// clamped to [kLogVarLo, kLogVarHi].
struct EncodeResult {
  Tensor mu;
  Tensor logvar;
};
EncodeResult encode(const VaeModel& model, const Tensor& x);

Tensor decode(const VaeModel& model, const Tensor& z);

/// z = mu + exp(logvar/2) .* eps
Tensor reparameterize(const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps);

/// Closed-form KL(q(z|x) || N(0,I)) averaged over the batch:
/// per row 1/2 sum_j (exp(lv_j) + mu_j^2 - lv_j - 1).
double kl_term(const Tensor& mu, const Tensor& logvar);

/// Gaussian decoder NLL averaged over the batch:
/// 1/2 [ ||x - mu_x||^2 / gamma + d log(2 pi gamma) ].
double recon_term(const Tensor& x, const Tensor& mu_x, double log_gamma);

/// Full negative-ELBO graph. Exposes the param binding so training can map
/// gradients back, plus cached node ids for trace extraction.
struct ElboGraph {
  Graph graph;
  int loss = -1;
  int sse = -1;       // sum of squared residuals
  int kl_sum = -1;    // summed KL before the 1/(2B) factor
  std::vector<int> param_ids;           // aligned with trainable_params()
  std::vector<Tensor*> param_tensors;   // same order
};

/// Trainable tensors in declaration order: encoder_mu, encoder_logvar,
/// decoder_mu, then log_gamma when trainable.
std::vector<Tensor*> trainable_params(VaeModel& model, bool gamma_trainable);

void build_elbo(VaeModel& model, const Tensor& x, const Tensor& eps,
                bool gamma_trainable, ElboGraph& out);

/// Scalar negative ELBO without a tape (for checks and tracing).
double elbo_loss_value(const VaeModel& model, const Tensor& x,
                       const Tensor& eps);

TrainTrace train(VaeModel& model, const Tensor& data,
                 const TrainConfig& config);

/// z ~ N(0,I) decoded through the model; adds sqrt(gamma) observation noise
/// unless means_only. Prior draws come from the "prior" sub-stream, noise
/// from "obs-noise", so a mean-decoding run and a noisy one share z draws.
Tensor sample_ancestral(const VaeModel& model, std::size_t n,
                        std::uint64_t seed, bool means_only = true);

/// (I + J^T J / gamma)^-1 for a d x kappa Jacobian, via symmetric solve.
Tensor optimal_posterior_covariance(const Tensor& jacobian, double gamma);

}  // namespace twostage
