#include "twostage/vae.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "twostage/rng.hpp"

namespace twostage {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double VaeModel::gamma() const { return std::exp(log_gamma.data[0]); }

VaeModel vae_init(std::size_t ambient_dim, std::size_t kappa,
                  const std::vector<std::size_t>& hidden_dims,
                  std::uint64_t seed) {
  if (ambient_dim == 0 || kappa == 0)
    throw std::invalid_argument("vae_init: zero dimension");
  auto dims = [&](std::size_t in, std::size_t out) {
    std::vector<std::size_t> d;
    d.push_back(in);
    d.insert(d.end(), hidden_dims.begin(), hidden_dims.end());
    d.push_back(out);
    return d;
  };
  VaeModel m;
  m.kappa = kappa;
  m.ambient_dim = ambient_dim;
  m.encoder_mu = mlp_init(dims(ambient_dim, kappa), Activation::kTanh,
                          substream_seed(seed, "enc-mu"));
  m.encoder_logvar = mlp_init(dims(ambient_dim, kappa), Activation::kTanh,
                              substream_seed(seed, "enc-logvar"));
  m.decoder_mu = mlp_init(dims(kappa, ambient_dim), Activation::kTanh,
                          substream_seed(seed, "dec-mu"));
  m.log_gamma = Tensor::scalar(0.0);
  return m;
}

EncodeResult encode(const VaeModel& model, const Tensor& x) {
  if (x.shape.size() != 2 || x.shape[1] != model.ambient_dim)
    throw std::invalid_argument("encode: input width mismatch");
  EncodeResult r;
  r.mu = mlp_eval(model.encoder_mu, x);
  r.logvar = mlp_eval(model.encoder_logvar, x);
  for (double& v : r.logvar.data)
    v = std::clamp(v, kLogVarLo, kLogVarHi);
  return r;
}

Tensor decode(const VaeModel& model, const Tensor& z) {
  if (z.shape.size() != 2 || z.shape[1] != model.kappa)
    throw std::invalid_argument("decode: input width mismatch");
  return mlp_eval(model.decoder_mu, z);
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar,
                      const Tensor& eps) {
  if (!mu.same_shape(logvar) || !mu.same_shape(eps))
    throw std::invalid_argument("reparameterize: shape mismatch");
  Tensor z = mu;
  for (std::size_t i = 0; i < z.numel(); ++i)
    z.data[i] += std::exp(0.5 * logvar.data[i]) * eps.data[i];
  return z;
}

double kl_term(const Tensor& mu, const Tensor& logvar) {
  if (!mu.same_shape(logvar))
    throw std::invalid_argument("kl_term: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.numel(); ++i) {
    const double lv = logvar.data[i];
    acc += std::exp(lv) + mu.data[i] * mu.data[i] - lv - 1.0;
  }
  return 0.5 * acc / static_cast<double>(mu.shape[0]);
}

double recon_term(const Tensor& x, const Tensor& mu_x, double log_gamma) {
  if (!x.same_shape(mu_x))
    throw std::invalid_argument("recon_term: shape mismatch");
  const double gamma = std::exp(log_gamma);
  const std::size_t batch = x.shape[0];
  const double d = static_cast<double>(x.shape[1]);
  double sse = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double r = x.data[i] - mu_x.data[i];
    sse += r * r;
  }
  return 0.5 * (sse / gamma / static_cast<double>(batch) +
                d * (kLog2Pi + log_gamma));
}

std::vector<Tensor*> trainable_params(VaeModel& model, bool gamma_trainable) {
  std::vector<Tensor*> out;
  for (Tensor* t : mlp_param_ptrs(model.encoder_mu)) out.push_back(t);
  for (Tensor* t : mlp_param_ptrs(model.encoder_logvar)) out.push_back(t);
  for (Tensor* t : mlp_param_ptrs(model.decoder_mu)) out.push_back(t);
  if (gamma_trainable) out.push_back(&model.log_gamma);
  return out;
}

void build_elbo(VaeModel& model, const Tensor& x, const Tensor& eps,
                bool gamma_trainable, ElboGraph& out) {
  const std::size_t batch = x.shape[0];
  if (x.shape.size() != 2 || x.shape[1] != model.ambient_dim)
    throw std::invalid_argument("build_elbo: data width mismatch");
  if (eps.shape != std::vector<std::size_t>{batch, model.kappa})
    throw std::invalid_argument("build_elbo: eps shape mismatch");

  out = ElboGraph{};
  Graph& g = out.graph;
  const double b = static_cast<double>(batch);
  const double d = static_cast<double>(model.ambient_dim);

  const int xin = g.input(x);
  const int epsin = g.input(eps);

  MlpBinding enc_mu = mlp_forward(model.encoder_mu, xin, g);
  MlpBinding enc_lv = mlp_forward(model.encoder_logvar, xin, g);
  const int lv = g.clamp(enc_lv.output, kLogVarLo, kLogVarHi);

  // z = mu + exp(lv/2) .* eps
  const int z =
      g.add(enc_mu.output, g.mul(g.exp(g.scalar_mul(lv, 0.5)), epsin));
  MlpBinding dec = mlp_forward(model.decoder_mu, z, g);

  // Reconstruction: 1/(2B) * sum((x - mu_x)^2) / gamma + d/2 (log 2pi + lg)
  const int lg = gamma_trainable ? g.param(model.log_gamma)
                                 : g.input(model.log_gamma);
  out.sse = g.sum(g.square(g.sub(xin, dec.output)));
  const int inv_gamma = g.exp(g.scalar_mul(lg, -1.0));
  const int quad = g.scalar_mul(g.mul(inv_gamma, out.sse), 0.5 / b);
  const int log_part =
      g.scalar_mul(g.add(lg, g.input(Tensor::scalar(kLog2Pi))), 0.5 * d);
  const int recon = g.add(quad, log_part);

  // KL: 1/(2B) * sum(exp(lv) + mu^2 - lv - 1)
  const int ones = g.input(Tensor::scalar(1.0));
  const int kl_elems =
      g.sub(g.sub(g.add(g.exp(lv), g.square(enc_mu.output)), lv), ones);
  out.kl_sum = g.sum(kl_elems);
  const int kl = g.scalar_mul(out.kl_sum, 0.5 / b);

  out.loss = g.add(recon, kl);

  out.param_ids = enc_mu.param_ids;
  out.param_ids.insert(out.param_ids.end(), enc_lv.param_ids.begin(),
                       enc_lv.param_ids.end());
  out.param_ids.insert(out.param_ids.end(), dec.param_ids.begin(),
                       dec.param_ids.end());
  if (gamma_trainable) out.param_ids.push_back(lg);
  out.param_tensors = trainable_params(model, gamma_trainable);
}

double elbo_loss_value(const VaeModel& model, const Tensor& x,
                       const Tensor& eps) {
  EncodeResult enc = encode(model, x);
  Tensor z = reparameterize(enc.mu, enc.logvar, eps);
  Tensor mu_x = mlp_eval(model.decoder_mu, z);
  return recon_term(x, mu_x, model.log_gamma.data[0]) +
         kl_term(enc.mu, enc.logvar);
}

TrainTrace train(VaeModel& model, const Tensor& data,
                 const TrainConfig& config) {
  const std::size_t n = data.shape[0];
  const std::size_t d = data.shape[1];
  if (config.batch_size < 1 || config.epochs < 1)
    throw std::invalid_argument("train: batch_size and epochs must be >= 1");
  if (n < config.batch_size)
    throw std::invalid_argument("train: fewer rows than batch_size");
  if (d != model.ambient_dim)
    throw std::invalid_argument("train: data width mismatch");

  if (!config.gamma_trainable) {
    if (!(config.fixed_gamma > 0.0))
      throw std::invalid_argument("train: fixed_gamma must be positive");
    model.log_gamma.data[0] = std::log(config.fixed_gamma);
  }

  std::vector<Tensor*> params = trainable_params(model, config.gamma_trainable);
  AdamState adam = adam_init(params, config.base_lr);
  std::mt19937_64 shuffle_rng = make_rng(config.seed, "shuffle");
  std::mt19937_64 noise_rng = make_rng(config.seed, "noise");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t bs = config.batch_size;
  const std::size_t n_batches = n / bs;
  TrainTrace trace;
  ElboGraph eg;
  Tensor xb = Tensor::zeros({bs, d});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    adam.lr = lr_schedule(config.base_lr, epoch, config.lr_half_every);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double ep_loss = 0.0, ep_sse = 0.0, ep_kl = 0.0;
    for (std::size_t bidx = 0; bidx < n_batches; ++bidx) {
      for (std::size_t i = 0; i < bs; ++i) {
        const std::size_t src = order[bidx * bs + i];
        std::copy_n(data.data.begin() + src * d, d, xb.data.begin() + i * d);
      }
      Tensor eps = randn(bs, model.kappa, noise_rng);

      try {
        build_elbo(model, xb, eps, config.gamma_trainable, eg);
      } catch (const std::domain_error&) {
        trace.diverged = true;
        return trace;
      }
      const double loss = eg.graph.value(eg.loss).data[0];
      if (!std::isfinite(loss)) {
        trace.diverged = true;
        return trace;
      }
      ep_loss += loss;
      ep_sse += eg.graph.value(eg.sse).data[0];
      ep_kl += eg.graph.value(eg.kl_sum).data[0] * 0.5 / static_cast<double>(bs);

      GradientMap grads = eg.graph.backward(eg.loss);
      std::vector<const Tensor*> gptrs;
      gptrs.reserve(eg.param_ids.size());
      for (int id : eg.param_ids) gptrs.push_back(&grads.at(id));
      adam_step(adam, eg.param_tensors, gptrs);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.neg_elbo = ep_loss / static_cast<double>(n_batches);
    rec.recon_mse =
        ep_sse / static_cast<double>(n_batches * bs * d);
    rec.kl = ep_kl / static_cast<double>(n_batches);
    rec.log_gamma = model.log_gamma.data[0];
    trace.epochs.push_back(rec);
  }
  return trace;
}

Tensor sample_ancestral(const VaeModel& model, std::size_t n,
                        std::uint64_t seed, bool means_only) {
  std::mt19937_64 prior_rng = make_rng(seed, "prior");
  Tensor z = randn(n, model.kappa, prior_rng);
  Tensor x = decode(model, z);
  if (!means_only) {
    std::mt19937_64 obs_rng = make_rng(seed, "obs-noise");
    const double s = std::sqrt(model.gamma());
    Tensor noise = randn(n, model.ambient_dim, obs_rng, s);
    for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] += noise.data[i];
  }
  return x;
}

Tensor optimal_posterior_covariance(const Tensor& jacobian, double gamma) {
  if (!(gamma > 0.0))
    throw std::invalid_argument("optimal_posterior_covariance: gamma <= 0");
  if (jacobian.shape.size() != 2)
    throw std::invalid_argument("optimal_posterior_covariance: need a matrix");
  const std::size_t d = jacobian.shape[0], kappa = jacobian.shape[1];
  Eigen::MatrixXd j(d, kappa);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < kappa; ++k) j(i, k) = jacobian.at(i, k);
  Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(kappa, kappa) + j.transpose() * j / gamma;
  Eigen::MatrixXd inv =
      a.ldlt().solve(Eigen::MatrixXd::Identity(kappa, kappa));
  Tensor out = Tensor::zeros({kappa, kappa});
  for (std::size_t i = 0; i < kappa; ++i)
    for (std::size_t k = 0; k < kappa; ++k) out.at(i, k) = inv(i, k);
  return out;
}

}  // namespace twostage
