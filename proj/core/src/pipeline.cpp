#include "twostage/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "twostage/rng.hpp"

namespace twostage {

LatentBatch extract_latents(const VaeModel& stage1, const Tensor& data,
                            std::uint64_t seed) {
  if (data.shape.size() != 2 || data.shape[1] != stage1.ambient_dim)
    throw std::invalid_argument("extract_latents: data width mismatch");
  EncodeResult enc = encode(stage1, data);
  std::mt19937_64 rng = make_rng(seed, "latent-extract");
  Tensor eps = randn(data.shape[0], stage1.kappa, rng);
  return {reparameterize(enc.mu, enc.logvar, eps), seed};
}

VaeModel train_second_stage(const LatentBatch& latents,
                            const TrainConfig& config,
                            const std::vector<std::size_t>& hidden_dims,
                            std::uint64_t init_seed, TrainTrace* trace) {
  if (latents.z.numel() == 0)
    throw std::invalid_argument("train_second_stage: empty latent batch");
  const std::size_t kappa = latents.z.shape[1];
  VaeModel model = vae_init(kappa, kappa, hidden_dims, init_seed);
  if (config.epochs == 0) {
    if (trace) *trace = TrainTrace{};
    return model;
  }
  TrainTrace t = train(model, latents.z, config);
  if (trace) *trace = std::move(t);
  return model;
}

Tensor two_stage_sample(const TwoStageModel& model, std::size_t n,
                        std::uint64_t seed, bool noisy_z, bool noisy_x) {
  const VaeModel& s1 = model.stage1;
  const VaeModel& s2 = model.stage2;
  if (s2.ambient_dim != s1.kappa)
    throw std::invalid_argument(
        "two_stage_sample: stage-2 ambient dim must equal stage-1 kappa");

  std::mt19937_64 prior_rng = make_rng(seed, "prior");
  Tensor u = randn(n, s2.kappa, prior_rng);
  Tensor z = decode(s2, u);
  if (noisy_z) {
    std::mt19937_64 zrng = make_rng(seed, "stage2-obs-noise");
    Tensor noise = randn(n, s1.kappa, zrng, std::sqrt(s2.gamma()));
    for (std::size_t i = 0; i < z.numel(); ++i) z.data[i] += noise.data[i];
  }
  Tensor x = decode(s1, z);
  if (noisy_x) {
    std::mt19937_64 xrng = make_rng(seed, "obs-noise");
    Tensor noise = randn(n, s1.ambient_dim, xrng, std::sqrt(s1.gamma()));
    for (std::size_t i = 0; i < x.numel(); ++i) x.data[i] += noise.data[i];
  }
  return x;
}

PipelineResult run_pipeline(const Tensor& data, const PipelineConfig& config,
                            std::uint64_t seed, const ManifoldSpec* spec,
                            const Tensor* holdout) {
  PipelineResult res;
  const std::size_t d = data.shape[1];

  // Stage 1.
  res.model.stage1 = vae_init(d, config.kappa, config.stage1_hidden,
                              substream_seed(seed, "stage1-init"));
  TrainConfig cfg1 = config.stage1;
  cfg1.seed = substream_seed(seed, "stage1-noise");
  const bool untrained1 = cfg1.epochs == 0;
  if (!untrained1) {
    res.trace_stage1 = train(res.model.stage1, data, cfg1);
    if (res.trace_stage1.diverged) {
      res.report.failed = true;
      res.report.failure_message = "stage-1 training diverged";
      return res;
    }
  }

  // Step 1: latent samples from the aggregated posterior.
  res.latents = extract_latents(res.model.stage1, data,
                                substream_seed(seed, "latent-extract"));

  // Step 2: second-stage VAE on the frozen latent batch.
  TrainConfig cfg2 = config.stage2;
  cfg2.seed = substream_seed(seed, "stage2-noise");
  const bool untrained2 = cfg2.epochs == 0;
  try {
    res.model.stage2 =
        train_second_stage(res.latents, cfg2, config.stage2_hidden,
                           substream_seed(seed, "stage2-init"),
                           &res.trace_stage2);
  } catch (const std::exception& e) {
    res.report.failed = true;
    res.report.failure_message = std::string("stage-2 training: ") + e.what();
    return res;
  }
  if (res.trace_stage2.diverged) {
    res.report.failed = true;
    res.report.failure_message = "stage-2 training diverged";
    // Partial diagnostics below still describe stage 1.
  }

  // Diagnostics.
  DiagnosticsReport& rep = res.report;
  rep.untrained = untrained1 && untrained2;
  const std::uint64_t eval_seed = substream_seed(seed, "eval");
  const std::size_t n_eval = std::min<std::size_t>(config.n_eval,
                                                   data.shape[0]);

  // Aggregated-posterior mismatch, stage 1 vs stage 2.
  Tensor z_samples = res.latents.z;
  LatentBatch u_batch = extract_latents(res.model.stage2, res.latents.z,
                                        substream_seed(seed, "eval-u"));
  std::mt19937_64 ref_rng = make_rng(eval_seed, "gaussian-reference");
  const std::size_t n_mmd = std::min<std::size_t>(n_eval, z_samples.shape[0]);
  auto head = [](const Tensor& t, std::size_t n) {
    Tensor out = Tensor::zeros({n, t.shape[1]});
    std::copy_n(t.data.begin(), n * t.shape[1], out.data.begin());
    return out;
  };
  Tensor zs = head(z_samples, n_mmd);
  Tensor us = head(u_batch.z, n_mmd);
  Tensor ref = randn(n_mmd, config.kappa, ref_rng);
  MmdResult m1 = mmd(zs, ref);
  MmdResult m2 = mmd(us, ref, KernelSpec{m1.bandwidth});
  rep.mmd_stage1 = m1.mmd2;
  rep.mmd_stage2 = m2.mmd2;
  rep.mmd_bandwidth = m1.bandwidth;

  rep.singular_spectrum_stage1 = singular_spectrum(z_samples);
  rep.singular_spectrum_stage2 = singular_spectrum(u_batch.z);
  Tensor gref = randn(z_samples.shape[0], config.kappa, ref_rng);
  rep.singular_spectrum_gaussian_reference = singular_spectrum(gref);

  PosteriorEigHistogram hist =
      posterior_eig_histogram(res.model.stage1, data);
  rep.posterior_eig_histogram = hist.bins;
  rep.posterior_mean_variance = hist.mean_variance;
  rep.active_dim_estimate = hist.active_dim_estimate;

  EncodeResult enc = encode(res.model.stage1, data);
  Tensor recon = decode(res.model.stage1, enc.mu);
  double sse = 0.0;
  for (std::size_t i = 0; i < data.numel(); ++i) {
    const double r = data.data[i] - recon.data[i];
    sse += r * r;
  }
  rep.recon_mse = sse / static_cast<double>(data.numel());
  rep.log_gamma_final = res.model.stage1.log_gamma.data[0];

  Tensor one_stage = sample_ancestral(res.model.stage1, n_eval,
                                      substream_seed(eval_seed, "1stage"));
  Tensor two_stage = two_stage_sample(res.model, n_eval,
                                      substream_seed(eval_seed, "2stage"));

  if (spec && spec->project) {
    std::vector<double> dists;
    dists.reserve(n_eval);
    std::vector<double> pt(d);
    for (std::size_t i = 0; i < n_eval; ++i) {
      std::copy_n(two_stage.data.begin() + i * d, d, pt.begin());
      dists.push_back(distance_to_manifold(*spec, pt));
    }
    double mean = 0.0;
    for (double v : dists) mean += v;
    rep.distance_to_manifold_mean = mean / static_cast<double>(dists.size());
    std::sort(dists.begin(), dists.end());
    rep.distance_to_manifold_p95 =
        dists[static_cast<std::size_t>(0.95 * (dists.size() - 1))];
  }

  if (holdout) {
    rep.sample_energy_distance_1stage = energy_distance(one_stage, *holdout);
    rep.sample_energy_distance_2stage = energy_distance(two_stage, *holdout);
  }

  return res;
}

}  // namespace twostage
