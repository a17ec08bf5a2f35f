#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "twostage/manifold.hpp"
#include "twostage/pipeline.hpp"
#include "twostage/rng.hpp"

using namespace twostage;

namespace {

PipelineConfig small_config(std::size_t epochs1, std::size_t epochs2) {
  PipelineConfig cfg;
  cfg.stage1.epochs = epochs1;
  cfg.stage2.epochs = epochs2;
  cfg.stage1.batch_size = 50;
  cfg.stage2.batch_size = 50;
  cfg.stage1.base_lr = 1e-3;
  cfg.stage2.base_lr = 1e-3;
  cfg.stage1_hidden = {16};
  cfg.stage2_hidden = {16};
  cfg.kappa = 3;
  cfg.n_eval = 200;
  return cfg;
}

}  // namespace

TEST_CASE("extract_latents: one draw per row, deterministic per seed") {
  VaeModel m = vae_init(2, 3, {8}, 1);
  ManifoldSpec spec = manifold_preset("circle-arc");
  Tensor data = make_manifold_dataset(spec, 100, 2);
  LatentBatch a = extract_latents(m, data, 7);
  LatentBatch b = extract_latents(m, data, 7);
  REQUIRE(a.z.shape == std::vector<std::size_t>({100, 3}));
  CHECK(a.z.data == b.z.data);
  CHECK(a.seed == 7);
  LatentBatch c = extract_latents(m, data, 8);
  CHECK(a.z.data != c.z.data);

  // Draws are stochastic: they differ from the encoder means.
  EncodeResult enc = encode(m, data);
  CHECK(a.z.data != enc.mu.data);
}

TEST_CASE("train_second_stage: epochs=0 returns the initialized model") {
  VaeModel m = vae_init(2, 3, {8}, 1);
  Tensor data = make_manifold_dataset(manifold_preset("circle-arc"), 60, 3);
  LatentBatch lat = extract_latents(m, data, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  VaeModel s2 = train_second_stage(lat, cfg, {8}, 11);
  VaeModel fresh = vae_init(3, 3, {8}, 0);
  CHECK(s2.kappa == 3);
  CHECK(s2.ambient_dim == 3);
  CHECK(s2.log_gamma.data[0] == 0.0);
  (void)fresh;
}

TEST_CASE("two_stage_sample with identity stage 2 equals single-stage") {
  VaeModel s1 = vae_init(2, 3, {8}, 5);
  s1.log_gamma.data[0] = -2.0;

  // Identity stage 2: decoder passes u through, zero observation noise.
  TwoStageModel ts;
  ts.stage1 = s1;
  ts.stage2 = vae_init(3, 3, {4}, 6);
  auto& dec = ts.stage2.decoder_mu;
  dec.layer_dims = {3, 3};
  dec.weights = {Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})};
  dec.biases = {Tensor::zeros({3})};
  ts.stage2.log_gamma.data[0] = -745.0;  // exp underflows to 0 noise

  for (bool noisy_x : {false, true}) {
    Tensor single = sample_ancestral(s1, 40, 9, /*means_only=*/!noisy_x);
    Tensor twostage = two_stage_sample(ts, 40, 9, true, noisy_x);
    REQUIRE(single.shape == twostage.shape);
    for (std::size_t i = 0; i < single.numel(); ++i)
      CHECK(single.data[i] == doctest::Approx(twostage.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("two_stage_sample determinism and noise flags") {
  TwoStageModel ts;
  ts.stage1 = vae_init(2, 3, {8}, 5);
  ts.stage2 = vae_init(3, 3, {8}, 6);
  Tensor a = two_stage_sample(ts, 30, 1);
  Tensor b = two_stage_sample(ts, 30, 1);
  CHECK(a.data == b.data);
  Tensor quiet = two_stage_sample(ts, 30, 1, false, false);
  CHECK(a.data != quiet.data);  // stage-2 noise on by default
}

TEST_CASE("run_pipeline: deterministic and stage separation") {
  Tensor data = make_manifold_dataset(manifold_preset("circle-arc"), 200, 13);
  PipelineConfig cfg = small_config(3, 3);
  PipelineResult a = run_pipeline(data, cfg, 42);
  PipelineResult b = run_pipeline(data, cfg, 42);

  CHECK(a.report.to_json() == b.report.to_json());
  CHECK(a.model.stage1.encoder_mu.weights[0].data ==
        b.model.stage1.encoder_mu.weights[0].data);
  CHECK(a.model.stage2.decoder_mu.weights[0].data ==
        b.model.stage2.decoder_mu.weights[0].data);

  // Stage separation: training only stage 1 gives bit-identical stage-1
  // parameters to the full two-stage run.
  PipelineConfig cfg_nostage2 = cfg;
  cfg_nostage2.stage2.epochs = 0;
  PipelineResult c = run_pipeline(data, cfg_nostage2, 42);
  CHECK(c.model.stage1.encoder_mu.weights[0].data ==
        a.model.stage1.encoder_mu.weights[0].data);
  CHECK(c.model.stage1.decoder_mu.weights[0].data ==
        a.model.stage1.decoder_mu.weights[0].data);
  CHECK(c.model.stage1.log_gamma.data[0] == a.model.stage1.log_gamma.data[0]);
}

TEST_CASE("run_pipeline: epochs=0 flags untrained") {
  Tensor data = make_manifold_dataset(manifold_preset("circle-arc"), 100, 14);
  PipelineConfig cfg = small_config(0, 0);
  PipelineResult r = run_pipeline(data, cfg, 1);
  CHECK(r.report.untrained);
  CHECK(!r.report.failed);
}

TEST_CASE("run_pipeline report fields are populated and finite") {
  ManifoldSpec spec = manifold_preset("circle-arc");
  Tensor data = make_manifold_dataset(spec, 200, 15);
  Tensor holdout = make_manifold_dataset(spec, 200, 16);
  PipelineConfig cfg = small_config(5, 5);
  PipelineResult r = run_pipeline(data, cfg, 3, &spec, &holdout);

  CHECK(std::isfinite(r.report.mmd_stage1));
  CHECK(std::isfinite(r.report.mmd_stage2));
  CHECK(r.report.mmd_bandwidth > 0.0);
  CHECK(r.report.singular_spectrum_stage1.size() == cfg.kappa);
  CHECK(r.report.singular_spectrum_stage2.size() == cfg.kappa);
  CHECK(r.report.singular_spectrum_gaussian_reference.size() == cfg.kappa);
  CHECK(r.report.posterior_mean_variance.size() == cfg.kappa);
  CHECK(std::isfinite(r.report.recon_mse));
  CHECK(r.report.log_gamma_final == r.model.stage1.log_gamma.data[0]);
  REQUIRE(r.report.distance_to_manifold_mean.has_value());
  REQUIRE(r.report.distance_to_manifold_p95.has_value());
  CHECK(*r.report.distance_to_manifold_p95 >=
        *r.report.distance_to_manifold_mean * 0.0);
  CHECK(std::isfinite(r.report.sample_energy_distance_1stage));
  CHECK(std::isfinite(r.report.sample_energy_distance_2stage));
  CHECK(r.trace_stage1.epochs.size() == 5);
  CHECK(r.trace_stage2.epochs.size() == 5);
  REQUIRE(r.latents.z.shape == std::vector<std::size_t>({200, cfg.kappa}));
}

TEST_CASE("training nudges the loss down on a real benchmark slice") {
  Tensor data = make_manifold_dataset(manifold_preset("circle-arc"), 300, 17);
  PipelineConfig cfg = small_config(30, 10);
  PipelineResult r = run_pipeline(data, cfg, 8);
  REQUIRE(!r.trace_stage1.epochs.empty());
  const auto& ep = r.trace_stage1.epochs;
  CHECK(ep.back().neg_elbo < ep.front().neg_elbo);
  CHECK(!r.trace_stage1.diverged);
  CHECK(!r.report.failed);
}
