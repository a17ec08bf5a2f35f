#pragma once

#include <cstdint>

#include "twostage/diagnostics.hpp"
#include "twostage/manifold.hpp"
#include "twostage/tensor.hpp"
#include "twostage/vae.hpp"

namespace twostage {

struct TwoStageModel {
  VaeModel stage1;  // d <-> kappa
  VaeModel stage2;  // kappa <-> kappa
};

struct LatentBatch {
  Tensor z;  // n x kappa, one stochastic draw per training point
  std::uint64_t seed = 0;
};

/// One reparameterized draw z ~ q(z|x) per row.
LatentBatch extract_latents(const VaeModel& stage1, const Tensor& data,
                            std::uint64_t seed);

/// Trains a kappa <-> kappa model on the frozen latent batch. epochs == 0
/// returns the initialized model untouched.
VaeModel train_second_stage(const LatentBatch& latents,
                            const TrainConfig& config,
                            const std::vector<std::size_t>& hidden_dims,
                            std::uint64_t init_seed, TrainTrace* trace = nullptr);

/// Extended ancestral chain u ~ N(0,I) -> z ~ p(z|u) -> x. Defaults: noisy z
/// (stage-2 observation noise realized), mean x. The u draw and the x noise
/// use the same sub-streams as sample_ancestral, so replacing stage 2 with an
/// identity map reproduces single-stage sampling exactly.
Tensor two_stage_sample(const TwoStageModel& model, std::size_t n,
                        std::uint64_t seed, bool noisy_z = true,
                        bool noisy_x = false);

struct PipelineConfig {
  TrainConfig stage1;
  TrainConfig stage2;
  std::vector<std::size_t> stage1_hidden = {64, 64};
  std::vector<std::size_t> stage2_hidden = {64, 64, 64};
  std::size_t kappa = 5;
  std::size_t n_eval = 2000;  // evaluation samples for the report metrics
};

struct PipelineResult {
  TwoStageModel model;
  TrainTrace trace_stage1;
  TrainTrace trace_stage2;
  LatentBatch latents;
  DiagnosticsReport report;
};

/// Steps 1-3 with strictly separate stage training, then the diagnostics
/// report. spec (optional) enables distance-to-manifold statistics; holdout
/// (optional) enables the energy-distance comparison.
PipelineResult run_pipeline(const Tensor& data, const PipelineConfig& config,
                            std::uint64_t seed,
                            const ManifoldSpec* spec = nullptr,
                            const Tensor* holdout = nullptr);

}  // namespace twostage
