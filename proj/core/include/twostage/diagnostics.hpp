#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "twostage/tensor.hpp"
#include "twostage/vae.hpp"

namespace twostage {

/// RBF kernel; bandwidth <= 0 means "median heuristic" resolved over the
/// pooled pairwise distances at call time.
struct KernelSpec {
  double bandwidth = 0.0;
};

struct MmdResult {
  double mmd2 = 0.0;
  double bandwidth = 0.0;  // resolved value
};

/// Biased V-statistic MMD^2 with an RBF kernel.
MmdResult mmd(const Tensor& x, const Tensor& y, const KernelSpec& kernel = {});

/// Energy distance 2 E||X-Y|| - E||X-X'|| - E||Y-Y'|| from sample averages.
double energy_distance(const Tensor& x, const Tensor& y);

/// q-quantile of a two-sample statistic under random permutations of the
/// pooled rows. Used as a calibration null for mmd / energy_distance.
double permutation_null_quantile(
    const Tensor& x, const Tensor& y,
    const std::function<double(const Tensor&, const Tensor&)>& stat,
    std::size_t n_permutations, std::uint64_t seed, double q);

/// Singular values of Z / sqrt(n), descending.
std::vector<double> singular_spectrum(const Tensor& z);

struct PosteriorEigHistogram {
  std::vector<double> mean_variance;  // per latent dimension
  std::vector<std::size_t> bins;      // 24 bins over [0, 1.2]
  std::size_t active_dim_estimate = 0;
};

/// Batch-averaged encoder variances; a dimension with mean variance < 0.5
/// counts as active.
PosteriorEigHistogram posterior_eig_histogram(const VaeModel& model,
                                              const Tensor& data);

/// Mean squared decoder-output deviation when the encoded mean is perturbed
/// along one latent coordinate, coordinates ordered by ascending posterior
/// variance (index 0 = most informative).
double noise_injection_probe(const VaeModel& model, const Tensor& x,
                             std::size_t direction_index, double scale,
                             std::size_t n_draws, std::uint64_t seed);

struct Marginal {
  std::function<double(double)> cdf;
  std::function<double(double)> inv_cdf;
};

/// z_tilde = D2[R D1(z)]: per-dimension Gaussianize through the source
/// marginals, rotate, de-Gaussianize through the target marginals. R must be
/// orthogonal to 1e-10.
Tensor entangle_transform(const Tensor& z, const Tensor& rotation,
                          const std::vector<Marginal>& source,
                          const std::vector<Marginal>& target);

/// Inverse chain D1^-1[R^T D2^-1(z_tilde)].
Tensor entangle_inverse(const Tensor& z_tilde, const Tensor& rotation,
                        const std::vector<Marginal>& source,
                        const std::vector<Marginal>& target);

/// Plug-in total correlation sum_j H(z_j) - H(z) from histograms; rejected
/// for kappa > 4 where the binned estimator is unreliable.
double total_correlation_estimate(const Tensor& samples, std::size_t bins);

struct DiagnosticsReport {
  double mmd_stage1 = 0.0;
  double mmd_stage2 = 0.0;
  double mmd_bandwidth = 0.0;
  std::vector<double> singular_spectrum_stage1;
  std::vector<double> singular_spectrum_stage2;
  std::vector<double> singular_spectrum_gaussian_reference;
  std::vector<std::size_t> posterior_eig_histogram;
  std::vector<double> posterior_mean_variance;
  std::size_t active_dim_estimate = 0;
  double recon_mse = 0.0;
  double log_gamma_final = 0.0;
  std::optional<double> distance_to_manifold_mean;
  std::optional<double> distance_to_manifold_p95;
  double sample_energy_distance_1stage = 0.0;
  double sample_energy_distance_2stage = 0.0;
  bool untrained = false;
  bool failed = false;
  std::string failure_message;

  std::string to_json() const;
};

}  // namespace twostage
