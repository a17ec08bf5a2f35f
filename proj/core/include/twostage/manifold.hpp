#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "twostage/tensor.hpp"

namespace twostage {

/// 1D density on a truncated support, given as an unnormalized log-density.
struct Density1D {
  std::function<double(double)> log_density;
  double lo = -8.0;
  double hi = 8.0;
  std::size_t grid_n = 4096;
};

/// Normalized pdf and CDF tabulated by trapezoid quadrature on a uniform
/// grid. cdf is strictly increasing when the density is positive.
struct CdfTable {
  std::vector<double> x;
  std::vector<double> pdf;
  std::vector<double> cdf;
  double lo = 0.0, hi = 0.0;
};

CdfTable build_cdf(const Density1D& density);

/// F(x) by linear interpolation; x outside the support is rejected.
double cdf_F(const CdfTable& table, double x);

/// F^-1(xi) by bisection on the monotone interpolant (60 iterations).
double inv_cdf_F(const CdfTable& table, double xi);

/// Derivative of the interpolated CDF (the normalized pdf) at x.
double pdf_at(const CdfTable& table, double x);

/// Standard normal CDF and its inverse (relative error < 1e-10 on |z|<=6).
double normal_cdf(double z);
double normal_inv_cdf(double xi);  // rejects xi outside (0,1)
double normal_log_pdf(double z, double mean = 0.0, double var = 1.0);

/// Decoder mean x = F^-1(G(z)) of the analytic optimal construction.
double theorem1_decoder(const CdfTable& table, double z);

/// Autoregressive pair: marginal of the first coordinate plus a conditional
/// density of the second given the first.
struct Autoregressive2D {
  Density1D marginal_x1;
  std::function<Density1D(double)> conditional_x2;
};

/// Per-coordinate conditional CDFs, [F1(x1), F2(x2; x1)].
std::vector<double> conditional_cdf_F(const Autoregressive2D& density,
                                      double x1, double x2);

/// Model density p_theta(x) = int N(x | x', gamma I) p_gt(x') dx' evaluated
/// on the support padded by 6 sqrt(gamma).
struct DensityCurve {
  std::vector<double> x;
  std::vector<double> p;
};
DensityCurve theorem1_density(const CdfTable& table, double gamma);

double curve_integral(const DensityCurve& curve);

/// Total variation between the model curve and the ground truth (zero outside
/// its support), on the curve's grid.
double tv_distance(const DensityCurve& ptheta, const CdfTable& pgt);

/// Max over an interior x-grid of KL[q(z|x) || p(z|x)], where q is the
/// analytic encoder (mean G^-1(F(x)), variance gamma / slope^2) and p is the
/// exact posterior of the analytic decoder, both by quadrature.
double theorem1_posterior_kl(const CdfTable& table, double gamma);

/// Kolmogorov-Smirnov statistic between the decoder pushforward of n
/// standard-normal draws and the analytic CDF.
double ks_statistic_pushforward(const CdfTable& table, std::size_t n,
                                std::uint64_t seed);

/// Named 1D densities: "normal-1d", "uniform-1d", "mixture-1d".
Density1D density_preset(const std::string& name);

/// Ground-truth generative process with known intrinsic dimension.
struct ManifoldSpec {
  std::string name;
  std::size_t intrinsic_dim = 0;
  std::size_t ambient_dim = 0;
  std::function<std::vector<double>(std::mt19937_64&)> sample_latent;
  std::function<std::vector<double>(const std::vector<double>&)> embed;
  /// Nearest-manifold-point oracle; empty when not available.
  std::function<std::vector<double>(const std::vector<double>&)> project;
  /// Per-latent-coordinate densities for the analytic decoder; empty when
  /// no analytic latent density is defined.
  std::vector<Density1D> latent_densities;
};

/// Presets: "circle-arc", "tanh-embed-2-10", "mixture-1d", "swiss-2-3".
ManifoldSpec manifold_preset(const std::string& name);

Tensor make_manifold_dataset(const ManifoldSpec& spec, std::size_t n,
                             std::uint64_t seed);

/// x = g(F^-1(G(z))) per latent coordinate; outputs lie on the manifold.
std::vector<double> manifold_decoder(const ManifoldSpec& spec,
                                     const std::vector<CdfTable>& latent_cdfs,
                                     const std::vector<double>& z);

/// ||x - project(x)||; requires the projection oracle.
double distance_to_manifold(const ManifoldSpec& spec,
                            const std::vector<double>& point);

}  // namespace twostage
