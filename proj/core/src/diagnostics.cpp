#include "twostage/diagnostics.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "nlohmann/json.hpp"
#include "twostage/manifold.hpp"
#include "twostage/rng.hpp"

namespace twostage {

namespace {

void require_same_width(const Tensor& x, const Tensor& y, const char* what) {
  if (x.shape.size() != 2 || y.shape.size() != 2 || x.shape[1] != y.shape[1])
    throw std::invalid_argument(std::string(what) + ": column mismatch");
}

double sq_dist(const double* a, const double* b, std::size_t k) {
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double median_bandwidth(const Tensor& x, const Tensor& y) {
  const std::size_t k = x.shape[1];
  std::vector<const double*> rows;
  for (std::size_t i = 0; i < x.shape[0]; ++i)
    rows.push_back(x.data.data() + i * k);
  for (std::size_t i = 0; i < y.shape[0]; ++i)
    rows.push_back(y.data.data() + i * k);
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dists.push_back(std::sqrt(sq_dist(rows[i], rows[j], k)));
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                   dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

}  // namespace

MmdResult mmd(const Tensor& x, const Tensor& y, const KernelSpec& kernel) {
  require_same_width(x, y, "mmd");
  const std::size_t n = x.shape[0], m = y.shape[0], k = x.shape[1];
  if (n < 2 || m < 2) throw std::invalid_argument("mmd: need >= 2 rows");
  const double h =
      kernel.bandwidth > 0.0 ? kernel.bandwidth : median_bandwidth(x, y);
  const double inv2h2 = 1.0 / (2.0 * h * h);
  auto kern = [&](const double* a, const double* b) {
    return std::exp(-sq_dist(a, b, k) * inv2h2);
  };
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      kxx += kern(x.data.data() + i * k, x.data.data() + j * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      kyy += kern(y.data.data() + i * k, y.data.data() + j * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      kxy += kern(x.data.data() + i * k, y.data.data() + j * k);
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return {kxx / (nn * nn) + kyy / (mm * mm) - 2.0 * kxy / (nn * mm), h};
}

double energy_distance(const Tensor& x, const Tensor& y) {
  require_same_width(x, y, "energy_distance");
  const std::size_t n = x.shape[0], m = y.shape[0], k = x.shape[1];
  if (n < 2 || m < 2)
    throw std::invalid_argument("energy_distance: need >= 2 rows");
  double exy = 0.0, exx = 0.0, eyy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      exy += std::sqrt(sq_dist(x.data.data() + i * k, y.data.data() + j * k, k));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      exx += std::sqrt(sq_dist(x.data.data() + i * k, x.data.data() + j * k, k));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      eyy += std::sqrt(sq_dist(y.data.data() + i * k, y.data.data() + j * k, k));
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  return 2.0 * exy / (nn * mm) - exx / (nn * nn) - eyy / (mm * mm);
}

double permutation_null_quantile(
    const Tensor& x, const Tensor& y,
    const std::function<double(const Tensor&, const Tensor&)>& stat,
    std::size_t n_permutations, std::uint64_t seed, double q) {
  require_same_width(x, y, "permutation_null_quantile");
  const std::size_t n = x.shape[0], m = y.shape[0], k = x.shape[1];
  Tensor pooled = Tensor::zeros({n + m, k});
  std::copy(x.data.begin(), x.data.end(), pooled.data.begin());
  std::copy(y.data.begin(), y.data.end(), pooled.data.begin() + n * k);
  std::mt19937_64 rng = make_rng(seed, "permutation-null");
  std::vector<std::size_t> idx(n + m);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<double> stats;
  stats.reserve(n_permutations);
  Tensor px = Tensor::zeros({n, k}), py = Tensor::zeros({m, k});
  for (std::size_t p = 0; p < n_permutations; ++p) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pooled.data.begin() + idx[i] * k, k,
                  px.data.begin() + i * k);
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pooled.data.begin() + idx[n + i] * k, k,
                  py.data.begin() + i * k);
    stats.push_back(stat(px, py));
  }
  std::sort(stats.begin(), stats.end());
  const double pos = q * static_cast<double>(stats.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, stats.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return stats[lo] * (1.0 - frac) + stats[hi] * frac;
}

std::vector<double> singular_spectrum(const Tensor& z) {
  if (z.shape.size() != 2)
    throw std::invalid_argument("singular_spectrum: need a matrix");
  const std::size_t n = z.shape[0], k = z.shape[1];
  if (n < k)
    throw std::invalid_argument("singular_spectrum: need n >= kappa");
  Eigen::MatrixXd m(n, k);
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) m(i, j) = z.at(i, j) * s;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  std::vector<double> out(svd.singularValues().data(),
                          svd.singularValues().data() + k);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

PosteriorEigHistogram posterior_eig_histogram(const VaeModel& model,
                                              const Tensor& data) {
  EncodeResult enc = encode(model, data);
  const std::size_t n = data.shape[0], kappa = model.kappa;
  PosteriorEigHistogram h;
  h.mean_variance.assign(kappa, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kappa; ++j)
      h.mean_variance[j] += std::exp(enc.logvar.at(i, j));
  for (double& v : h.mean_variance) v /= static_cast<double>(n);
  h.bins.assign(24, 0);
  for (double v : h.mean_variance) {
    std::size_t b = static_cast<std::size_t>(v / 0.05);
    h.bins[std::min<std::size_t>(b, 23)] += 1;
  }
  h.active_dim_estimate = static_cast<std::size_t>(std::count_if(
      h.mean_variance.begin(), h.mean_variance.end(),
      [](double v) { return v < 0.5; }));
  return h;
}

double noise_injection_probe(const VaeModel& model, const Tensor& x,
                             std::size_t direction_index, double scale,
                             std::size_t n_draws, std::uint64_t seed) {
  if (direction_index >= model.kappa)
    throw std::out_of_range("noise_injection_probe: direction out of range");
  PosteriorEigHistogram h = posterior_eig_histogram(model, x);
  std::vector<std::size_t> order(model.kappa);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return h.mean_variance[a] < h.mean_variance[b];
  });
  const std::size_t dim = order[direction_index];

  EncodeResult enc = encode(model, x);
  Tensor base = decode(model, enc.mu);
  std::mt19937_64 rng = make_rng(seed, "noise-injection");
  std::normal_distribution<double> dist(0.0, 1.0);
  const std::size_t n = x.shape[0], d = model.ambient_dim;
  double acc = 0.0;
  Tensor z = enc.mu;
  for (std::size_t t = 0; t < n_draws; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      z.at(i, dim) = enc.mu.at(i, dim) + scale * dist(rng);
    Tensor out = decode(model, z);
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double r = out.data[i] - base.data[i];
      acc += r * r;
    }
  }
  return n_draws == 0 ? 0.0
                      : acc / static_cast<double>(n_draws * n * d);
}

namespace {

void check_orthogonal(const Tensor& r) {
  if (r.shape.size() != 2 || r.shape[0] != r.shape[1])
    throw std::invalid_argument("entangle: rotation must be square");
  const std::size_t k = r.shape[0];
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += r.at(p, i) * r.at(p, j);
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(acc - expect) > 1e-10)
        throw std::invalid_argument("entangle: rotation is not orthogonal");
    }
}

Tensor apply_rowwise(const Tensor& z,
                     const std::vector<std::function<double(double)>>& fns) {
  Tensor out = z;
  const std::size_t k = z.shape[1];
  for (std::size_t i = 0; i < z.shape[0]; ++i)
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) = fns[j](z.at(i, j));
  return out;
}

}  // namespace

Tensor entangle_transform(const Tensor& z, const Tensor& rotation,
                          const std::vector<Marginal>& source,
                          const std::vector<Marginal>& target) {
  check_orthogonal(rotation);
  const std::size_t k = z.shape[1];
  if (source.size() != k || target.size() != k)
    throw std::invalid_argument("entangle_transform: marginal count mismatch");
  std::vector<std::function<double(double)>> d1(k), d2(k);
  for (std::size_t j = 0; j < k; ++j) {
    d1[j] = [cdf = source[j].cdf](double v) {
      return normal_inv_cdf(std::clamp(cdf(v), 1e-14, 1.0 - 1e-14));
    };
    d2[j] = [inv = target[j].inv_cdf](double v) {
      return inv(std::clamp(normal_cdf(v), 1e-14, 1.0 - 1e-14));
    };
  }
  Tensor g = apply_rowwise(z, d1);
  Tensor rotated = matmul_nt(g, rotation);  // rows v = R y
  return apply_rowwise(rotated, d2);
}

Tensor entangle_inverse(const Tensor& z_tilde, const Tensor& rotation,
                        const std::vector<Marginal>& source,
                        const std::vector<Marginal>& target) {
  check_orthogonal(rotation);
  const std::size_t k = z_tilde.shape[1];
  std::vector<std::function<double(double)>> d2inv(k), d1inv(k);
  for (std::size_t j = 0; j < k; ++j) {
    d2inv[j] = [cdf = target[j].cdf](double v) {
      return normal_inv_cdf(std::clamp(cdf(v), 1e-14, 1.0 - 1e-14));
    };
    d1inv[j] = [inv = source[j].inv_cdf](double v) {
      return inv(std::clamp(normal_cdf(v), 1e-14, 1.0 - 1e-14));
    };
  }
  Tensor g = apply_rowwise(z_tilde, d2inv);
  Tensor rotated = matmul(g, rotation);  // rows v = R^T y
  return apply_rowwise(rotated, d1inv);
}

double total_correlation_estimate(const Tensor& samples, std::size_t bins) {
  if (samples.shape.size() != 2)
    throw std::invalid_argument("total_correlation_estimate: need a matrix");
  const std::size_t n = samples.shape[0], k = samples.shape[1];
  if (k > 4)
    throw std::invalid_argument(
        "total_correlation_estimate: binned estimator limited to kappa <= 4");
  if (n < 1000)
    throw std::invalid_argument("total_correlation_estimate: need n >= 1000");
  if (bins < 2) throw std::invalid_argument("total_correlation_estimate: bins");

  std::vector<double> lo(k, 1e300), hi(k, -1e300);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      lo[j] = std::min(lo[j], samples.at(i, j));
      hi[j] = std::max(hi[j], samples.at(i, j));
    }
  std::size_t cells = 1;
  for (std::size_t j = 0; j < k; ++j) cells *= bins;
  std::vector<std::size_t> joint(cells, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cell = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double w = hi[j] - lo[j];
      std::size_t b =
          w > 0 ? static_cast<std::size_t>((samples.at(i, j) - lo[j]) / w *
                                           static_cast<double>(bins))
                : 0;
      cell = cell * bins + std::min(b, bins - 1);
    }
    joint[cell] += 1;
  }
  // Marginals from the joint so the plug-in estimate is self-consistent.
  const double nn = static_cast<double>(n);
  double h_joint = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    if (joint[c] == 0) continue;
    const double p = static_cast<double>(joint[c]) / nn;
    h_joint -= p * std::log(p);
  }
  double h_marg_sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> marg(bins, 0.0);
    std::size_t stride = 1;
    for (std::size_t jj = j + 1; jj < k; ++jj) stride *= bins;
    for (std::size_t c = 0; c < cells; ++c)
      marg[(c / stride) % bins] += static_cast<double>(joint[c]);
    for (double cnt : marg) {
      if (cnt == 0.0) continue;
      const double p = cnt / nn;
      h_marg_sum -= p * std::log(p);
    }
  }
  return h_marg_sum - h_joint;
}

std::string DiagnosticsReport::to_json() const {
  nlohmann::json j;
  j["mmd_stage1"] = mmd_stage1;
  j["mmd_stage2"] = mmd_stage2;
  j["mmd_bandwidth"] = mmd_bandwidth;
  j["singular_spectrum_stage1"] = singular_spectrum_stage1;
  j["singular_spectrum_stage2"] = singular_spectrum_stage2;
  j["singular_spectrum_gaussian_reference"] =
      singular_spectrum_gaussian_reference;
  j["posterior_eig_histogram"] = posterior_eig_histogram;
  j["posterior_mean_variance"] = posterior_mean_variance;
  j["active_dim_estimate"] = active_dim_estimate;
  j["recon_mse"] = recon_mse;
  j["log_gamma_final"] = log_gamma_final;
  if (distance_to_manifold_mean) {
    j["distance_to_manifold_mean"] = *distance_to_manifold_mean;
    j["distance_to_manifold_p95"] = *distance_to_manifold_p95;
  }
  j["sample_energy_distance_1stage"] = sample_energy_distance_1stage;
  j["sample_energy_distance_2stage"] = sample_energy_distance_2stage;
  j["untrained"] = untrained;
  j["failed"] = failed;
  if (failed) j["failure_message"] = failure_message;
  return j.dump(2);
}

}  // namespace twostage
