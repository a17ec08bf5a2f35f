#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "twostage/tensor.hpp"

namespace twostage {

/// Deterministic sub-stream seed: FNV-1a over the stream name mixed with the
/// master seed, finalized with a 64-bit avalanche. Changing one stream's
/// consumption never perturbs another stream.
inline std::uint64_t substream_seed(std::uint64_t master,
                                    std::string_view name) {
  std::uint64_t h = 1469598103934665603ull ^ master;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  h *= 0xc4ceb9fe1a85ec53ull;
  h ^= h >> 33;
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(substream_seed(master, name));
}

inline Tensor randn(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                    double stddev = 1.0) {
  Tensor t = Tensor::zeros({rows, cols});
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace twostage
