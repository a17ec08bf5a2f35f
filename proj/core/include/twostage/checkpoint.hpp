#pragma once

#include <string>

#include "twostage/vae.hpp"

namespace twostage {

/// Binary checkpoint: magic "2SVAE001", then kappa, d and the layer dims of
/// the three nets as little-endian u32, then every parameter tensor as
/// little-endian f64 in declaration order, then log_gamma.
void checkpoint_save(const VaeModel& model, const std::string& path);

/// Rejects bad magic or truncation with the offending byte position.
VaeModel checkpoint_load(const std::string& path);

}  // namespace twostage
