#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "medfocus/encoders/model.hpp"

namespace medfocus {

struct LossCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
};

/// Architecture used by the exhaustive gradient check: 16x16 input, 4-pixel
/// patches, d = 16, two blocks, two heads, three classes.
ArchConfig small_check_arch();

/// Central-difference check of the full composite loss on a two-image batch of
/// random pixels, over every parameter tensor. `coords_per_tensor` = 0 checks
/// every coordinate; otherwise that many coordinates per tensor are sampled.
LossCheckResult composite_loss_grad_check(const ArchConfig& arch, std::uint64_t seed, double lambda, double h,
                                          std::size_t coords_per_tensor);

}  // namespace medfocus
