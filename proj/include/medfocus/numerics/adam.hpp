#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medfocus/numerics/tensor.hpp"

namespace medfocus {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update. Moment buffers are created on the first
/// step; afterwards they must shape-match `params` (ShapeMismatch otherwise).
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state);

/// Same, taking each parameter's accumulated gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace medfocus
