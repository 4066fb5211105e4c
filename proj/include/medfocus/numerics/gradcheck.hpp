#pragma once

#include <functional>

#include "medfocus/numerics/tensor.hpp"

namespace medfocus {

/// Compares the reverse-mode gradient of `f` w.r.t. `x` with central
/// differences of step `h`. `f` must rebuild its graph from the current
/// values of `x` on every call. Returns
///   max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
/// `x` is restored to its original values and its grad is cleared.
double grad_check(const std::function<Tensor()>& f, Tensor& x, double h);

/// Same, restricted to the listed coordinates of `x`.
double grad_check(const std::function<Tensor()>& f, Tensor& x, double h,
                  const std::vector<std::size_t>& coords);

}  // namespace medfocus
