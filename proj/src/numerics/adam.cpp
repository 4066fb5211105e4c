#include "medfocus/numerics/adam.hpp"

#include <cmath>

#include "medfocus/error.hpp"

namespace medfocus {

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, AdamState& state) {
  if (grads.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam_step: " + std::to_string(grads.size()) + " gradients for " +
                                              std::to_string(params.size()) + " parameters");
  }
  if (state.step == 0 && state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam_step: optimizer state tracks a different parameter list");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].numel() || state.first_moment[k].size() != params[k].numel() ||
        state.second_moment[k].size() != params[k].numel()) {
      throw Error(ErrorKind::ShapeMismatch, "adam_step: buffer size mismatch for parameter " + std::to_string(k));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    check_finite(values, "adam_step");
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state);
}

}  // namespace medfocus
