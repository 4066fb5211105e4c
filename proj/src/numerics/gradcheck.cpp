#include "medfocus/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace medfocus {

double grad_check(const std::function<Tensor()>& f, Tensor& x, double h) {
  std::vector<std::size_t> all(x.numel());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return grad_check(f, x, h, all);
}

double grad_check(const std::function<Tensor()>& f, Tensor& x, double h, const std::vector<std::size_t>& coords) {
  const bool had_flag = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  backward(f());
  const std::vector<double> analytic = x.grad();
  x.zero_grad();

  double worst = 0.0;
  {
    NoGradGuard no_grad;
    auto values = x.mutable_data();
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  x.set_requires_grad(had_flag);
  return worst;
}

}  // namespace medfocus
