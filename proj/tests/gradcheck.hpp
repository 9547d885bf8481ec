#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "coldrec/numerics/tensor.hpp"

namespace coldrec::testing_support {

// Central finite-difference oracle. Returns max over all entries of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-4).
inline double max_gradient_error(const std::function<numerics::Tensor()>& loss_fn,
                                 std::vector<numerics::Tensor> params, double h) {
  for (auto& p : params) p.clear_grad();
  numerics::backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }
  double worst = 0.0;
  numerics::NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace coldrec::testing_support
