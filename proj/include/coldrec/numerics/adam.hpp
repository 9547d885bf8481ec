#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "coldrec/numerics/tensor.hpp"

namespace coldrec::numerics {

// A tensor registered with the optimizer. When row_mask is non-empty it has
// one entry per row (first axis) and rows with a zero entry are never touched.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<std::uint8_t> row_mask;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One Adam update with bias correction, then zeroes every gradient.
inline void adam_step(std::span<Parameter> params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.tensor.numel(), 0.0);
      state.second_moment.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " +
                                std::to_string(state.first_moment.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.tensor.has_grad()) {
      throw std::logic_error("adam_step: parameter '" + p.name + "' has no gradient");
    }
    if (state.first_moment[i].size() != p.tensor.numel() ||
        state.second_moment[i].size() != p.tensor.numel()) {
      throw std::logic_error("adam_step: moment buffers of '" + p.name +
                             "' do not match the parameter shape");
    }
    if (!p.row_mask.empty() && (p.tensor.rank() == 0 || p.row_mask.size() != p.tensor.dim(0))) {
      throw std::invalid_argument("adam_step: row mask of '" + p.name +
                                  "' does not have one entry per row");
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto values = p.tensor.values();
    auto grad = p.tensor.mutable_grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const std::size_t rows = p.tensor.rank() ? p.tensor.dim(0) : 1;
    const std::size_t width = rows ? values.size() / rows : 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!p.row_mask.empty() && !p.row_mask[r]) continue;
      for (std::size_t j = r * width; j < (r + 1) * width; ++j) {
        const double g = grad[j];
        m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
        v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
        const double m_hat = m[j] / correction1;
        const double v_hat = v[j] / correction2;
        values[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
      }
    }
    p.tensor.zero_grad();
  }
}

}  // namespace coldrec::numerics
