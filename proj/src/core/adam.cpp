#include "meshgen/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "meshgen/error.hpp"

namespace meshgen {

AdamState make_adam_state(std::span<const ag::Tensor> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<ag::Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw DimensionError(fmt::format("adam: {} parameters but state for {}", params.size(),
                                     state.first_moment.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != state.first_moment[k].size()) {
      throw DimensionError(fmt::format("adam: parameter {} has {} values, moments have {}", k,
                                       params[k].size(), state.first_moment[k].size()));
    }
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    auto grad = params[k].grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      values[i] -= c.learning_rate * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + c.epsilon);
    }
  }
}

Adam::Adam(std::vector<ag::Tensor> params, AdamConfig config)
    : params_(std::move(params)), state_(make_adam_state(params_, config)) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace meshgen
