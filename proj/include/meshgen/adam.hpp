#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "meshgen/tensor.hpp"

namespace meshgen {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(std::span<const ag::Tensor> params, AdamConfig config);

// One bias-corrected Adam update of every parameter from its accumulated
// gradient (a parameter without a gradient is treated as zero gradient).
void adam_step(std::span<ag::Tensor> params, AdamState& state);

// Optimizer bound to a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<ag::Tensor> params, AdamConfig config);

  void zero_grad();
  void step() { adam_step(params_, state_); }
  const AdamState& state() const { return state_; }

 private:
  std::vector<ag::Tensor> params_;
  AdamState state_;
};

}  // namespace meshgen
