#pragma once

#include <functional>
#include <string>
#include <vector>

#include "meshgen/tensor.hpp"

namespace meshgen {

// Relative error used throughout: |a - n| / max(1, |a|, |n|).
double gradient_rel_error(double analytic, double numeric);

// Compares backward() against central differences for every coordinate of
// `point`. `fn` must rebuild the scalar loss from the current leaf values on
// each call. Returns the maximum relative error.
double finite_difference_check(const std::function<ag::Tensor()>& fn, ag::Tensor point,
                               double eps = 1e-5);

struct NamedTensor {
  std::string name;
  ag::Tensor tensor;
};

struct BlockError {
  std::string name;
  double max_rel_error = 0.0;
};

// Same check over several parameter blocks with a single analytic pass.
std::vector<BlockError> check_blocks(const std::function<ag::Tensor()>& fn,
                                     std::vector<NamedTensor> blocks, double eps = 1e-5);

}  // namespace meshgen
