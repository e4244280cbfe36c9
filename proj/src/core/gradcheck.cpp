#include "meshgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace meshgen {

double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

double finite_difference_check(const std::function<ag::Tensor()>& fn, ag::Tensor point,
                               double eps) {
  auto errs = check_blocks(fn, {{"point", std::move(point)}}, eps);
  return errs.front().max_rel_error;
}

std::vector<BlockError> check_blocks(const std::function<ag::Tensor()>& fn,
                                     std::vector<NamedTensor> blocks, double eps) {
  for (auto& b : blocks) {
    b.tensor.set_requires_grad(true);
    b.tensor.zero_grad();
  }
  fn().backward();
  std::vector<BlockError> out;
  for (auto& b : blocks) {
    std::vector<double> analytic(b.tensor.size(), 0.0);
    if (!b.tensor.grad().empty()) {
      std::copy(b.tensor.grad().begin(), b.tensor.grad().end(), analytic.begin());
    }
    BlockError err{b.name, 0.0};
    ag::NoGradGuard no_grad;
    auto values = b.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = fn().item();
      values[i] = orig - eps;
      const double down = fn().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      err.max_rel_error = std::max(err.max_rel_error, gradient_rel_error(analytic[i], numeric));
    }
    out.push_back(err);
  }
  return out;
}

}  // namespace meshgen
