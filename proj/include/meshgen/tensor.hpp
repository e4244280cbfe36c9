#pragma once

// Dense tensors with reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a vector-Jacobian rule; calling
// backward() on a scalar replays those rules in reverse topological order.
// Leaves accumulate gradients across calls until zero_grad().
//
// Tensors are at most two-dimensional. A 1-D tensor of extent n behaves as a
// 1 x n row wherever a matrix is expected.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "meshgen/rng.hpp"

namespace meshgen::ag {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first touched
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into the parents' grads.
  std::function<void(Node& self)> backward;

  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->rows(); }
  std::size_t cols() const { return node_->cols(); }

  std::span<const double> values() const { return node_->value; }
  // Direct write access, intended for leaves (optimizer updates, loading).
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // loss.backward(): populates grads of every requires_grad leaf reachable
  // from this scalar. Repeated calls accumulate.
  void backward() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& handle() const { return node_; }

  // Deep copy of the values as a fresh leaf.
  Tensor detach_copy() const;

 private:
  std::shared_ptr<Node> node_;
};

// Gradient recording is on by default; the guard disables it for its scope
// (per thread).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Building block for fused operations defined outside this header. The
// returned tensor records `parents` and `backward` only when recording is
// enabled and some parent requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward);

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a[r x c] + bias[c], bias broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// a[r x c] * w[c x n] + bias[n]
Tensor linear(const Tensor& a, const Tensor& w, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
// Row-wise over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
Tensor log(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
// Stacks 1 x c (or length-c) tensors into an n x c matrix.
Tensor stack_rows(std::span<const Tensor> rows);

// Rows of `table` selected by ids -> [ids.size() x table.cols()].
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Valid 1-D convolution of seq[M x d] with filters[F x (h*d)] plus bias[F]
// -> [(M-h+1) x F]. Window error when h > M.
Tensor conv1d_valid(const Tensor& seq, const Tensor& filters,
                    const Tensor& bias, std::size_t window);

struct MaxPool {
  Tensor values;                    // 1 x F
  std::vector<std::size_t> argmax;  // per column, lowest index on ties
};
// Column-wise maximum over rows of map[L x F].
MaxPool max_over_time(const Tensor& map);

// Inverted dropout: zero with probability p, survivors scaled by 1/(1-p).
// Identity when !train or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

// ---- initialization -------------------------------------------------------

namespace init {
// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);
void uniform(Tensor& t, double lo, double hi, Rng& rng);
}  // namespace init

// ---- verification hooks ---------------------------------------------------

namespace debug {
// Scales the gradient entering every node produced by `op` during backward.
// Used to confirm that the gradient checks catch a broken rule. Empty name
// clears the fault.
void set_backward_fault(const std::string& op, double factor);
}  // namespace debug

}  // namespace meshgen::ag
