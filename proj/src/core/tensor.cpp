#include "meshgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>

#include "meshgen/error.hpp"
#include "meshgen/kernels.hpp"

namespace meshgen::ag {

namespace {

thread_local bool t_grad_enabled = true;

struct Fault {
  std::string op;
  double factor = 1.0;
};
Fault g_fault;

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& s) {
  if (s.empty() || s.size() > 2) {
    throw DimensionError(fmt::format("tensors are 1-D or 2-D, got {}", shape_str(s)));
  }
  for (auto e : s) {
    if (e == 0) throw DimensionError(fmt::format("zero extent in {}", shape_str(s)));
  }
}

Shape matrix_shape(std::size_t r, std::size_t c) { return Shape{r, c}; }

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size() || a.rows() != b.rows()) {
    throw DimensionError(fmt::format("{}: shapes {} and {} differ", op,
                                     shape_str(a.shape()), shape_str(b.shape())));
  }
}

std::vector<double>& grad_of(Node& n) { return n.ensure_grad(); }

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

bool grad_enabled() { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

namespace debug {
void set_backward_fault(const std::string& op, double factor) {
  g_fault = Fault{op, op.empty() ? 1.0 : factor};
}
}  // namespace debug

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<Node>();
  n->value.assign(product(shape), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (product(shape) != values.size()) {
    throw DimensionError(fmt::format("shape {} needs {} values, got {}",
                                     shape_str(shape), product(shape), values.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from(Shape{1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError(fmt::format("item() on non-scalar {}", shape_str(shape())));
  }
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach_copy() const {
  return from(node_->shape, node_->value, false);
}

void Tensor::backward() const {
  if (!defined() || size() != 1) {
    throw ContractError(fmt::format("backward() needs a scalar loss, got {}",
                                    defined() ? shape_str(shape()) : "undefined"));
  }
  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  // Interior gradients are per-call scratch; leaves keep accumulating.
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  grad_of(*node_)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (!g_fault.op.empty() && g_fault.op == n->op) {
      for (double& g : n->grad) g *= g_fault.factor;
    }
    n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward) std::vector<double>().swap(n->grad);
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(Node& self)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->op = op;
  const bool track =
      t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                    [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.handle());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

// ---- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError(fmt::format("matmul: {} x {} inner extents disagree",
                                     shape_str(a.shape()), shape_str(b.shape())));
  }
  const kernels::MatDims d{a.rows(), a.cols(), b.cols()};
  std::vector<double> out(d.rows * d.cols);
  kernels::matmul(a.values(), b.values(), out, d);
  auto an = a.handle(), bn = b.handle();
  return make_result("matmul", matrix_shape(d.rows, d.cols), std::move(out), {a, b},
                     [an, bn, d](Node& self) {
                       if (an->requires_grad)
                         kernels::matmul_grad_a(self.grad, bn->value, grad_of(*an), d);
                       if (bn->requires_grad)
                         kernels::matmul_grad_b(an->value, self.grad, grad_of(*bn), d);
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.handle(), bn = b.handle();
  return make_result("add", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      auto& g = grad_of(*p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.handle(), bn = b.handle();
  return make_result("sub", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.handle(), bn = b.handle();
  return make_result("mul", a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  auto an = a.handle();
  return make_result("scale", a.shape(), std::move(out), {a}, [an, s](Node& self) {
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.size() != a.cols()) {
    throw DimensionError(fmt::format("add_bias: bias {} does not match {} columns",
                                     shape_str(bias.shape()), shape_str(a.shape())));
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.values()[i * c + j] + bias.values()[j];
  auto an = a.handle(), bn = bias.handle();
  return make_result("add_bias", a.shape(), std::move(out), {a, bias},
                     [an, bn, r, c](Node& self) {
                       if (an->requires_grad) {
                         auto& g = grad_of(*an);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       }
                       if (bn->requires_grad) {
                         auto& g = grad_of(*bn);
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                       }
                     });
}

Tensor linear(const Tensor& a, const Tensor& w, const Tensor& bias) {
  return add_bias(matmul(a, w), bias);
}

namespace {

template <typename Fwd, typename Deriv>
Tensor elementwise(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.values()[i]);
  auto xn = x.handle();
  // deriv(input, output) -> d output / d input
  return make_result(op, x.shape(), std::move(out), {x}, [xn, deriv](Node& self) {
    auto& g = grad_of(*xn);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * deriv(xn->value[i], self.value[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return elementwise("sigmoid", x, stable_sigmoid,
                     [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return elementwise("tanh", x, [](double v) { return std::tanh(v); },
                     [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return elementwise("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                     [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError(fmt::format("log of non-positive value {}", v));
  }
  return elementwise("log", x, [](double v) { return std::log(v); },
                     [](double v, double) { return 1.0 / v; });
}

Tensor softmax(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.values().data() + i * c;
    double* o = out.data() + i * c;
    const double mx = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  auto xn = x.handle();
  return make_result("softmax", x.shape(), std::move(out), {x}, [xn, r, c](Node& self) {
    auto& g = grad_of(*xn);
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* gy = self.grad.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xn = x.handle();
  return make_result("sum", Shape{1}, {s}, {x}, [xn](Node& self) {
    auto& g = grad_of(*xn);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError(fmt::format("concat_cols: row counts {} and {} differ", r, p.rows()));
    }
    total += p.cols();
  }
  std::vector<double> out(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.values().data() + i * c, c, out.data() + i * total + off);
    off += c;
  }
  std::vector<Tensor> ps(parts.begin(), parts.end());
  std::vector<std::shared_ptr<Node>> nodes;
  for (auto& p : ps) nodes.push_back(p.handle());
  return make_result("concat_cols", matrix_shape(r, total), std::move(out), ps,
                     [nodes, r, total](Node& self) {
                       std::size_t off = 0;
                       for (auto& n : nodes) {
                         const std::size_t c = n->cols();
                         if (n->requires_grad) {
                           auto& g = grad_of(*n);
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               g[i * c + j] += self.grad[i * total + off + j];
                         }
                         off += c;
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  const std::size_t r = x.rows(), c = x.cols();
  if (count == 0 || begin + count > c) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) outside {} columns", begin,
                                     begin + count, c));
  }
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.values().data() + i * c + begin, count, out.data() + i * count);
  auto xn = x.handle();
  return make_result("slice_cols", matrix_shape(r, count), std::move(out), {x},
                     [xn, r, c, begin, count](Node& self) {
                       auto& g = grad_of(*xn);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           g[i * c + begin + j] += self.grad[i * count + j];
                     });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ContractError("stack_rows: no inputs");
  const std::size_t c = rows[0].size();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) {
      throw DimensionError(fmt::format("stack_rows: row sizes {} and {} differ", c, r.size()));
    }
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  std::vector<Tensor> ps(rows.begin(), rows.end());
  std::vector<std::shared_ptr<Node>> nodes;
  for (auto& p : ps) nodes.push_back(p.handle());
  return make_result("stack_rows", matrix_shape(rows.size(), c), std::move(out), ps,
                     [nodes, c](Node& self) {
                       for (std::size_t i = 0; i < nodes.size(); ++i) {
                         if (!nodes[i]->requires_grad) continue;
                         auto& g = grad_of(*nodes[i]);
                         for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (ids.empty()) throw ContractError("embedding: empty id list");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw IndexError(fmt::format("token id {} outside vocabulary of {}", ids[i], v));
    }
    std::copy_n(table.values().data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  auto tn = table.handle();
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result("embedding", matrix_shape(ids.size(), d), std::move(out), {table},
                     [tn, idv = std::move(idv), d](Node& self) {
                       auto& g = grad_of(*tn);
                       for (std::size_t i = 0; i < idv.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           g[static_cast<std::size_t>(idv[i]) * d + j] += self.grad[i * d + j];
                     });
}

Tensor conv1d_valid(const Tensor& seq, const Tensor& filters, const Tensor& bias,
                    std::size_t window) {
  const std::size_t m = seq.rows(), d = seq.cols();
  if (window == 0 || window > m) {
    throw WindowError(fmt::format("window {} does not fit a sequence of {} rows", window, m));
  }
  if (filters.cols() != window * d) {
    throw DimensionError(fmt::format("conv1d: filters {} need {} columns for window {} over width {}",
                                     shape_str(filters.shape()), window * d, window, d));
  }
  const kernels::ConvDims cd{m, d, window, filters.rows()};
  if (bias.size() != cd.filters) {
    throw DimensionError(fmt::format("conv1d: bias {} for {} filters",
                                     shape_str(bias.shape()), cd.filters));
  }
  std::vector<double> out(cd.out_length() * cd.filters);
  kernels::conv1d(seq.values(), filters.values(), bias.values(), out, cd);
  auto sn = seq.handle(), fn = filters.handle(), bn = bias.handle();
  return make_result(
      "conv1d", matrix_shape(cd.out_length(), cd.filters), std::move(out),
      {seq, filters, bias}, [sn, fn, bn, cd](Node& self) {
        if (sn->requires_grad) kernels::conv1d_grad_seq(self.grad, fn->value, grad_of(*sn), cd);
        if (fn->requires_grad || bn->requires_grad) {
          std::vector<double> gf(fn->value.size(), 0.0), gb(bn->value.size(), 0.0);
          kernels::conv1d_grad_filters(self.grad, sn->value, gf, gb, cd);
          if (fn->requires_grad) {
            auto& g = grad_of(*fn);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gf[i];
          }
          if (bn->requires_grad) {
            auto& g = grad_of(*bn);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gb[i];
          }
        }
      });
}

MaxPool max_over_time(const Tensor& map) {
  if (!map.defined() || map.size() == 0) throw DomainError("max_over_time: empty map");
  const std::size_t l = map.shape().size() == 2 ? map.rows() : map.size();
  const std::size_t f = map.shape().size() == 2 ? map.cols() : 1;
  std::vector<double> out(f);
  std::vector<std::size_t> arg(f, 0);
  for (std::size_t j = 0; j < f; ++j) {
    double best = map.values()[j];
    for (std::size_t i = 1; i < l; ++i) {
      const double v = map.values()[i * f + j];
      if (v > best) {
        best = v;
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  auto mn = map.handle();
  Tensor values = make_result("max_over_time", matrix_shape(1, f), std::move(out), {map},
                              [mn, arg, f](Node& self) {
                                auto& g = grad_of(*mn);
                                for (std::size_t j = 0; j < f; ++j) g[arg[j] * f + j] += self.grad[j];
                              });
  return MaxPool{std::move(values), std::move(arg)};
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError(fmt::format("dropout rate {} outside [0,1)", p));
  if (!train || p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  auto xn = x.handle();
  return make_result("dropout", x.shape(), std::move(out), {x},
                     [xn, mask = std::move(mask)](Node& self) {
                       auto& g = grad_of(*xn);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

namespace init {

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  uniform(t, -s, s, rng);
}

void uniform(Tensor& t, double lo, double hi, Rng& rng) {
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
}

}  // namespace init

}  // namespace meshgen::ag
