#pragma once

// Dense inner loops used by the autograd ops. Two implementations share one
// signature set: `serial` is the plain reference kept for testing, `omp`
// splits independent output elements across threads. Each output element is
// accumulated in a fixed order by exactly one thread, so results do not depend
// on the thread count.

#include <cstddef>
#include <span>

namespace meshgen::kernels {

enum class Backend { Serial, OpenMP };

// Process-wide backend used by the autograd ops. Defaults to OpenMP when the
// library was compiled with it.
Backend backend();
void set_backend(Backend b);
bool openmp_available();

struct MatDims {
  std::size_t rows;   // r
  std::size_t inner;  // k
  std::size_t cols;   // c
};

// Sequence [length x width] convolved with `filters` filters of window
// `window` rows. Filter f occupies filter_weights[f*window*width ...).
struct ConvDims {
  std::size_t length;
  std::size_t width;
  std::size_t window;
  std::size_t filters;
  std::size_t out_length() const { return length - window + 1; }
};

#define MESHGEN_KERNEL_SET                                                      \
  /* out[r x c] = a[r x k] * b[k x c] */                                        \
  void matmul(std::span<const double> a, std::span<const double> b,             \
              std::span<double> out, MatDims d);                                \
  /* grad_a[r x k] += grad_out * b^T */                                         \
  void matmul_grad_a(std::span<const double> grad_out,                          \
                     std::span<const double> b, std::span<double> grad_a,       \
                     MatDims d);                                                \
  /* grad_b[k x c] += a^T * grad_out */                                         \
  void matmul_grad_b(std::span<const double> a,                                 \
                     std::span<const double> grad_out,                          \
                     std::span<double> grad_b, MatDims d);                      \
  /* out[L x F] = valid windows of seq dotted with each filter, plus bias */    \
  void conv1d(std::span<const double> seq, std::span<const double> filters,     \
              std::span<const double> bias, std::span<double> out, ConvDims d); \
  void conv1d_grad_seq(std::span<const double> grad_out,                        \
                       std::span<const double> filters,                         \
                       std::span<double> grad_seq, ConvDims d);                 \
  void conv1d_grad_filters(std::span<const double> grad_out,                    \
                           std::span<const double> seq,                         \
                           std::span<double> grad_filters,                      \
                           std::span<double> grad_bias, ConvDims d);

namespace serial {
MESHGEN_KERNEL_SET
}
namespace omp {
MESHGEN_KERNEL_SET
}

#undef MESHGEN_KERNEL_SET

// Dispatching entry points.
void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> out, MatDims d);
void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, MatDims d);
void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, MatDims d);
void conv1d(std::span<const double> seq, std::span<const double> filters,
            std::span<const double> bias, std::span<double> out, ConvDims d);
void conv1d_grad_seq(std::span<const double> grad_out,
                     std::span<const double> filters,
                     std::span<double> grad_seq, ConvDims d);
void conv1d_grad_filters(std::span<const double> grad_out,
                         std::span<const double> seq,
                         std::span<double> grad_filters,
                         std::span<double> grad_bias, ConvDims d);

}  // namespace meshgen::kernels
