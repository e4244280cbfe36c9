#include "meshgen/kernels.hpp"

// Every parallel loop below partitions the OUTPUT index space, and each output
// element is summed in the same order as the serial reference, so the two
// backends agree bitwise.

namespace meshgen::kernels::omp {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1 << 14;
}

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> out, MatDims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.rows * d.cols);
  const bool par = d.rows * d.cols * d.inner >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx) / d.cols;
    const std::size_t j = static_cast<std::size_t>(idx) % d.cols;
    double acc = 0.0;
    for (std::size_t p = 0; p < d.inner; ++p) {
      acc += a[i * d.inner + p] * b[p * d.cols + j];
    }
    out[static_cast<std::size_t>(idx)] = acc;
  }
}

void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, MatDims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.rows * d.inner);
  const bool par = d.rows * d.cols * d.inner >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
    const std::size_t i = static_cast<std::size_t>(idx) / d.inner;
    const std::size_t p = static_cast<std::size_t>(idx) % d.inner;
    double acc = 0.0;
    for (std::size_t j = 0; j < d.cols; ++j) {
      acc += grad_out[i * d.cols + j] * b[p * d.cols + j];
    }
    grad_a[static_cast<std::size_t>(idx)] += acc;
  }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, MatDims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.inner * d.cols);
  const bool par = d.rows * d.cols * d.inner >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
    const std::size_t p = static_cast<std::size_t>(idx) / d.cols;
    const std::size_t j = static_cast<std::size_t>(idx) % d.cols;
    double acc = 0.0;
    for (std::size_t i = 0; i < d.rows; ++i) {
      acc += a[i * d.inner + p] * grad_out[i * d.cols + j];
    }
    grad_b[static_cast<std::size_t>(idx)] += acc;
  }
}

void conv1d(std::span<const double> seq, std::span<const double> filters,
            std::span<const double> bias, std::span<double> out, ConvDims d) {
  const std::size_t span = d.window * d.width;
  const auto len = static_cast<std::ptrdiff_t>(d.out_length());
  const bool par = d.out_length() * d.filters * span >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t l = 0; l < len; ++l) {
    const double* window = seq.data() + static_cast<std::size_t>(l) * d.width;
    for (std::size_t f = 0; f < d.filters; ++f) {
      const double* filt = filters.data() + f * span;
      double acc = bias[f];
      for (std::size_t i = 0; i < span; ++i) acc += window[i] * filt[i];
      out[static_cast<std::size_t>(l) * d.filters + f] = acc;
    }
  }
}

void conv1d_grad_seq(std::span<const double> grad_out,
                     std::span<const double> filters,
                     std::span<double> grad_seq, ConvDims d) {
  const std::size_t span = d.window * d.width;
  const std::size_t len = d.out_length();
  const auto n = static_cast<std::ptrdiff_t>(d.length * d.width);
  const bool par = len * d.filters * span >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t idx = 0; idx < n; ++idx) {
    const std::size_t row = static_cast<std::size_t>(idx) / d.width;
    const std::size_t col = static_cast<std::size_t>(idx) % d.width;
    const std::size_t l_lo = row + 1 >= d.window ? row + 1 - d.window : 0;
    const std::size_t l_hi = row < len ? row : len - 1;
    double acc = grad_seq[static_cast<std::size_t>(idx)];
    for (std::size_t l = l_lo; l <= l_hi; ++l) {
      const std::size_t i = (row - l) * d.width + col;
      for (std::size_t f = 0; f < d.filters; ++f) {
        const double g = grad_out[l * d.filters + f];
        if (g == 0.0) continue;
        acc += g * filters[f * span + i];
      }
    }
    grad_seq[static_cast<std::size_t>(idx)] = acc;
  }
}

void conv1d_grad_filters(std::span<const double> grad_out,
                         std::span<const double> seq,
                         std::span<double> grad_filters,
                         std::span<double> grad_bias, ConvDims d) {
  const std::size_t span = d.window * d.width;
  const std::size_t len = d.out_length();
  const auto nf = static_cast<std::ptrdiff_t>(d.filters);
  const bool par = len * d.filters * span >= kMinParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t fi = 0; fi < nf; ++fi) {
    const auto f = static_cast<std::size_t>(fi);
    double* gf = grad_filters.data() + f * span;
    for (std::size_t l = 0; l < len; ++l) {
      const double g = grad_out[l * d.filters + f];
      grad_bias[f] += g;
      if (g == 0.0) continue;
      const double* window = seq.data() + l * d.width;
      for (std::size_t i = 0; i < span; ++i) gf[i] += g * window[i];
    }
  }
}

}  // namespace meshgen::kernels::omp
