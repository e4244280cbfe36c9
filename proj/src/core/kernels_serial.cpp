#include "meshgen/kernels.hpp"

namespace meshgen::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> out, MatDims d) {
  for (std::size_t i = 0; i < d.rows; ++i) {
    for (std::size_t j = 0; j < d.cols; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < d.inner; ++p) {
        acc += a[i * d.inner + p] * b[p * d.cols + j];
      }
      out[i * d.cols + j] = acc;
    }
  }
}

void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, MatDims d) {
  for (std::size_t i = 0; i < d.rows; ++i) {
    for (std::size_t p = 0; p < d.inner; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d.cols; ++j) {
        acc += grad_out[i * d.cols + j] * b[p * d.cols + j];
      }
      grad_a[i * d.inner + p] += acc;
    }
  }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, MatDims d) {
  for (std::size_t p = 0; p < d.inner; ++p) {
    for (std::size_t j = 0; j < d.cols; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d.rows; ++i) {
        acc += a[i * d.inner + p] * grad_out[i * d.cols + j];
      }
      grad_b[p * d.cols + j] += acc;
    }
  }
}

void conv1d(std::span<const double> seq, std::span<const double> filters,
            std::span<const double> bias, std::span<double> out, ConvDims d) {
  const std::size_t span = d.window * d.width;
  const std::size_t len = d.out_length();
  for (std::size_t l = 0; l < len; ++l) {
    const double* window = seq.data() + l * d.width;
    for (std::size_t f = 0; f < d.filters; ++f) {
      const double* filt = filters.data() + f * span;
      double acc = bias[f];
      for (std::size_t i = 0; i < span; ++i) acc += window[i] * filt[i];
      out[l * d.filters + f] = acc;
    }
  }
}

void conv1d_grad_seq(std::span<const double> grad_out,
                     std::span<const double> filters,
                     std::span<double> grad_seq, ConvDims d) {
  const std::size_t span = d.window * d.width;
  const std::size_t len = d.out_length();
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t f = 0; f < d.filters; ++f) {
      const double g = grad_out[l * d.filters + f];
      if (g == 0.0) continue;
      const double* filt = filters.data() + f * span;
      for (std::size_t i = 0; i < span; ++i) grad_seq[l * d.width + i] += g * filt[i];
    }
  }
}

void conv1d_grad_filters(std::span<const double> grad_out,
                         std::span<const double> seq,
                         std::span<double> grad_filters,
                         std::span<double> grad_bias, ConvDims d) {
  const std::size_t span = d.window * d.width;
  const std::size_t len = d.out_length();
  for (std::size_t l = 0; l < len; ++l) {
    const double* window = seq.data() + l * d.width;
    for (std::size_t f = 0; f < d.filters; ++f) {
      const double g = grad_out[l * d.filters + f];
      grad_bias[f] += g;
      if (g == 0.0) continue;
      double* gf = grad_filters.data() + f * span;
      for (std::size_t i = 0; i < span; ++i) gf[i] += g * window[i];
    }
  }
}

}  // namespace meshgen::kernels::serial
