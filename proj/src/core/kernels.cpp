#include "meshgen/kernels.hpp"

#include <atomic>

namespace meshgen::kernels {

namespace {
#ifdef MESHGEN_HAVE_OPENMP
std::atomic<Backend> g_backend{Backend::OpenMP};
#else
std::atomic<Backend> g_backend{Backend::Serial};
#endif
bool use_omp() { return g_backend.load(std::memory_order_relaxed) == Backend::OpenMP; }
}  // namespace

Backend backend() { return g_backend.load(); }

void set_backend(Backend b) {
  if (b == Backend::OpenMP && !openmp_available()) b = Backend::Serial;
  g_backend.store(b);
}

bool openmp_available() {
#ifdef MESHGEN_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> out, MatDims d) {
  use_omp() ? omp::matmul(a, b, out, d) : serial::matmul(a, b, out, d);
}

void matmul_grad_a(std::span<const double> grad_out, std::span<const double> b,
                   std::span<double> grad_a, MatDims d) {
  use_omp() ? omp::matmul_grad_a(grad_out, b, grad_a, d)
            : serial::matmul_grad_a(grad_out, b, grad_a, d);
}

void matmul_grad_b(std::span<const double> a, std::span<const double> grad_out,
                   std::span<double> grad_b, MatDims d) {
  use_omp() ? omp::matmul_grad_b(a, grad_out, grad_b, d)
            : serial::matmul_grad_b(a, grad_out, grad_b, d);
}

void conv1d(std::span<const double> seq, std::span<const double> filters,
            std::span<const double> bias, std::span<double> out, ConvDims d) {
  use_omp() ? omp::conv1d(seq, filters, bias, out, d)
            : serial::conv1d(seq, filters, bias, out, d);
}

void conv1d_grad_seq(std::span<const double> grad_out,
                     std::span<const double> filters,
                     std::span<double> grad_seq, ConvDims d) {
  use_omp() ? omp::conv1d_grad_seq(grad_out, filters, grad_seq, d)
            : serial::conv1d_grad_seq(grad_out, filters, grad_seq, d);
}

void conv1d_grad_filters(std::span<const double> grad_out,
                         std::span<const double> seq,
                         std::span<double> grad_filters,
                         std::span<double> grad_bias, ConvDims d) {
  use_omp() ? omp::conv1d_grad_filters(grad_out, seq, grad_filters, grad_bias, d)
            : serial::conv1d_grad_filters(grad_out, seq, grad_filters, grad_bias, d);
}

}  // namespace meshgen::kernels
