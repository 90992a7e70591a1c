#pragma once

// Hot loops behind the tape operations. Each kernel exists twice: a serial
// reference in `serial` and an OpenMP version in `omp` that partitions work
// over disjoint output slices, so both produce bit-identical results. The
// tape operations call the `omp` versions; tests and the benchmark compare
// the two.

#include <cstddef>
#include <span>

namespace wd::kernels {

struct ConvGeometry {
  std::size_t c_in = 0, height = 0, width = 0;
  std::size_t c_out = 0, k_h = 0, k_w = 0;
  std::size_t stride = 1, padding = 0;
  std::size_t out_h = 0, out_w = 0;
};

/// Validates the configuration and derives the output size. Throws
/// ConfigError for even kernels, zero stride or a non-integral output size.
ConvGeometry conv_geometry(std::size_t c_in, std::size_t height, std::size_t width,
                           std::size_t c_out, std::size_t k_h, std::size_t k_w,
                           std::size_t stride, std::size_t padding);

enum class PaddingMode { zeros, clamp };

struct SampleGeometry {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t out_h = 0, out_w = 0;
  PaddingMode padding = PaddingMode::zeros;
};

/// Align-corners map of a normalized coordinate to a pixel coordinate.
/// Values within 1e-10 px of a lattice point snap onto it so that lattice
/// grids sample exactly.
double unnormalize(double coord, std::size_t size);

#define WD_KERNEL_DECLS                                                                    \
  void conv2d_forward(const ConvGeometry& g, std::span<const double> x,                    \
                      std::span<const double> kernel, std::span<const double> bias,        \
                      std::span<double> y);                                                \
  void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,        \
                             std::span<const double> dy, std::span<double> dx);            \
  void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,            \
                              std::span<const double> dy, std::span<double> dkernel,       \
                              std::span<double> dbias);                                    \
  void bilinear_forward(const SampleGeometry& g, std::span<const double> x,                \
                        std::span<const double> grid, std::span<double> y);                \
  void bilinear_backward(const SampleGeometry& g, std::span<const double> x,               \
                         std::span<const double> grid, std::span<const double> dy,         \
                         std::span<double> dx, std::span<double> dgrid);                   \
  void matmul(std::size_t rows, std::size_t inner, std::size_t cols,                       \
              std::span<const double> m, std::span<const double> x, std::span<double> y);  \
  void matmul_backward(std::size_t rows, std::size_t inner, std::size_t cols,              \
                       std::span<const double> m, std::span<const double> dy,              \
                       std::span<double> dx);

// conv2d_* accumulate into dx/dkernel/dbias; bilinear_backward accumulates
// into dx and dgrid (either may be empty to skip). matmul computes
// y[rows,cols] = m[rows,inner] * x[inner,cols]; matmul_backward accumulates
// dx += m^T dy.
namespace serial {
WD_KERNEL_DECLS
}
namespace omp {
WD_KERNEL_DECLS
}

#undef WD_KERNEL_DECLS

/// Worker count: WARPDETECT_THREADS when set, otherwise the OpenMP default.
int configured_threads();
void apply_thread_limit();

}  // namespace wd::kernels
