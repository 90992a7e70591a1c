#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#include <omp.h>

#include "warpdetect/errors.hpp"
#include "warpdetect/kernels.hpp"

namespace wd::kernels {

ConvGeometry conv_geometry(std::size_t c_in, std::size_t height, std::size_t width,
                           std::size_t c_out, std::size_t k_h, std::size_t k_w,
                           std::size_t stride, std::size_t padding) {
  if (k_h % 2 == 0 || k_w % 2 == 0) throw ConfigError("conv2d kernel sizes must be odd");
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  const std::size_t span_h = height + 2 * padding;
  const std::size_t span_w = width + 2 * padding;
  if (span_h < k_h || span_w < k_w) {
    throw ConfigError("conv2d kernel larger than padded input");
  }
  if ((span_h - k_h) % stride != 0 || (span_w - k_w) % stride != 0) {
    throw ConfigError("conv2d output size is not integral for input " +
                      std::to_string(height) + "x" + std::to_string(width) + ", stride " +
                      std::to_string(stride) + ", padding " + std::to_string(padding));
  }
  ConvGeometry g;
  g.c_in = c_in;
  g.height = height;
  g.width = width;
  g.c_out = c_out;
  g.k_h = k_h;
  g.k_w = k_w;
  g.stride = stride;
  g.padding = padding;
  g.out_h = (span_h - k_h) / stride + 1;
  g.out_w = (span_w - k_w) / stride + 1;
  return g;
}

namespace {

// Output positions o in [lo, hi) whose input tap o*stride - pad + k lies
// inside [0, size).
struct Range {
  std::size_t lo, hi;
};

Range valid_outputs(std::size_t out, std::size_t size, std::size_t stride, std::size_t pad,
                    std::size_t k) {
  // need o*stride + k >= pad and o*stride + k - pad <= size - 1
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (size + pad > k) hi = std::min(out, (size - 1 + pad - k) / stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

std::size_t taps(const ConvGeometry& g) { return g.k_h * g.k_w; }
std::size_t plane(const ConvGeometry& g) { return g.out_h * g.out_w; }

// Rows of the column matrix: one per (ci, ky, kx), each a full output plane
// of input taps (zero where the tap falls in the padding).
void im2col_channel(const ConvGeometry& g, const double* in, double* col) {
  const std::size_t p = plane(g);
  for (std::size_t ky = 0; ky < g.k_h; ++ky) {
    const Range ry = valid_outputs(g.out_h, g.height, g.stride, g.padding, ky);
    for (std::size_t kx = 0; kx < g.k_w; ++kx, col += p) {
      const Range rx = valid_outputs(g.out_w, g.width, g.stride, g.padding, kx);
      std::fill(col, col + p, 0.0);
      for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
        const double* row = in + (oy * g.stride + ky - g.padding) * g.width;
        double* crow = col + oy * g.out_w;
        for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) crow[ox] = row[ox * g.stride + kx - g.padding];
      }
    }
  }
}

void col2im_channel(const ConvGeometry& g, const double* col, double* din) {
  const std::size_t p = plane(g);
  for (std::size_t ky = 0; ky < g.k_h; ++ky) {
    const Range ry = valid_outputs(g.out_h, g.height, g.stride, g.padding, ky);
    for (std::size_t kx = 0; kx < g.k_w; ++kx, col += p) {
      const Range rx = valid_outputs(g.out_w, g.width, g.stride, g.padding, kx);
      for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
        double* row = din + (oy * g.stride + ky - g.padding) * g.width;
        const double* crow = col + oy * g.out_w;
        for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) row[ox * g.stride + kx - g.padding] += crow[ox];
      }
    }
  }
}

std::vector<double> im2col(const ConvGeometry& g, std::span<const double> x) {
  std::vector<double> col(g.c_in * taps(g) * plane(g));
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    im2col_channel(g, x.data() + ci * g.height * g.width, col.data() + ci * taps(g) * plane(g));
  }
  return col;
}

inline void axpy(double a, const double* __restrict x, double* __restrict y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four interleaved partial sums so the loop vectorizes without reassociation flags.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void forward_channel(const ConvGeometry& g, const std::vector<double>& col,
                     std::span<const double> kernel, std::span<const double> bias,
                     std::span<double> y, std::size_t co) {
  const std::size_t p = plane(g), rows = g.c_in * taps(g);
  double* out = y.data() + co * p;
  std::fill(out, out + p, bias.empty() ? 0.0 : bias[co]);
  const double* w = kernel.data() + co * rows;
  for (std::size_t r = 0; r < rows; ++r) axpy(w[r], col.data() + r * p, out, p);
}

// dcol rows for input channel ci, then scattered back onto its plane.
void backward_input_channel(const ConvGeometry& g, std::span<const double> kernel,
                            std::span<const double> dy, std::span<double> dx, std::size_t ci,
                            double* dcol) {
  const std::size_t p = plane(g), t = taps(g), rows = g.c_in * t;
  std::fill(dcol, dcol + t * p, 0.0);
  for (std::size_t co = 0; co < g.c_out; ++co) {
    const double* w = kernel.data() + co * rows + ci * t;
    for (std::size_t k = 0; k < t; ++k) axpy(w[k], dy.data() + co * p, dcol + k * p, p);
  }
  col2im_channel(g, dcol, dx.data() + ci * g.height * g.width);
}

void backward_params_channel(const ConvGeometry& g, const std::vector<double>& col,
                             std::span<const double> dy, std::span<double> dkernel,
                             std::span<double> dbias, std::size_t co) {
  const std::size_t p = plane(g), rows = g.c_in * taps(g);
  const double* dout = dy.data() + co * p;
  if (!dbias.empty()) {
    double s = 0.0;
    for (std::size_t i = 0; i < p; ++i) s += dout[i];
    dbias[co] += s;
  }
  if (dkernel.empty()) return;
  for (std::size_t r = 0; r < rows; ++r) dkernel[co * rows + r] += dot(dout, col.data() + r * p, p);
}

}  // namespace

namespace serial {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> y) {
  const auto col = im2col(g, x);
  for (std::size_t co = 0; co < g.c_out; ++co) forward_channel(g, col, kernel, bias, y, co);
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> dy, std::span<double> dx) {
  std::vector<double> dcol(taps(g) * plane(g));
  for (std::size_t ci = 0; ci < g.c_in; ++ci) backward_input_channel(g, kernel, dy, dx, ci, dcol.data());
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dkernel,
                            std::span<double> dbias) {
  const auto col = dkernel.empty() ? std::vector<double>() : im2col(g, x);
  for (std::size_t co = 0; co < g.c_out; ++co) backward_params_channel(g, col, dy, dkernel, dbias, co);
}

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> y) {
  const auto col = im2col(g, x);
  const auto n = static_cast<long>(g.c_out);
#pragma omp parallel for schedule(static)
  for (long co = 0; co < n; ++co) forward_channel(g, col, kernel, bias, y, static_cast<std::size_t>(co));
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> dy, std::span<double> dx) {
  const auto n = static_cast<long>(g.c_in);
#pragma omp parallel
  {
    std::vector<double> dcol(taps(g) * plane(g));
#pragma omp for schedule(static)
    for (long ci = 0; ci < n; ++ci) {
      backward_input_channel(g, kernel, dy, dx, static_cast<std::size_t>(ci), dcol.data());
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dkernel,
                            std::span<double> dbias) {
  const auto col = dkernel.empty() ? std::vector<double>() : im2col(g, x);
  const auto n = static_cast<long>(g.c_out);
#pragma omp parallel for schedule(static)
  for (long co = 0; co < n; ++co) {
    backward_params_channel(g, col, dy, dkernel, dbias, static_cast<std::size_t>(co));
  }
}

}  // namespace omp

int configured_threads() {
  if (const char* env = std::getenv("WARPDETECT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return omp_get_max_threads();
}

void apply_thread_limit() { omp_set_num_threads(configured_threads()); }

}  // namespace wd::kernels
