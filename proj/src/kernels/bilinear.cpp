#include <algorithm>
#include <cmath>

#include "warpdetect/kernels.hpp"

namespace wd::kernels {

double unnormalize(double coord, std::size_t size) {
  const double pix = (coord + 1.0) * 0.5 * static_cast<double>(size - 1);
  const double snapped = std::nearbyint(pix);
  return std::abs(pix - snapped) < 1e-10 ? snapped : pix;
}

namespace {

struct Taps {
  long x0, y0;
  double fx, fy;
  double dx_scale, dy_scale;  // d(pixel)/d(normalized), 0 when clamped
};

Taps locate(const SampleGeometry& g, double gx, double gy) {
  double ix = unnormalize(gx, g.width);
  double iy = unnormalize(gy, g.height);
  double sx = 0.5 * static_cast<double>(g.width - 1);
  double sy = 0.5 * static_cast<double>(g.height - 1);
  if (g.padding == PaddingMode::clamp) {
    const double max_x = static_cast<double>(g.width - 1);
    const double max_y = static_cast<double>(g.height - 1);
    if (ix < 0.0 || ix > max_x) {
      ix = std::clamp(ix, 0.0, max_x);
      sx = 0.0;
    }
    if (iy < 0.0 || iy > max_y) {
      iy = std::clamp(iy, 0.0, max_y);
      sy = 0.0;
    }
  }
  const double fx0 = std::floor(ix);
  const double fy0 = std::floor(iy);
  return {static_cast<long>(fx0), static_cast<long>(fy0), ix - fx0, iy - fy0, sx, sy};
}

inline bool inside(long v, std::size_t n) { return v >= 0 && v < static_cast<long>(n); }

inline double pixel(const double* plane, const SampleGeometry& g, long y, long x) {
  return inside(x, g.width) && inside(y, g.height) ? plane[y * static_cast<long>(g.width) + x]
                                                   : 0.0;
}

void forward_pixel(const SampleGeometry& g, std::span<const double> x,
                   std::span<const double> grid, std::span<double> y, std::size_t p) {
  const Taps t = locate(g, grid[2 * p], grid[2 * p + 1]);
  const double w00 = (1.0 - t.fx) * (1.0 - t.fy);
  const double w01 = t.fx * (1.0 - t.fy);
  const double w10 = (1.0 - t.fx) * t.fy;
  const double w11 = t.fx * t.fy;
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x.data() + c * in_plane;
    y[c * out_plane + p] = w00 * pixel(plane, g, t.y0, t.x0) + w01 * pixel(plane, g, t.y0, t.x0 + 1) +
                           w10 * pixel(plane, g, t.y0 + 1, t.x0) +
                           w11 * pixel(plane, g, t.y0 + 1, t.x0 + 1);
  }
}

void grid_grad_pixel(const SampleGeometry& g, std::span<const double> x,
                     std::span<const double> grid, std::span<const double> dy,
                     std::span<double> dgrid, std::size_t p) {
  const Taps t = locate(g, grid[2 * p], grid[2 * p + 1]);
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  double gx = 0.0, gy = 0.0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x.data() + c * in_plane;
    const double v00 = pixel(plane, g, t.y0, t.x0);
    const double v01 = pixel(plane, g, t.y0, t.x0 + 1);
    const double v10 = pixel(plane, g, t.y0 + 1, t.x0);
    const double v11 = pixel(plane, g, t.y0 + 1, t.x0 + 1);
    const double d = dy[c * out_plane + p];
    gx += d * ((v01 - v00) * (1.0 - t.fy) + (v11 - v10) * t.fy);
    gy += d * ((v10 - v00) * (1.0 - t.fx) + (v11 - v01) * t.fx);
  }
  dgrid[2 * p] += gx * t.dx_scale;
  dgrid[2 * p + 1] += gy * t.dy_scale;
}

void input_grad_channel(const SampleGeometry& g, std::span<const double> grid,
                        std::span<const double> dy, std::span<double> dx, std::size_t c) {
  double* plane = dx.data() + c * g.height * g.width;
  const std::size_t out_plane = g.out_h * g.out_w;
  const auto add = [&](long yy, long xx, double v) {
    if (inside(xx, g.width) && inside(yy, g.height)) plane[yy * static_cast<long>(g.width) + xx] += v;
  };
  for (std::size_t p = 0; p < out_plane; ++p) {
    const double d = dy[c * out_plane + p];
    if (d == 0.0) continue;
    const Taps t = locate(g, grid[2 * p], grid[2 * p + 1]);
    add(t.y0, t.x0, d * (1.0 - t.fx) * (1.0 - t.fy));
    add(t.y0, t.x0 + 1, d * t.fx * (1.0 - t.fy));
    add(t.y0 + 1, t.x0, d * (1.0 - t.fx) * t.fy);
    add(t.y0 + 1, t.x0 + 1, d * t.fx * t.fy);
  }
}

}  // namespace

namespace serial {

void bilinear_forward(const SampleGeometry& g, std::span<const double> x,
                      std::span<const double> grid, std::span<double> y) {
  for (std::size_t p = 0; p < g.out_h * g.out_w; ++p) forward_pixel(g, x, grid, y, p);
}

void bilinear_backward(const SampleGeometry& g, std::span<const double> x,
                       std::span<const double> grid, std::span<const double> dy,
                       std::span<double> dx, std::span<double> dgrid) {
  if (!dgrid.empty()) {
    for (std::size_t p = 0; p < g.out_h * g.out_w; ++p) grid_grad_pixel(g, x, grid, dy, dgrid, p);
  }
  if (!dx.empty()) {
    for (std::size_t c = 0; c < g.channels; ++c) input_grad_channel(g, grid, dy, dx, c);
  }
}

}  // namespace serial

namespace omp {

void bilinear_forward(const SampleGeometry& g, std::span<const double> x,
                      std::span<const double> grid, std::span<double> y) {
  const auto n = static_cast<long>(g.out_h * g.out_w);
#pragma omp parallel for schedule(static)
  for (long p = 0; p < n; ++p) forward_pixel(g, x, grid, y, p);
}

void bilinear_backward(const SampleGeometry& g, std::span<const double> x,
                       std::span<const double> grid, std::span<const double> dy,
                       std::span<double> dx, std::span<double> dgrid) {
  if (!dgrid.empty()) {
    const auto n = static_cast<long>(g.out_h * g.out_w);
#pragma omp parallel for schedule(static)
    for (long p = 0; p < n; ++p) grid_grad_pixel(g, x, grid, dy, dgrid, p);
  }
  if (!dx.empty()) {
    const auto n = static_cast<long>(g.channels);
#pragma omp parallel for schedule(static)
    for (long c = 0; c < n; ++c) input_grad_channel(g, grid, dy, dx, c);
  }
}

}  // namespace omp

}  // namespace wd::kernels
