#include "warpdetect/kernels.hpp"

namespace wd::kernels {

namespace {

void row_product(std::size_t inner, std::size_t cols, std::span<const double> m,
                 std::span<const double> x, std::span<double> y, std::size_t r) {
  const double* mrow = m.data() + r * inner;
  double* yrow = y.data() + r * cols;
  for (std::size_t c = 0; c < cols; ++c) yrow[c] = 0.0;
  for (std::size_t k = 0; k < inner; ++k) {
    const double mv = mrow[k];
    const double* xrow = x.data() + k * cols;
    for (std::size_t c = 0; c < cols; ++c) yrow[c] += mv * xrow[c];
  }
}

void transposed_row(std::size_t rows, std::size_t inner, std::size_t cols,
                    std::span<const double> m, std::span<const double> dy, std::span<double> dx,
                    std::size_t k) {
  double* dxrow = dx.data() + k * cols;
  for (std::size_t r = 0; r < rows; ++r) {
    const double mv = m[r * inner + k];
    const double* dyrow = dy.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dxrow[c] += mv * dyrow[c];
  }
}

}  // namespace

namespace serial {

void matmul(std::size_t rows, std::size_t inner, std::size_t cols, std::span<const double> m,
            std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) row_product(inner, cols, m, x, y, r);
}

void matmul_backward(std::size_t rows, std::size_t inner, std::size_t cols,
                     std::span<const double> m, std::span<const double> dy,
                     std::span<double> dx) {
  for (std::size_t k = 0; k < inner; ++k) transposed_row(rows, inner, cols, m, dy, dx, k);
}

}  // namespace serial

namespace omp {

void matmul(std::size_t rows, std::size_t inner, std::size_t cols, std::span<const double> m,
            std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<long>(rows);
#pragma omp parallel for schedule(static)
  for (long r = 0; r < n; ++r) row_product(inner, cols, m, x, y, r);
}

void matmul_backward(std::size_t rows, std::size_t inner, std::size_t cols,
                     std::span<const double> m, std::span<const double> dy,
                     std::span<double> dx) {
  const auto n = static_cast<long>(inner);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) transposed_row(rows, inner, cols, m, dy, dx, k);
}

}  // namespace omp

}  // namespace wd::kernels
