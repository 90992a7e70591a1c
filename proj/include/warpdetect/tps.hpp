#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/tensor.hpp"

namespace wd {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Source/target correspondences in normalized [-1, 1] coordinates.
struct ControlPointSet {
  std::vector<Point2> source;
  std::vector<Point2> target;

  std::size_t size() const { return source.size(); }

  /// Throws ConfigError for fewer than 3 points or mismatched sizes.
  void validate() const;
};

/// Warp T(p) = a0 + a1*x + a2*y + sum_i w_i U(|p - s_i|), one row of
/// coefficients per output coordinate.
struct TpsParams {
  std::array<std::array<double, 3>, 2> affine{};  // rows (a0, a1, a2) for x', y'
  std::vector<std::array<double, 2>> weights;     // w_i for (x', y')
  std::vector<Point2> source;
  double lambda = 0.0;

  std::size_t size() const { return source.size(); }
  static TpsParams identity(std::vector<Point2> source, double lambda = 0.0);

  /// Coefficients as [(N+3), 2]: N weight rows followed by a0, a1, a2 rows.
  Tensor coefficients() const;
  static TpsParams from_coefficients(const Tensor& coeffs, std::vector<Point2> source,
                                     double lambda);
};

struct SamplingGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor coords;  // [height, width, 2], (x, y) per output pixel

  Point2 at(std::size_t i, std::size_t j) const {
    return {coords[(i * width + j) * 2], coords[(i * width + j) * 2 + 1]};
  }
};

/// U(r) = r^2 ln r with U(0) = 0. Throws DomainError for r < 0.
double tps_kernel(double r);

/// Align-corners lattice coordinate of pixel `index` among `count`.
double lattice_coord(std::size_t index, std::size_t count);

/// Solves [[K + lambda I, P], [P^T, 0]] [w; a] = [v; 0] per output coordinate.
/// Throws FitError for degenerate (collinear or duplicated) sources and
/// DomainError for negative lambda.
TpsParams fit_tps(const ControlPointSet& points, double lambda);

/// Least-squares affine map of the correspondences (weights all zero).
TpsParams fit_affine(const ControlPointSet& points);

Point2 tps_transform(const TpsParams& params, Point2 p);

/// Closed-form whole-plane bending energy 8*pi * sum_c w_c^T K w_c.
double bending_energy(const TpsParams& params);

/// Backward-warp grid: output pixel (i, j) -> T(lattice point). Throws
/// ConfigError when height or width < 2.
SamplingGrid make_grid(const TpsParams& params, std::size_t height, std::size_t width);

/// Dense LU factorization with partial pivoting.
class LuFactorization {
 public:
  /// `a` is n*n row-major. Throws FitError when a pivot falls below
  /// `pivot_threshold`.
  LuFactorization(std::vector<double> a, std::size_t n, double pivot_threshold = 1e-12);
  /// Solves A x = b in place.
  void solve(std::span<double> b) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<double> lu_;
  std::vector<std::size_t> perm_;
};

/// Linear map from targets [N,2] to warp coefficients [(N+3),2] for fixed
/// sources: the TPS solve at a given lambda, or the least-squares affine fit.
class WarpFitter {
 public:
  enum class Kind { tps, affine };

  WarpFitter(std::vector<Point2> source, double lambda, Kind kind = Kind::tps);

  const std::vector<Point2>& source() const { return source_; }
  double lambda() const { return lambda_; }
  Kind kind() const { return kind_; }
  /// [(N+3), N] matrix so that coefficients = matrix * targets.
  const std::shared_ptr<const Tensor>& matrix() const { return matrix_; }

  TpsParams fit(std::span<const Point2> target) const;
  /// targets [N,2] -> coefficients [(N+3),2], differentiable in targets.
  Var fit(Tape& tape, Var targets) const;

 private:
  std::vector<Point2> source_;
  double lambda_;
  Kind kind_;
  std::shared_ptr<const Tensor> matrix_;
};

/// Per-pixel basis rows [U(|p - s_1|), ..., U(|p - s_N|), 1, x, y] over an
/// align-corners lattice; grid = basis * coefficients.
class GridBasis {
 public:
  GridBasis(const std::vector<Point2>& source, std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  const std::shared_ptr<const Tensor>& matrix() const { return matrix_; }

  /// coefficients [(N+3),2] -> grid [H,W,2], differentiable in coefficients.
  Var apply(Tape& tape, Var coefficients) const;
  SamplingGrid apply(const Tensor& coefficients) const;

 private:
  std::size_t height_, width_;
  std::shared_ptr<const Tensor> matrix_;
};

/// Differentiable make_grid: coefficients [(N+3),2] -> grid [H,W,2].
Var make_grid(Tape& tape, Var coefficients, const std::vector<Point2>& source,
              std::size_t height, std::size_t width);

// Plain-text document: lambda, N, source rows, affine rows, weight rows;
// 17 significant digits.
void write_tps(std::ostream& out, const TpsParams& params);
TpsParams read_tps(std::istream& in);
void save_tps(const std::string& path, const TpsParams& params);
TpsParams load_tps(const std::string& path);

/// Reads "x y" rows (blank lines and '#' comments ignored).
std::vector<Point2> load_points(const std::string& path);

}  // namespace wd
