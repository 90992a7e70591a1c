#include "warpdetect/tps.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "warpdetect/errors.hpp"
#include "warpdetect/ops.hpp"

namespace wd {

void ControlPointSet::validate() const {
  if (source.size() != target.size()) {
    throw ConfigError("control point set has " + std::to_string(source.size()) + " sources but " +
                      std::to_string(target.size()) + " targets");
  }
  if (source.size() < 3) {
    throw ConfigError("thin-plate spline needs at least 3 control points, got " +
                      std::to_string(source.size()));
  }
}

TpsParams TpsParams::identity(std::vector<Point2> source, double lambda) {
  TpsParams p;
  p.affine = {{{0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  p.weights.assign(source.size(), {0.0, 0.0});
  p.source = std::move(source);
  p.lambda = lambda;
  return p;
}

Tensor TpsParams::coefficients() const {
  const std::size_t n = size();
  Tensor c({n + 3, 2});
  for (std::size_t i = 0; i < n; ++i) {
    c[2 * i] = weights[i][0];
    c[2 * i + 1] = weights[i][1];
  }
  for (std::size_t k = 0; k < 3; ++k) {
    c[2 * (n + k)] = affine[0][k];
    c[2 * (n + k) + 1] = affine[1][k];
  }
  return c;
}

TpsParams TpsParams::from_coefficients(const Tensor& coeffs, std::vector<Point2> source,
                                       double lambda) {
  const std::size_t n = source.size();
  if (coeffs.shape() != Shape{n + 3, 2}) {
    throw DimensionError("TPS coefficients must be [" + std::to_string(n + 3) + ",2], got " +
                         shape_string(coeffs.shape()));
  }
  TpsParams p;
  p.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.weights[i] = {coeffs[2 * i], coeffs[2 * i + 1]};
  for (std::size_t k = 0; k < 3; ++k) {
    p.affine[0][k] = coeffs[2 * (n + k)];
    p.affine[1][k] = coeffs[2 * (n + k) + 1];
  }
  p.source = std::move(source);
  p.lambda = lambda;
  return p;
}

double tps_kernel(double r) {
  if (r < 0.0 || std::isnan(r)) throw DomainError("tps_kernel: negative distance");
  if (r == 0.0) return 0.0;
  return r * r * std::log(r);
}

double lattice_coord(std::size_t index, std::size_t count) {
  if (count < 2) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(index) / static_cast<double>(count - 1);
}

// ---------------------------------------------------------------------------

LuFactorization::LuFactorization(std::vector<double> a, std::size_t n, double pivot_threshold)
    : n_(n), lu_(std::move(a)), perm_(n) {
  if (lu_.size() != n * n) throw DimensionError("LU: matrix is not n*n");
  for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(lu_[i * n + k]) > std::abs(lu_[piv * n + k])) piv = i;
    }
    if (std::abs(lu_[piv * n + k]) < pivot_threshold) {
      throw FitError("singular system: pivot " + std::to_string(k) + " has magnitude " +
                     std::to_string(std::abs(lu_[piv * n + k])));
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu_[k * n + j], lu_[piv * n + j]);
      std::swap(perm_[k], perm_[piv]);
    }
    const double d = lu_[k * n + k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu_[i * n + k] / d;
      lu_[i * n + k] = f;
      if (f == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) lu_[i * n + j] -= f * lu_[k * n + j];
    }
  }
}

void LuFactorization::solve(std::span<double> b) const {
  if (b.size() != n_) throw DimensionError("LU solve: rhs size mismatch");
  std::vector<double> x(n_);
  for (std::size_t i = 0; i < n_; ++i) x[i] = b[perm_[i]];
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < i; ++j) x[i] -= lu_[i * n_ + j] * x[j];
  }
  for (std::size_t i = n_; i-- > 0;) {
    for (std::size_t j = i + 1; j < n_; ++j) x[i] -= lu_[i * n_ + j] * x[j];
    x[i] /= lu_[i * n_ + i];
  }
  std::copy(x.begin(), x.end(), b.begin());
}

namespace {

void require_not_collinear(const std::vector<Point2>& s) {
  // Farthest point from s[0], then the largest cross product against that axis.
  std::size_t far = 0;
  double best = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double d = std::hypot(s[i].x - s[0].x, s[i].y - s[0].y);
    if (d > best) {
      best = d;
      far = i;
    }
  }
  const double ax = s[far].x - s[0].x, ay = s[far].y - s[0].y;
  double area = 0.0;
  for (const auto& p : s) {
    area = std::max(area, std::abs(ax * (p.y - s[0].y) - ay * (p.x - s[0].x)));
  }
  if (best < 1e-12 || area < 1e-12 * std::max(best, 1.0)) {
    throw FitError("degenerate control points: all " + std::to_string(s.size()) +
                   " sources are collinear");
  }
}

std::vector<double> tps_system(const std::vector<Point2>& s, double lambda) {
  const std::size_t n = s.size(), m = n + 3;
  std::vector<double> a(m * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a[i * m + j] = tps_kernel(std::hypot(s[i].x - s[j].x, s[i].y - s[j].y));
    }
    a[i * m + i] += lambda;
    const double p[3] = {1.0, s[i].x, s[i].y};
    for (std::size_t k = 0; k < 3; ++k) {
      a[i * m + n + k] = p[k];
      a[(n + k) * m + i] = p[k];
    }
  }
  return a;
}

LuFactorization factor_tps(const std::vector<Point2>& s, double lambda) {
  if (lambda < 0.0 || std::isnan(lambda)) throw DomainError("TPS lambda must be >= 0");
  require_not_collinear(s);
  try {
    return LuFactorization(tps_system(s, lambda), s.size() + 3);
  } catch (const FitError& e) {
    throw FitError(std::string("degenerate control points: ") + e.what() +
                   " (duplicate sources?)");
  }
}

// Normal equations of the affine least-squares fit: (P^T P) a = P^T t.
LuFactorization factor_affine(const std::vector<Point2>& s) {
  require_not_collinear(s);
  std::vector<double> ptp(9, 0.0);
  for (const auto& p : s) {
    const double row[3] = {1.0, p.x, p.y};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) ptp[i * 3 + j] += row[i] * row[j];
    }
  }
  return LuFactorization(std::move(ptp), 3);
}

}  // namespace

TpsParams fit_tps(const ControlPointSet& points, double lambda) {
  points.validate();
  const auto lu = factor_tps(points.source, lambda);
  const std::size_t n = points.size();
  TpsParams p;
  p.source = points.source;
  p.lambda = lambda;
  p.weights.resize(n);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> rhs(n + 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = c == 0 ? points.target[i].x : points.target[i].y;
    lu.solve(rhs);
    for (std::size_t i = 0; i < n; ++i) p.weights[i][c] = rhs[i];
    for (std::size_t k = 0; k < 3; ++k) p.affine[c][k] = rhs[n + k];
  }
  return p;
}

TpsParams fit_affine(const ControlPointSet& points) {
  points.validate();
  const auto lu = factor_affine(points.source);
  TpsParams p = TpsParams::identity(points.source);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> rhs(3, 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double t = c == 0 ? points.target[i].x : points.target[i].y;
      rhs[0] += t;
      rhs[1] += points.source[i].x * t;
      rhs[2] += points.source[i].y * t;
    }
    lu.solve(rhs);
    for (std::size_t k = 0; k < 3; ++k) p.affine[c][k] = rhs[k];
  }
  return p;
}

Point2 tps_transform(const TpsParams& params, Point2 p) {
  double out[2];
  for (int c = 0; c < 2; ++c) {
    double v = params.affine[c][0] + params.affine[c][1] * p.x + params.affine[c][2] * p.y;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& s = params.source[i];
      v += params.weights[i][c] * tps_kernel(std::hypot(p.x - s.x, p.y - s.y));
    }
    out[c] = v;
  }
  return {out[0], out[1]};
}

double bending_energy(const TpsParams& params) {
  const std::size_t n = params.size();
  double e = 0.0;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const auto& a = params.source[i];
        const auto& b = params.source[j];
        e += params.weights[i][c] * params.weights[j][c] *
             tps_kernel(std::hypot(a.x - b.x, a.y - b.y));
      }
    }
  }
  return 8.0 * std::numbers::pi * e;
}

SamplingGrid make_grid(const TpsParams& params, std::size_t height, std::size_t width) {
  if (height < 2 || width < 2) throw ConfigError("sampling grid needs height, width >= 2");
  SamplingGrid g{height, width, Tensor({height, width, 2})};
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const Point2 q = tps_transform(params, {lattice_coord(j, width), lattice_coord(i, height)});
      g.coords[(i * width + j) * 2] = q.x;
      g.coords[(i * width + j) * 2 + 1] = q.y;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

WarpFitter::WarpFitter(std::vector<Point2> source, double lambda, Kind kind)
    : source_(std::move(source)), lambda_(lambda), kind_(kind) {
  if (source_.size() < 3) throw ConfigError("warp fitter needs at least 3 control points");
  const std::size_t n = source_.size();
  auto f = std::make_shared<Tensor>(Shape{n + 3, n});
  if (kind_ == Kind::tps) {
    const auto lu = factor_tps(source_, lambda_);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> e(n + 3, 0.0);
      e[j] = 1.0;
      lu.solve(e);
      for (std::size_t r = 0; r < n + 3; ++r) (*f)[r * n + j] = e[r];
    }
  } else {
    const auto lu = factor_affine(source_);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> e = {1.0, source_[j].x, source_[j].y};
      lu.solve(e);
      for (std::size_t k = 0; k < 3; ++k) (*f)[(n + k) * n + j] = e[k];
    }
  }
  matrix_ = std::move(f);
}

TpsParams WarpFitter::fit(std::span<const Point2> target) const {
  const std::size_t n = source_.size();
  if (target.size() != n) throw DimensionError("warp fitter: target count mismatch");
  Tensor t({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    t[2 * i] = target[i].x;
    t[2 * i + 1] = target[i].y;
  }
  Tape tape(false);
  const Var c = fit(tape, tape.input(std::move(t)));
  return TpsParams::from_coefficients(tape.value(c), source_, lambda_);
}

Var WarpFitter::fit(Tape& tape, Var targets) const {
  const auto& tv = tape.value(targets);
  if (tv.shape() != Shape{source_.size(), 2}) {
    throw DimensionError("warp fitter: targets must be [N,2], got " + shape_string(tv.shape()));
  }
  return matmul_const(tape, matrix_, targets);
}

GridBasis::GridBasis(const std::vector<Point2>& source, std::size_t height, std::size_t width)
    : height_(height), width_(width) {
  if (height < 2 || width < 2) throw ConfigError("sampling grid needs height, width >= 2");
  const std::size_t n = source.size(), cols = n + 3;
  auto b = std::make_shared<Tensor>(Shape{height * width, cols});
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const double x = lattice_coord(j, width), y = lattice_coord(i, height);
      double* row = b->data().data() + (i * width + j) * cols;
      for (std::size_t k = 0; k < n; ++k) {
        row[k] = tps_kernel(std::hypot(x - source[k].x, y - source[k].y));
      }
      row[n] = 1.0;
      row[n + 1] = x;
      row[n + 2] = y;
    }
  }
  matrix_ = std::move(b);
}

Var GridBasis::apply(Tape& tape, Var coefficients) const {
  const Var flat = matmul_const(tape, matrix_, coefficients);
  return reshape(tape, flat, {height_, width_, 2});
}

SamplingGrid GridBasis::apply(const Tensor& coefficients) const {
  Tape tape(false);
  const Var g = apply(tape, tape.input(coefficients));
  return {height_, width_, tape.value(g)};
}

Var make_grid(Tape& tape, Var coefficients, const std::vector<Point2>& source,
              std::size_t height, std::size_t width) {
  return GridBasis(source, height, width).apply(tape, coefficients);
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::istringstream expect_line(std::istream& in, const std::string& key) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw IoError("TPS document: expected '" + key + "', found '" + k + "'");
    return ls;
  }
  throw IoError("TPS document: missing '" + key + "'");
}

double parse_double(std::istringstream& ls, const std::string& what) {
  std::string tok;
  if (!(ls >> tok)) throw IoError("TPS document: missing value for " + what);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw IoError("TPS document: bad number '" + tok + "'");
  return v;
}

}  // namespace

void write_tps(std::ostream& out, const TpsParams& p) {
  out << "lambda " << fmt17(p.lambda) << '\n';
  out << "N " << p.size() << '\n';
  for (const auto& s : p.source) out << "source " << fmt17(s.x) << ' ' << fmt17(s.y) << '\n';
  for (const auto& row : p.affine) {
    out << "affine " << fmt17(row[0]) << ' ' << fmt17(row[1]) << ' ' << fmt17(row[2]) << '\n';
  }
  for (const auto& w : p.weights) out << "weight " << fmt17(w[0]) << ' ' << fmt17(w[1]) << '\n';
}

TpsParams read_tps(std::istream& in) {
  TpsParams p;
  {
    auto ls = expect_line(in, "lambda");
    p.lambda = parse_double(ls, "lambda");
  }
  std::size_t n = 0;
  {
    auto ls = expect_line(in, "N");
    if (!(ls >> n) || n < 3) throw IoError("TPS document: N must be an integer >= 3");
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto ls = expect_line(in, "source");
    const double x = parse_double(ls, "source x");
    p.source.push_back({x, parse_double(ls, "source y")});
  }
  for (auto& row : p.affine) {
    auto ls = expect_line(in, "affine");
    for (auto& v : row) v = parse_double(ls, "affine");
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto ls = expect_line(in, "weight");
    const double wx = parse_double(ls, "weight");
    p.weights.push_back({wx, parse_double(ls, "weight")});
  }
  return p;
}

void save_tps(const std::string& path, const TpsParams& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_tps(out, params);
}

TpsParams load_tps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_tps(in);
}

std::vector<Point2> load_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Point2> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Point2 p;
    if (!(ls >> p.x >> p.y)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x y'");
    }
    pts.push_back(p);
  }
  return pts;
}

}  // namespace wd
