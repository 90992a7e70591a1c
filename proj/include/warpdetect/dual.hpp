#pragma once

// Forward-mode dual numbers with a fixed number of partials, used for the
// box-loss gradients where closed-form derivatives are long and fragile.

#include <array>
#include <cmath>
#include <cstddef>

namespace wd {

template <std::size_t N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants
  static Dual variable(double value, std::size_t index) {
    Dual r(value);
    r.d[index] = 1.0;
    return r;
  }

  friend Dual operator+(Dual a, const Dual& b) {
    a.v += b.v;
    for (std::size_t i = 0; i < N; ++i) a.d[i] += b.d[i];
    return a;
  }
  friend Dual operator-(Dual a, const Dual& b) {
    a.v -= b.v;
    for (std::size_t i = 0; i < N; ++i) a.d[i] -= b.d[i];
    return a;
  }
  friend Dual operator-(Dual a) {
    a.v = -a.v;
    for (auto& x : a.d) x = -x;
    return a;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    const double inv = 1.0 / (b.v * b.v);
    for (std::size_t i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv;
    return r;
  }
  friend Dual atan(const Dual& a) {
    Dual r(std::atan(a.v));
    const double s = 1.0 / (1.0 + a.v * a.v);
    for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * s;
    return r;
  }
  // Branch on the value; the derivative follows the selected operand.
  friend Dual max(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }
  friend Dual min(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }
};

template <std::size_t N>
double value_of(const Dual<N>& a) {
  return a.v;
}
inline double value_of(double a) { return a; }

inline double max(double a, double b) { return a >= b ? a : b; }
inline double min(double a, double b) { return a <= b ? a : b; }

}  // namespace wd
