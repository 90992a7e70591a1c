#include "warpdetect/harness/stats.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <vector>

#include "warpdetect/errors.hpp"

namespace wd::harness {

double student_t_two_sided_p(double t, double dof) {
  if (!(dof > 0)) throw DomainError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test: series lengths differ");
  if (a.size() < 2) throw DimensionError("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.n = n;
  r.mean_difference = mean;
  if (sd == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(INFINITY, mean);
      r.p = 0.0;
    }
  } else {
    r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p = student_t_two_sided_p(r.t, static_cast<double>(n - 1));
  }
  r.significant_at_05 = r.p < 0.05;
  return r;
}

}  // namespace wd::harness
