#pragma once

#include <cstddef>
#include <span>

namespace wd::harness {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  bool significant_at_05 = false;
  /// Differences had zero variance: p = 0 when their mean is nonzero, 1 otherwise.
  bool degenerate = false;
  double mean_difference = 0.0;
  std::size_t n = 0;
};

/// Two-sided paired t-test on a - b with n - 1 degrees of freedom. Throws
/// DimensionError unless the series have equal length n >= 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

}  // namespace wd::harness
