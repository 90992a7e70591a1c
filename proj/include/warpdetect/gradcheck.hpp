#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "warpdetect/autodiff.hpp"

namespace wd {

struct GradCheckReport {
  std::string op_name;
  double max_relative_error = 0.0;
  bool pass = false;
  /// Set when some coordinate sat on a kink (one-sided slopes disagree, or
  /// the central estimate moves when the step is halved); such coordinates
  /// are excluded from max_relative_error.
  bool inconclusive = false;
  std::vector<double> per_input_errors;
  std::size_t coordinates_checked = 0;
  std::size_t coordinates_skipped = 0;  // kinks
  /// Failing coordinates whose discrepancy is within the rounding noise of
  /// the finite difference (64 ulp of f over the step); not counted as checked.
  std::size_t coordinates_unresolved = 0;
};

/// Builds a single-element output on the tape from the given input Vars.
using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Per-input cap on the number of probed coordinates (0 = all), chosen
  /// with `seed` when an input is larger.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
};

/// Central finite differences (f(x+h) - f(x-h)) / 2h against the tape's
/// analytic gradient; relative error |a-n| / max(|a|, |n|, 1e-8).
GradCheckReport gradcheck(const std::string& name, const ScalarFunction& fn,
                          const std::vector<Tensor>& inputs, const GradCheckOptions& opts = {});

/// Builds a single-element output from tensors read through Tape::parameter.
using ParameterFunction = std::function<Var(Tape&)>;

/// Same check for parameters: each tensor is perturbed in place and restored.
GradCheckReport gradcheck_parameters(const std::string& name, const ParameterFunction& fn,
                                     const std::vector<Tensor*>& params,
                                     const GradCheckOptions& opts = {});

}  // namespace wd
