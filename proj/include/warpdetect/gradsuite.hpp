#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "warpdetect/gradcheck.hpp"

namespace wd {

/// Names accepted by run_gradcheck, covering every differentiable stage.
std::vector<std::string> gradcheck_ops();

/// Builds a random instance of `op` from `seed` and checks its gradients with
/// respect to inputs and parameters (step 1e-5, tolerance 1e-4 by default).
/// Throws ConfigError for an unknown name.
GradCheckReport run_gradcheck(const std::string& op, std::uint64_t seed,
                              const GradCheckOptions& opts = {});

}  // namespace wd
