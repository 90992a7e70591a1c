#pragma once

#include <string>
#include <utility>
#include <vector>

#include "warpdetect/tensor.hpp"

namespace wd {

/// Ordered (name, tensor) view over a module's learnable parameters.
using ParameterList = std::vector<std::pair<std::string, Tensor*>>;

inline std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t->size();
  return n;
}

}  // namespace wd
