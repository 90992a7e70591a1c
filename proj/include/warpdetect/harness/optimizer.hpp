#pragma once

#include <cstddef>
#include <vector>

#include "warpdetect/parameters.hpp"

namespace wd::harness {

struct AdamWConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  void validate() const;
};

/// Adaptive-moment update with decoupled weight decay, one parameter group.
class AdamW {
 public:
  AdamW(ParameterList params, const AdamWConfig& cfg);
  /// grads[k] matches params[k] in size.
  void step(const std::vector<std::vector<double>>& grads);
  std::size_t steps() const { return t_; }
  const ParameterList& parameters() const { return params_; }

 private:
  ParameterList params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace wd::harness
