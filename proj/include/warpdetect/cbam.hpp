#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/parameters.hpp"

namespace wd {

/// Shared bottleneck MLP for the channel gate and the 7x7 conv of the
/// spatial gate.
struct CbamParams {
  std::size_t channels = 0;
  std::size_t reduction = 4;
  Tensor mlp_w0;          // [C/r, C]
  Tensor mlp_w1;          // [C, C/r]
  Tensor spatial_kernel;  // [1, 2, 7, 7], input planes (max, mean)
  Tensor spatial_bias;    // [1]

  /// Throws ConfigError unless channels is a positive multiple of reduction.
  static CbamParams create(std::size_t channels, std::size_t reduction, std::mt19937_64& rng);
  static CbamParams zeros(std::size_t channels, std::size_t reduction);
  void append_parameters(ParameterList& out, const std::string& prefix);
};

/// M_c = sigmoid(W1 relu(W0 avg(F)) + W1 relu(W0 max(F))), shape [C].
Var channel_attention(Tape& tape, const CbamParams& params, Var input);
/// M_s = sigmoid(conv7x7([max_c F; mean_c F])), shape [1,H,W].
Var spatial_attention(Tape& tape, const CbamParams& params, Var input);
/// (M_s applied to (M_c applied to F)), same shape as F.
Var cbam_forward(Tape& tape, const CbamParams& params, Var input);

Tensor channel_attention(const CbamParams& params, const Tensor& input);
Tensor spatial_attention(const CbamParams& params, const Tensor& input);
Tensor cbam_forward(const CbamParams& params, const Tensor& input);

}  // namespace wd
