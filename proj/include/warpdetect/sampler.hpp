#pragma once

#include "warpdetect/autodiff.hpp"
#include "warpdetect/kernels.hpp"
#include "warpdetect/tps.hpp"

namespace wd {

/// Out-of-range behavior: zeros contributes nothing, clamp repeats the border.
struct PaddingPolicy {
  kernels::PaddingMode mode = kernels::PaddingMode::zeros;
};

/// Align-corners lattice over [-1, 1]^2. Throws ConfigError below 2x2.
SamplingGrid identity_grid(std::size_t height, std::size_t width);

/// input [C,H,W] sampled at grid [H',W',2] -> [C,H',W']; gradients flow to
/// both input and grid.
Var bilinear_sample(Tape& tape, Var input, Var grid, PaddingPolicy padding = {});
Tensor bilinear_sample(const Tensor& input, const SamplingGrid& grid, PaddingPolicy padding = {});

}  // namespace wd
