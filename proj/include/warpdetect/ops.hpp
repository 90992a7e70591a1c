#pragma once

// Differentiable operations recorded on a Tape. Each pairs an explicit
// forward with its analytic backward.

#include <cstddef>
#include <memory>
#include <random>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/kernels.hpp"
#include "warpdetect/tensor.hpp"

namespace wd {

enum class PoolMode { average, max };

// Elementwise; shapes must match exactly.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var add_constant(Tape& t, Var a, const Tensor& c);

Var sigmoid(Tape& t, Var a);
Var relu(Tape& t, Var a);
Var tanh(Tape& t, Var a);

Var reshape(Tape& t, Var a, Shape shape);
/// Scalar sum of all elements, shape [1].
Var sum(Tape& t, Var a);
/// Scalar sum of squares, shape [1].
Var sum_squares(Tape& t, Var a);
/// Sum of a list of single-element values.
Var add_n(Tape& t, const std::vector<Var>& terms);

/// input [C_in,H,W], kernel [C_out,C_in,kH,kW], bias [C_out].
Var conv2d(Tape& t, Var input, Var kernel, Var bias, std::size_t stride, std::size_t padding);
/// Non-overlapping 2x2 average pool; H and W must be even.
Var avg_pool2(Tape& t, Var input);
/// [C,H,W] -> [C]; max mode routes gradient to the first maximum in row-major order.
Var global_pool(Tape& t, Var input, PoolMode mode);
/// [C,H,W] -> [1,H,W], pooling across channels (first maximum on ties).
Var channel_pool(Tape& t, Var input, PoolMode mode);
/// Concatenate [Ca,H,W] and [Cb,H,W] along channels.
Var concat_channels(Tape& t, Var a, Var b);
/// Fully connected: input flattened to n values, weight [out,n], bias [out] -> [out].
Var linear(Tape& t, Var input, Var weight, Var bias);
/// input [C,H,W] * gate[C] broadcast over space.
Var gate_channels(Tape& t, Var input, Var gate);
/// input [C,H,W] * gate[1,H,W] broadcast over channels.
Var gate_spatial(Tape& t, Var input, Var gate);
/// y[rows,cols] = m[rows,inner] * x[inner,cols] for a constant matrix m.
Var matmul_const(Tape& t, std::shared_ptr<const Tensor> m, Var x);

// Non-tape forms used by oracles and inference helpers.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor global_pool(const Tensor& input, PoolMode mode);
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

double sigmoid(double x);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace wd
